use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Edge type of an unordered pair `(i, j)` with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeType {
    None,
    Undirected,
    /// `i → j`
    Forward,
    /// `j → i`
    Backward,
}

/// Separation sets keyed by `(min, max)` node pair.
pub type SepSets = BTreeMap<(usize, usize), Vec<usize>>;

/// Partially directed graph over `K` nodes with separation sets.
///
/// `marks[i * K + j]` is set when the edge between `i` and `j` may be
/// traversed from `i` to `j`: both marks for `i − j`, only the `(i, j)`
/// mark for `i → j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cpdag {
    names: Vec<String>,
    marks: Vec<bool>,
    sepsets: SepSets,
    warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub from: String,
    pub to: String,
    pub directed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SepSetRecord {
    pub x: String,
    pub y: String,
    pub set: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub nodes: Vec<String>,
    pub edges: Vec<EdgeRecord>,
    pub sepsets: Vec<SepSetRecord>,
}

impl Cpdag {
    pub fn empty(names: Vec<String>) -> Self {
        let k = names.len();
        Self {
            names,
            marks: vec![false; k * k],
            sepsets: SepSets::new(),
            warnings: Vec::new(),
        }
    }

    /// Empty graph with names `1..=k`.
    pub fn with_nodes(k: usize) -> Self {
        Self::empty((1..=k).map(|i| i.to_string()).collect())
    }

    /// Complete undirected graph.
    pub fn complete(names: Vec<String>) -> Self {
        let mut g = Self::empty(names);
        let k = g.k();
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    g.marks[i * k + j] = true;
                }
            }
        }
        g
    }

    pub fn k(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn sepsets(&self) -> &SepSets {
        &self.sepsets
    }

    pub fn sepset(&self, i: usize, j: usize) -> Option<&Vec<usize>> {
        self.sepsets.get(&(i.min(j), i.max(j)))
    }

    pub fn set_sepset(&mut self, i: usize, j: usize, set: Vec<usize>) {
        self.sepsets.insert((i.min(j), i.max(j)), set);
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub(crate) fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    #[inline]
    fn mark(&self, i: usize, j: usize) -> bool {
        self.marks[i * self.k() + j]
    }

    #[inline]
    fn set_mark(&mut self, i: usize, j: usize, v: bool) {
        let k = self.k();
        self.marks[i * k + j] = v;
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.mark(i, j) || self.mark(j, i)
    }

    /// `i → j`.
    pub fn is_directed(&self, i: usize, j: usize) -> bool {
        self.mark(i, j) && !self.mark(j, i)
    }

    pub fn is_undirected(&self, i: usize, j: usize) -> bool {
        self.mark(i, j) && self.mark(j, i)
    }

    pub fn add_undirected(&mut self, i: usize, j: usize) {
        assert_ne!(i, j, "self-loops are not allowed");
        self.set_mark(i, j, true);
        self.set_mark(j, i, true);
    }

    /// Sets the edge between `i` and `j` to `i → j`.
    pub fn add_directed(&mut self, i: usize, j: usize) {
        assert_ne!(i, j, "self-loops are not allowed");
        self.set_mark(i, j, true);
        self.set_mark(j, i, false);
    }

    pub fn remove_edge(&mut self, i: usize, j: usize) {
        self.set_mark(i, j, false);
        self.set_mark(j, i, false);
    }

    pub fn edge_type(&self, i: usize, j: usize) -> EdgeType {
        let (a, b) = (i.min(j), i.max(j));
        match (self.mark(a, b), self.mark(b, a)) {
            (false, false) => EdgeType::None,
            (true, true) => EdgeType::Undirected,
            (true, false) => EdgeType::Forward,
            (false, true) => EdgeType::Backward,
        }
    }

    /// Nodes adjacent to `i`, ascending.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.k()).filter(|&j| j != i && self.adjacent(i, j)).collect()
    }

    /// Nodes `j` with `j → i`.
    pub fn parents(&self, i: usize) -> Vec<usize> {
        (0..self.k()).filter(|&j| self.is_directed(j, i)).collect()
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        (0..self.k()).filter(|&j| self.is_directed(i, j)).collect()
    }

    /// Edges in lexicographic order; directed edges point `from → to`.
    pub fn edges(&self) -> Vec<(usize, usize, bool)> {
        let mut out = Vec::new();
        for i in 0..self.k() {
            for j in (i + 1)..self.k() {
                match self.edge_type(i, j) {
                    EdgeType::None => {}
                    EdgeType::Undirected => out.push((i, j, false)),
                    EdgeType::Forward => out.push((i, j, true)),
                    EdgeType::Backward => out.push((j, i, true)),
                }
            }
        }
        out
    }

    pub fn undirected_count(&self) -> usize {
        self.edges().iter().filter(|e| !e.2).count()
    }

    pub fn is_fully_directed(&self) -> bool {
        self.undirected_count() == 0
    }

    /// Same edge set and orientation, ignoring separation sets and warnings.
    pub fn same_edges(&self, other: &Cpdag) -> bool {
        self.k() == other.k() && self.marks == other.marks
    }

    /// Topological order of the directed part (Kahn's algorithm, always
    /// taking the smallest available index). `None` if it has a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        use std::cmp::Reverse;
        use std::collections::BinaryHeap;
        let k = self.k();
        let mut indegree: Vec<usize> = (0..k).map(|i| self.parents(i).len()).collect();
        let mut heap: BinaryHeap<Reverse<usize>> = (0..k).filter(|&i| indegree[i] == 0).map(Reverse).collect();
        let mut order = Vec::with_capacity(k);
        while let Some(Reverse(v)) = heap.pop() {
            order.push(v);
            for c in self.children(v) {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    heap.push(Reverse(c));
                }
            }
        }
        (order.len() == k).then_some(order)
    }

    pub fn has_directed_cycle(&self) -> bool {
        self.topological_order().is_none()
    }

    /// Whether `to` can be reached from `from` along directed edges.
    pub fn directed_path_exists(&self, from: usize, to: usize) -> bool {
        let mut seen = vec![false; self.k()];
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            if v == to {
                return true;
            }
            if std::mem::replace(&mut seen[v], true) {
                continue;
            }
            stack.extend(self.children(v).into_iter().filter(|&c| !seen[c]));
        }
        false
    }

    pub fn to_document(&self) -> GraphDocument {
        let name = |i: usize| self.names[i].clone();
        GraphDocument {
            nodes: self.names.clone(),
            edges: self
                .edges()
                .into_iter()
                .map(|(from, to, directed)| EdgeRecord {
                    from: name(from),
                    to: name(to),
                    directed,
                })
                .collect(),
            sepsets: self
                .sepsets
                .iter()
                .map(|(&(x, y), set)| SepSetRecord {
                    x: name(x),
                    y: name(y),
                    set: set.iter().map(|&s| name(s)).collect(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &GraphDocument) -> Result<Self> {
        let mut g = Cpdag::empty(doc.nodes.clone());
        let index = |n: &str| -> Result<usize> {
            doc.nodes
                .iter()
                .position(|m| m == n)
                .ok_or_else(|| Error::invalid(format!("unknown node '{n}' in graph document")))
        };
        for e in &doc.edges {
            let (a, b) = (index(&e.from)?, index(&e.to)?);
            if a == b {
                return Err(Error::invalid("self-loop in graph document"));
            }
            if e.directed {
                g.add_directed(a, b);
            } else {
                g.add_undirected(a, b);
            }
        }
        for s in &doc.sepsets {
            let set = s.set.iter().map(|n| index(n)).collect::<Result<Vec<_>>>()?;
            g.set_sepset(index(&s.x)?, index(&s.y)?, set);
        }
        Ok(g)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("graph document serialises")
    }

    /// DOT digraph; undirected edges carry `dir=none`.
    pub fn to_dot(&self) -> String {
        let quote = |s: &str| format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""));
        let mut out = String::from("digraph cpdag {\n");
        for n in &self.names {
            out.push_str(&format!("  {};\n", quote(n)));
        }
        for (a, b, directed) in self.edges() {
            let attr = if directed { "" } else { " [dir=none]" };
            out.push_str(&format!("  {} -> {}{};\n", quote(&self.names[a]), quote(&self.names[b]), attr));
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_bookkeeping() {
        let mut g = Cpdag::with_nodes(3);
        g.add_undirected(0, 1);
        g.add_directed(2, 1);
        assert_eq!(g.edge_type(0, 1), EdgeType::Undirected);
        assert_eq!(g.edge_type(1, 2), EdgeType::Backward);
        assert_eq!(g.edges(), vec![(0, 1, false), (2, 1, true)]);
        assert_eq!(g.parents(1), vec![2]);
        assert!(!g.is_fully_directed());
        g.remove_edge(0, 1);
        assert!(g.is_fully_directed());
        assert_eq!(g.topological_order(), Some(vec![0, 2, 1]));
    }

    #[test]
    fn cycle_detection() {
        let mut g = Cpdag::with_nodes(3);
        g.add_directed(0, 1);
        g.add_directed(1, 2);
        assert!(!g.has_directed_cycle());
        assert!(g.directed_path_exists(0, 2));
        g.add_directed(2, 0);
        assert!(g.has_directed_cycle());
    }

    #[test]
    fn dot_and_json() {
        let mut g = Cpdag::with_nodes(3);
        g.add_directed(0, 2);
        g.add_undirected(1, 2);
        g.set_sepset(0, 1, vec![]);
        let dot = g.to_dot();
        assert!(dot.contains("\"1\" -> \"3\";"));
        assert!(dot.contains("\"2\" -> \"3\" [dir=none];"));
        let back = Cpdag::from_document(&serde_json::from_str(&g.to_json()).unwrap()).unwrap();
        assert_eq!(back, g);
    }
}
