use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

/// Everything needed to reproduce a run: the argument vector (minus `--out`),
/// the effective parameters and the files written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub parameters: Value,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Manifest {
    pub fn new(command: &str, argv: Vec<String>) -> Self {
        Self {
            tool: "tsdag".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            argv,
            parameters: Value::Null,
            outputs: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }
}

/// Drops `--out <dir>` / `--out=<dir>` so manifests do not depend on where
/// the outputs went.
pub fn strip_out(argv: &[String]) -> Vec<String> {
    let mut kept = Vec::with_capacity(argv.len());
    let mut skip = false;
    for a in argv {
        if skip {
            skip = false;
        } else if a == "--out" {
            skip = true;
        } else if !a.starts_with("--out=") {
            kept.push(a.clone());
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_flag_is_removed_in_both_spellings() {
        let argv: Vec<String> = ["estimate", "--out", "x", "--lags", "1", "--out=y"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(strip_out(&argv), vec!["estimate", "--lags", "1"]);
    }
}
