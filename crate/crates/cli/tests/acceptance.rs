//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tsdag::irf::{impulse_response, irf_linearized, IrfMode, IrfRequest, Marginals};
use tsdag::panel::{build_lagged, Panel};
use tsdag::pc::{self, Cpdag, PcConfig};
use tsdag::rank_scaling::{scaling_matrix, ScalingMatrix};
use tsdag::sim::{generate_cluster_var, run_benchmark, BenchConfig, BenchRow, LambdaPolicy, SimDesign, Structure};
use tsdag::sparse_precision::{
    clime_column, lasso_neighborhood, refit_precision, var_params, Method, PrecisionConfig, SupportPattern,
};
use tsdag::svar::structural_coefficients;
use tsdag::tuning::{cross_validate, CvPlan};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_spd(d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &g * g.transpose() / d as f64 + DMatrix::identity(d, d) * 0.2
}

/// Dense inverse via Gauss-Jordan elimination with partial pivoting; shares
/// no code with the library's solvers.
fn gauss_jordan_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    let mut inv = DMatrix::<f64>::identity(n, n);
    for c in 0..n {
        let piv = (c..n).max_by(|&x, &y| a[(x, c)].abs().total_cmp(&a[(y, c)].abs())).unwrap();
        a.swap_rows(c, piv);
        inv.swap_rows(c, piv);
        let d = a[(c, c)];
        for j in 0..n {
            a[(c, j)] /= d;
            inv[(c, j)] /= d;
        }
        for r in 0..n {
            if r != c {
                let f = a[(r, c)];
                if f != 0.0 {
                    for j in 0..n {
                        a[(r, j)] -= f * a[(c, j)];
                        inv[(r, j)] -= f * inv[(c, j)];
                    }
                }
            }
        }
    }
    inv
}

fn criterion_1() -> Outcome {
    let mut worst = 0.0_f64;
    for seed in 0..100 {
        let s = random_spd(10, seed);
        let oracle = gauss_jordan_inverse(&s);
        let scaling = ScalingMatrix::new(s, 5, 1).map_err(|e| e.to_string())?;
        let fit = refit_precision(&scaling, &SupportPattern::full(10)).map_err(|e| e.to_string())?;
        worst = worst.max((fit.theta() - &oracle).abs().max());
    }
    check(worst <= 1e-8, format!("max |refit - dense inverse| = {worst:.2e} over 100 seeds (tol 1e-8)"))
}

/// First-order conditions of `½x'Σx − Σ_{·i}'x + λ|x|₁` with `x_i = 0`,
/// evaluated directly from the definition.
fn lasso_foc_violation(s: &DMatrix<f64>, i: usize, lambda: f64, x: &DVector<f64>) -> f64 {
    let mut worst = x[i].abs();
    for j in (0..s.nrows()).filter(|&j| j != i) {
        let grad: f64 = (0..s.nrows()).map(|k| s[(j, k)] * x[k]).sum::<f64>() - s[(j, i)];
        let v = if x[j] != 0.0 {
            (grad + lambda * x[j].signum()).abs()
        } else {
            (grad.abs() - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

fn criterion_2() -> Outcome {
    let mut worst = 0.0_f64;
    for seed in 0..50 {
        let s = random_spd(20, 1000 + seed);
        let lambda = 0.02 + 0.01 * (seed % 5) as f64;
        for i in 0..20 {
            let x = lasso_neighborhood(&s, i, lambda, 1e-8, 10_000).map_err(|e| e.to_string())?;
            worst = worst.max(lasso_foc_violation(&s, i, lambda, &x));
        }
    }
    check(worst <= 1e-6, format!("max first-order-condition violation {worst:.2e} on 50 x 20 columns (tol 1e-6)"))
}

fn criterion_3() -> Outcome {
    let (mut worst_con, mut worst_obj) = (0.0_f64, f64::NEG_INFINITY);
    for seed in 0..20 {
        let d = 6 + (seed % 3) as usize;
        let s = random_spd(d, 2000 + seed);
        let inv = gauss_jordan_inverse(&s);
        let lambda = 0.05 + 0.05 * (seed % 4) as f64;
        for i in 0..d {
            let w = clime_column(&s, i, lambda, 1e-9).map_err(|e| e.to_string())?;
            let r = &s * &w - DVector::from_fn(d, |r, _| f64::from(r == i));
            worst_con = worst_con.max(r.amax() - lambda);
            // The dense inverse column satisfies the constraint with zero slack.
            let dense_obj: f64 = inv.column(i).iter().map(|v| v.abs()).sum();
            worst_obj = worst_obj.max(w.iter().map(|v| v.abs()).sum::<f64>() - dense_obj);
        }
    }
    check(
        worst_con <= 1e-8 && worst_obj <= 1e-8,
        format!("max constraint excess {worst_con:.2e} (tol 1e-8), max objective gap to dense {worst_obj:.2e}"),
    )
}

fn directed(k: usize, edges: &[(usize, usize)]) -> Cpdag {
    let mut g = Cpdag::with_nodes(k);
    for &(i, j) in edges {
        g.add_directed(i, j);
    }
    g
}

fn undirected(k: usize, edges: &[(usize, usize)]) -> Cpdag {
    let mut g = Cpdag::with_nodes(k);
    for &(i, j) in edges {
        g.add_undirected(i, j);
    }
    g
}

fn criterion_4() -> Outcome {
    let m = |k: usize, rows: &[f64]| DMatrix::from_row_slice(k, k, rows);
    let cases: Vec<(&str, DMatrix<f64>, Cpdag)> = vec![
        ("chain", m(3, &[1., 0., 0., 1., 1., 0., 1., 1., 1.]), undirected(3, &[(0, 1), (1, 2)])),
        ("common cause", m(3, &[1., 1., 0., 0., 1., 0., 0., 1., 1.]), undirected(3, &[(0, 1), (1, 2)])),
        ("v-structure", m(3, &[1., 0., 0., 0., 1., 0., 1., 1., 1.]), directed(3, &[(0, 2), (1, 2)])),
        (
            "diamond 1",
            m(4, &[1., 0., 0., 0., 0., 1., 0., 0., 1., 1., 1., 0., 1., 1., 0., 1.]),
            directed(4, &[(0, 2), (1, 2), (0, 3), (1, 3)]),
        ),
        (
            "diamond 2",
            m(4, &[1., 0., 0., 0., 0., 1., 0., 0., 1., 1., 1., 0., 1., 1., 1., 1.]),
            directed(4, &[(0, 2), (1, 2), (2, 3)]),
        ),
    ];
    let cfg = PcConfig::new(0.01).map_err(|e| e.to_string())?;
    let mut wrong = Vec::new();
    for (label, h, expected) in cases {
        let sigma = &h * h.transpose();
        let g = pc::pc(&sigma, pc::default_names(h.nrows()), 1_000_000, &cfg).map_err(|e| e.to_string())?;
        if g.edges() != expected.edges() {
            wrong.push(format!("{label}: got {:?}", g.edges()));
        }
    }
    check(wrong.is_empty(), if wrong.is_empty() { "all five reference classes reproduced".into() } else { wrong.join("; ") })
}

fn design(a: f64, n_clusters: usize) -> SimDesign {
    SimDesign {
        structure: Structure::VStructure,
        a,
        n_clusters,
        n: 5000,
        seed: 1000,
    }
}

fn bench(d: &SimDesign, policy: LambdaPolicy, reps: usize) -> Result<BenchRow, String> {
    run_benchmark(d, &BenchConfig::new(Method::Lasso, policy, reps)).map_err(|e| e.to_string())
}

fn criterion_5(row: &BenchRow) -> Outcome {
    let shd = row.shd.mean;
    check(shd <= 0.5, format!("mean SHD {shd:.3} (se {:.3}) over {} reps (need <= 0.5)", row.shd.se, row.reps.len()))
}

fn criterion_6(row: &BenchRow, dense: &BenchRow) -> Outcome {
    let fp = row.fp.map(|s| s.mean).unwrap_or(f64::NAN);
    let fn_ = row.fn_.map(|s| s.mean).unwrap_or(f64::NAN);
    let dense_exact = dense.reps.iter().all(|r| {
        r.confusion
            .as_ref()
            .is_some_and(|c| c.tp_fp == 72 && c.fp == 54 && c.fn_ == 0)
    });
    check(
        fp <= 1.0 && fn_ <= 0.5 && dense_exact,
        format!(
            "mean FP {fp:.3} (<= 1), mean FN {fn_:.3} (<= 0.5); dense 72/54/0 in every one of {} reps: {dense_exact}",
            dense.reps.len()
        ),
    )
}

fn criterion_7() -> Outcome {
    let d = design(0.75, 3);
    let zero_a = bench(&d, LambdaPolicy::ZeroA, 50)?;
    let full = bench(&d, LambdaPolicy::Cv(0.5), 50)?;
    check(
        zero_a.shd.mean >= 5.0 && full.shd.mean <= 1.0,
        format!(
            "A=0 mean SHD {:.3} (>= 5), full method at half the CV penalty {:.3} (<= 1)",
            zero_a.shd.mean, full.shd.mean
        ),
    )
}

fn criterion_8(row: &BenchRow) -> Outcome {
    let (a, s) = (row.a_dist.mean, row.sigma_dist.mean);
    check(a <= 0.2 && s <= 0.1, format!("mean |A_hat - A|_op {a:.4} (<= 0.2), mean |Sigma_eps_hat - Sigma_eps|_op {s:.4} (<= 0.1)"))
}

fn criterion_9() -> Outcome {
    let row = bench(&design(0.75, 50), LambdaPolicy::Cv(1.0), 5)?;
    let per_rep: Vec<usize> = row.reps.iter().map(|r| r.shd).collect();
    check(row.shd.mean <= 2.0, format!("K=150 mean SHD {:.3} over 5 reps {per_rep:?} (need <= 2)", row.shd.mean))
}

fn criterion_10() -> Outcome {
    let (_, truth) = generate_cluster_var(&SimDesign {
        structure: Structure::VStructure,
        a: 0.25,
        n_clusters: 1,
        n: 10,
        seed: 7,
    })
    .map_err(|e| e.to_string())?;
    let dag = directed(3, &[(0, 2), (1, 2)]);
    let model = structural_coefficients(&truth.sigma_eps_true, &dag)
        .and_then(|m| m.with_autoregression(truth.a_true.clone()))
        .map_err(|e| e.to_string())?;
    let mut worst_ratio = 0.0_f64;
    let mut zero_ok = true;
    for shock in 0..3 {
        for response in 0..3 {
            let req = |mode: IrfMode, delta: f64| IrfRequest {
                shock,
                response,
                delta,
                horizon: 10,
                draws: 10_000,
                seed: 11,
                mode,
            };
            let lin = irf_linearized(&model, &req(IrfMode::Linearized { unit_variance: false }, 1.0))
                .map_err(|e| e.to_string())?;
            let mc = impulse_response(&model, &Marginals::Gaussian, &req(IrfMode::Unconditional, 1.0))
                .map_err(|e| e.to_string())?;
            let se = mc.stderr.clone().unwrap_or_default();
            for s in 0..=10 {
                let tol = 3.0 * se[s] + 1e-12;
                worst_ratio = worst_ratio.max((mc.values[s] - lin.values[s]).abs() / tol);
            }
            let zero = impulse_response(&model, &Marginals::Gaussian, &req(IrfMode::Unconditional, 0.0))
                .map_err(|e| e.to_string())?;
            zero_ok &= zero.values.iter().all(|&v| v == 0.0);
        }
    }
    check(
        worst_ratio <= 1.0 && zero_ok,
        format!("max |MC - linearized| / (3 se + 1e-12) = {worst_ratio:.3} over 9 pairs x 11 horizons; zero shock exactly zero: {zero_ok}"),
    )
}

struct PipelineOutput {
    sigma: DMatrix<f64>,
    theta: DMatrix<f64>,
    lambda: f64,
    cpdag: Vec<(usize, usize, bool)>,
    d: DMatrix<f64>,
}

fn pipeline(panel: &Panel) -> tsdag::Result<PipelineOutput> {
    let base = PrecisionConfig::new(Method::Lasso, 0.1);
    let cv = cross_validate(panel, 1, &base, &CvPlan::default())?;
    let cfg = PrecisionConfig::new(Method::Lasso, cv.lambda);
    let w = build_lagged(panel, 1)?;
    let scaling = scaling_matrix(&w)?;
    let fit = cfg.fit(&scaling)?;
    let params = var_params(&fit)?;
    let g = pc::pc(&params.sigma_eps, panel.names().to_vec(), w.rows(), &PcConfig::default())?;
    let d = structural_coefficients(&params.sigma_eps, &g)?.d;
    Ok(PipelineOutput {
        sigma: scaling.sigma().clone(),
        theta: fit.theta().clone(),
        lambda: cv.lambda,
        cpdag: g.edges(),
        d,
    })
}

fn bits(m: &DMatrix<f64>) -> Vec<u64> {
    m.iter().map(|v| v.to_bits()).collect()
}

fn criterion_11() -> Outcome {
    let (panel, _) = generate_cluster_var(&SimDesign {
        structure: Structure::VStructure,
        a: 0.25,
        n_clusters: 2,
        n: 2000,
        seed: 5,
    })
    .map_err(|e| e.to_string())?;
    let transformed = panel.map_values(f64::exp).map_err(|e| e.to_string())?;
    let a = pipeline(&panel).map_err(|e| e.to_string())?;
    let b = pipeline(&transformed).map_err(|e| e.to_string())?;
    let same = bits(&a.sigma) == bits(&b.sigma)
        && bits(&a.theta) == bits(&b.theta)
        && a.lambda.to_bits() == b.lambda.to_bits()
        && a.cpdag == b.cpdag
        && bits(&a.d) == bits(&b.d);
    check(same, format!("exp() of every column: Sigma, Theta, CV lambda, CPDAG and D bitwise identical: {same}"))
}

fn tsdag_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tsdag"))
}

fn run_cli(args: &[&str], out: &Path) -> Result<(), String> {
    let status = tsdag_bin()
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "error")
        .stdout(Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    if status.success() {
        Ok(())
    } else {
        Err(format!("tsdag {} exited with {status}", args.join(" ")))
    }
}

fn snapshot(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        files.insert(name, fs::read(&path).map_err(|e| e.to_string())?);
    }
    Ok(files)
}

fn criterion_12() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let (panel, _) = generate_cluster_var(&SimDesign {
        structure: Structure::VStructure,
        a: 0.25,
        n_clusters: 2,
        n: 1500,
        seed: 3,
    })
    .map_err(|e| e.to_string())?;
    let data = root.join("data.csv");
    let mut buf = Vec::new();
    panel.write_csv(&mut buf).map_err(|e| e.to_string())?;
    fs::write(&data, buf).map_err(|e| e.to_string())?;
    let input = data.to_str().unwrap().to_owned();

    // irf reads the model written by dag in its own output directory.
    let model_dir = root.join("model");
    run_cli(&["dag", "--input", &input, "--cv"], &model_dir)?;
    let model = model_dir.join("model.json").to_str().unwrap().to_owned();

    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("estimate", vec!["estimate", "--input", &input, "--cv"]),
        ("dag", vec!["dag", "--input", &input, "--lambda", "0.02", "--restricted-pc"]),
        ("irf-mc", vec!["irf", "--model", &model, "--input", &input, "--shock", "x1", "--draws", "2000"]),
        ("irf-cond", vec!["irf", "--model", &model, "--input", &input, "--shock", "x2", "--mode", "conditional", "--draws", "500"]),
        ("irf-lin", vec!["irf", "--model", &model, "--shock", "x1", "--mode", "linearized"]),
        ("cv", vec!["cv", "--input", &input]),
        ("aic", vec!["aic", "--input", &input, "--lambda", "0.02", "--max-lags", "3"]),
        ("simulate", vec!["simulate", "--reps", "3", "--n", "600", "--policy", "cv,dense,a0", "--save-panel"]),
    ];
    let mut mismatched = Vec::new();
    for (label, args) in &commands {
        let first = root.join(format!("{label}-1"));
        let second = root.join(format!("{label}-2"));
        let replay = root.join(format!("{label}-3"));
        run_cli(args, &first)?;
        run_cli(args, &second)?;
        let manifest = first.join("manifest.json");
        run_cli(&["rerun", "--manifest", manifest.to_str().unwrap()], &replay)?;
        let a = snapshot(&first)?;
        if a.len() < 2 || a != snapshot(&second)? || a != snapshot(&replay)? {
            mismatched.push(label.to_string());
        }
    }
    check(
        mismatched.is_empty(),
        if mismatched.is_empty() {
            format!("{} command lines: repeat runs and manifest replays byte-identical", commands.len())
        } else {
            format!("outputs differ for {mismatched:?}")
        },
    )
}

fn main() {
    let mut failures = 0;
    let mut report = |n: usize, start: Instant, outcome: Outcome| {
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {n:>2} PASS ({secs:.1}s): {d}"),
            Err(d) => {
                failures += 1;
                println!("criterion {n:>2} FAIL ({secs:.1}s): {d}");
            }
        }
    };

    let t = Instant::now();
    report(1, t, criterion_1());
    let t = Instant::now();
    report(2, t, criterion_2());
    let t = Instant::now();
    report(3, t, criterion_3());
    let t = Instant::now();
    report(4, t, criterion_4());

    let t = Instant::now();
    let low = bench(&design(0.25, 3), LambdaPolicy::Cv(1.0), 50);
    let dense = bench(&design(0.25, 3), LambdaPolicy::Dense, 50);
    match (&low, &dense) {
        (Ok(row), Ok(dense)) => {
            report(5, t, criterion_5(row));
            report(6, t, criterion_6(row, dense));
            report(8, t, criterion_8(row));
        }
        (Err(e), _) | (_, Err(e)) => {
            for n in [5, 6, 8] {
                report(n, t, Err(e.clone()));
            }
        }
    }
    let t = Instant::now();
    report(7, t, criterion_7());
    let t = Instant::now();
    report(9, t, criterion_9());
    let t = Instant::now();
    report(10, t, criterion_10());
    let t = Instant::now();
    report(11, t, criterion_11());
    let t = Instant::now();
    report(12, t, criterion_12());

    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}

