use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde_json::json;
use tsdag::export::{write_matrix_csv, MatrixDocument, NamedMatrix};
use tsdag::irf::{impulse_response, write_irf_csv, IrfMode, IrfRequest, Marginals};
use tsdag::panel::{build_lagged, Panel};
use tsdag::pc::{self, PcConfig};
use tsdag::rank_scaling::scaling_matrix;
use tsdag::sim::{generate_cluster_var, run_benchmark, write_bench_csv, BenchConfig, LambdaPolicy, SimDesign, Structure};
use tsdag::sparse_precision::{var_params, PrecisionConfig};
use tsdag::svar::{structural_coefficients, StructuralModel};
use tsdag::tuning::{aic_lag_order, cross_validate, CvPlan, CvResult};
use tsdag::linalg::Matrix;

use crate::args::{AicArgs, Cli, Command, DataArgs, IrfArgs, IrfModeArg, RerunArgs, RunArgs, SimArgs};
use crate::error::{CliError, CliResult};
use crate::manifest::{strip_out, Manifest, MANIFEST_FILE};

pub const MODEL_FILE: &str = "model.json";

/// Runs a parsed command line; `argv` excludes the program name.
pub fn run(cli: Cli, argv: &[String]) -> CliResult<()> {
    let recorded = strip_out(argv);
    match cli.command {
        Command::Estimate(a) => estimate(&a, recorded),
        Command::Dag(a) => dag(&a, recorded),
        Command::Irf(a) => irf(&a, recorded),
        Command::Cv(a) => cv(&a, recorded),
        Command::Aic(a) => aic(&a, recorded),
        Command::Simulate(a) => simulate(&a, recorded),
        Command::Rerun(a) => rerun(&a),
    }
}

fn rerun(args: &RerunArgs) -> CliResult<()> {
    let manifest = Manifest::read(&args.manifest)?;
    if manifest.argv.first().map(String::as_str) == Some("rerun") {
        return Err(CliError::usage("manifest records a rerun; nothing to replay"));
    }
    let mut argv = manifest.argv.clone();
    argv.push("--out".into());
    argv.push(args.out.display().to_string());
    let cli = Cli::try_parse_from(std::iter::once("tsdag".to_string()).chain(argv.iter().cloned()))
        .map_err(|e| CliError::usage(format!("manifest arguments no longer parse: {e}")))?;
    run(cli, &argv)
}

struct Outputs {
    dir: PathBuf,
    manifest: Manifest,
}

impl Outputs {
    fn create(dir: &Path, manifest: Manifest) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|source| CliError::Io { path, source })?;
        self.manifest.outputs.push(name.to_owned());
        Ok(())
    }

    fn write_matrix(&mut self, name: &str, rows: &[String], cols: &[String], m: &Matrix) -> CliResult<()> {
        let mut buf = Vec::new();
        write_matrix_csv(&mut buf, rows, cols, m)?;
        self.write(name, &buf)
    }

    fn write_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(tsdag::Error::from)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Removes an output left behind by an earlier run in the same directory.
    fn remove_stale(&self, name: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        match fs::remove_file(&path) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(source) => Err(CliError::Io { path, source }),
        }
    }

    fn finish(mut self) -> CliResult<()> {
        self.manifest.outputs.push(MANIFEST_FILE.into());
        let manifest = self.manifest.clone();
        let mut text = serde_json::to_string_pretty(&manifest).map_err(tsdag::Error::from)?;
        text.push('\n');
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, text).map_err(|source| CliError::Io { path, source })
    }
}

fn load_panel(input: &Path, diff: &[String]) -> CliResult<Panel> {
    if !input.exists() {
        return Err(CliError::Io {
            path: input.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
        });
    }
    let panel = Panel::from_csv_path(input)?;
    if diff.is_empty() {
        return Ok(panel);
    }
    let cols = panel.column_indices(diff)?;
    Ok(panel.difference(&cols)?)
}

fn load_data(data: &DataArgs) -> CliResult<Panel> {
    load_panel(&data.input, &data.diff)
}

fn check_lags(p: usize) -> CliResult<()> {
    if p == 0 {
        return Err(CliError::usage("--lags must be at least 1"));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> CliResult<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::usage(format!("--alpha must lie strictly between 0 and 1, got {alpha}")));
    }
    Ok(())
}

fn fixed_config(method: tsdag::sparse_precision::Method, lambda: f64, tau: Option<f64>) -> CliResult<PrecisionConfig> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(CliError::usage(format!("--lambda must be positive, got {lambda}")));
    }
    let tau = tau.unwrap_or(2.0 * lambda);
    if !(tau >= lambda && tau.is_finite()) {
        return Err(CliError::usage(format!("--tau ({tau}) must be at least --lambda ({lambda})")));
    }
    Ok(PrecisionConfig::new(method, lambda).with_tau(tau))
}

/// The effective estimator settings, cross-validated when requested.
fn resolve_config(args: &RunArgs, panel: &Panel) -> CliResult<(PrecisionConfig, Option<CvResult>)> {
    check_lags(args.lags)?;
    check_alpha(args.alpha)?;
    let method = args.method.into();
    if !args.cv {
        let lambda = args
            .lambda
            .ok_or_else(|| CliError::usage("--lambda is required unless --cv is given"))?;
        return Ok((fixed_config(method, lambda, args.tau)?, None));
    }
    if args.lambda.is_some() || args.tau.is_some() {
        return Err(CliError::usage("--cv selects the penalty and threshold; drop --lambda and --tau"));
    }
    let base = PrecisionConfig::new(method, tsdag::tuning::LAMBDA_START);
    let result = cross_validate(panel, args.lags, &base, &cv_plan(args.folds)?)?;
    let cfg = PrecisionConfig::new(method, result.lambda).with_tau(result.tau);
    Ok((cfg, Some(result)))
}

fn cv_plan(folds: usize) -> CliResult<CvPlan> {
    if folds < 2 {
        return Err(CliError::usage("--folds must be at least 2"));
    }
    Ok(CvPlan {
        n_folds: folds,
        lambda_grid: None,
    })
}

fn run_parameters(args: &RunArgs, cfg: &PrecisionConfig, cv: &Option<CvResult>, panel: &Panel) -> serde_json::Value {
    json!({
        "input": args.data.input.display().to_string(),
        "diff": args.data.diff,
        "n": panel.n(),
        "k": panel.k(),
        "lags": args.lags,
        "method": cfg.method.to_string(),
        "lambda": cfg.lambda,
        "tau": cfg.tau,
        "psd_floor": cfg.psd_floor,
        "cv": args.cv,
        "folds": args.folds,
        "lambda0": cv.as_ref().and_then(|c| c.lambda0),
        "alpha": args.alpha,
        "restricted_pc": args.restricted_pc,
        "seed": args.seed,
    })
}

struct Fitted {
    panel: Panel,
    lag_names: Vec<String>,
    rows: usize,
    sigma: Matrix,
    theta: tsdag::sparse_precision::SparsePrecision,
    params: tsdag::sparse_precision::VarParams,
    cfg: PrecisionConfig,
    cv: Option<CvResult>,
}

fn fit_pipeline(args: &RunArgs) -> CliResult<Fitted> {
    let panel = load_data(&args.data)?;
    let (cfg, cv) = resolve_config(args, &panel)?;
    let w = build_lagged(&panel, args.lags)?;
    let scaling = scaling_matrix(&w)?;
    let theta = cfg.fit(&scaling)?;
    let params = var_params(&theta)?;
    Ok(Fitted {
        lag_names: w.names().to_vec(),
        rows: w.rows(),
        sigma: scaling.sigma().clone(),
        panel,
        theta,
        params,
        cfg,
        cv,
    })
}

fn estimate(args: &RunArgs, argv: Vec<String>) -> CliResult<()> {
    let f = fit_pipeline(args)?;
    let mut out = Outputs::create(&args.out, Manifest::new("estimate", argv))?;
    let names = f.panel.names().to_vec();
    let lag_cols = &f.lag_names[names.len()..];
    out.write_matrix("sigma.csv", &f.lag_names, &f.lag_names, &f.sigma)?;
    out.write_matrix("theta.csv", &f.lag_names, &f.lag_names, f.theta.theta())?;
    out.write_matrix("a_hat.csv", &names, lag_cols, &f.params.a)?;
    out.write_matrix("sigma_eps.csv", &names, &names, &f.params.sigma_eps)?;
    let mut doc = MatrixDocument::default();
    doc.push(NamedMatrix::new("sigma", &f.lag_names, &f.lag_names, &f.sigma));
    doc.push(NamedMatrix::new("theta", &f.lag_names, &f.lag_names, f.theta.theta()));
    doc.push(NamedMatrix::new("a_hat", &names, lag_cols, &f.params.a));
    doc.push(NamedMatrix::new("sigma_eps", &names, &names, &f.params.sigma_eps));
    out.write_json("estimate.json", &doc)?;

    let mut params = run_parameters(args, &f.cfg, &f.cv, &f.panel);
    params["effective_rows"] = json!(f.rows);
    params["theta_offdiag_nonzeros"] = json!(f.theta.support().off_diagonal_count());
    params["spectral_radius"] = json!(f.params.spectral_radius);
    out.manifest.parameters = params;
    if f.params.spectral_radius >= 1.0 {
        out.manifest.warn(format!(
            "estimated VAR is not stationary (spectral radius {:.4})",
            f.params.spectral_radius
        ));
    }
    out.finish()
}

fn dag(args: &RunArgs, argv: Vec<String>) -> CliResult<()> {
    let f = fit_pipeline(args)?;
    let mut pc_cfg = PcConfig::new(args.alpha)?;
    if args.restricted_pc {
        pc_cfg = pc_cfg.with_fixed_gaps(pc::fixed_gaps_from_theta11(&f.theta.theta11()));
    }
    let names = f.panel.names().to_vec();
    let graph = pc::pc(&f.params.sigma_eps, names.clone(), f.rows, &pc_cfg)?;

    let mut out = Outputs::create(&args.out, Manifest::new("dag", argv))?;
    for w in graph.warnings() {
        out.manifest.warn(w.clone());
    }
    out.write("graph.dot", graph.to_dot().as_bytes())?;
    let mut graph_json = graph.to_json();
    graph_json.push('\n');
    out.write("graph.json", graph_json.as_bytes())?;

    let mut params = run_parameters(args, &f.cfg, &f.cv, &f.panel);
    params["effective_rows"] = json!(f.rows);
    params["undirected_edges"] = json!(graph.undirected_count());
    params["identified"] = json!(graph.is_fully_directed());
    if graph.is_fully_directed() {
        let model = structural_coefficients(&f.params.sigma_eps, &graph)?.with_autoregression(f.params.a.clone())?;
        let mut text = model.to_json();
        text.push('\n');
        out.write(MODEL_FILE, text.as_bytes())?;
        let order = model.causal_order_names();
        out.write_matrix("d_hat.csv", &order, &order, &model.d)?;
        params["causal_order"] = json!(order);
    } else {
        out.remove_stale(MODEL_FILE)?;
        out.remove_stale("d_hat.csv")?;
        out.manifest.warn(format!(
            "CPDAG has {} undirected edge(s); the structural model is not identified and was not written",
            graph.undirected_count()
        ));
    }
    out.manifest.parameters = params;
    out.finish()
}

fn irf(args: &IrfArgs, argv: Vec<String>) -> CliResult<()> {
    let model_path = args.model.clone().unwrap_or_else(|| args.out.join(MODEL_FILE));
    if !model_path.exists() {
        return Err(CliError::Identification(format!(
            "no structural model at {}; run dag first",
            model_path.display()
        )));
    }
    let model = StructuralModel::from_json_path(&model_path)?;
    let index = |name: &str| {
        model
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| CliError::usage(format!("unknown variable '{name}'")))
    };
    let shock = index(&args.shock)?;
    let responses: Vec<usize> = if args.response.is_empty() {
        (0..model.k()).collect()
    } else {
        args.response.iter().map(|r| index(r)).collect::<CliResult<_>>()?
    };
    if args.mode != IrfModeArg::Linearized && args.draws == 0 {
        return Err(CliError::usage("--draws must be positive"));
    }

    let panel = match &args.input {
        Some(path) => {
            let panel = load_panel(path, &args.diff)?;
            if panel.names() != model.names.as_slice() {
                return Err(CliError::usage("input columns do not match the model's variables"));
            }
            Some(panel)
        }
        None => None,
    };
    let marginals = match (&panel, args.gaussian) {
        (_, true) => Marginals::Gaussian,
        (Some(p), false) => Marginals::from_panel(p)?,
        (None, false) if args.mode == IrfModeArg::Linearized => Marginals::Gaussian,
        (None, false) => {
            return Err(CliError::usage("--input is required for empirical marginals (or pass --gaussian)"));
        }
    };
    let mode = match args.mode {
        IrfModeArg::Linearized => IrfMode::Linearized {
            unit_variance: args.unit_variance,
        },
        IrfModeArg::Unconditional => IrfMode::Unconditional,
        IrfModeArg::Conditional => {
            let p = panel
                .as_ref()
                .ok_or_else(|| CliError::usage("--mode conditional needs --input"))?;
            let (n, k, lags) = (p.n(), p.k(), model.p());
            if n < lags {
                return Err(CliError::usage("input has fewer rows than the model's lag order"));
            }
            // Most recent observation first.
            let x = (0..lags)
                .flat_map(|j| (0..k).map(move |c| (n - 1 - j, c)))
                .map(|(r, c)| p.values()[(r, c)])
                .collect();
            IrfMode::Conditional { x }
        }
    };

    let results = responses
        .iter()
        .map(|&response| {
            let req = IrfRequest {
                shock,
                response,
                delta: args.delta,
                horizon: args.horizon,
                draws: args.draws,
                seed: args.seed,
                mode: mode.clone(),
            };
            impulse_response(&model, &marginals, &req)
        })
        .collect::<tsdag::Result<Vec<_>>>()?;

    let mut out = Outputs::create(&args.out, Manifest::new("irf", argv))?;
    let mut buf = Vec::new();
    write_irf_csv(&mut buf, &model.names, &results)?;
    out.write("irf.csv", &buf)?;
    out.manifest.parameters = json!({
        "model": model_path.display().to_string(),
        "input": args.input.as_ref().map(|p| p.display().to_string()),
        "diff": args.diff,
        "marginals": if matches!(marginals, Marginals::Gaussian) { "gaussian" } else { "empirical" },
        "shock": args.shock,
        "responses": responses.iter().map(|&r| model.names[r].clone()).collect::<Vec<_>>(),
        "delta": args.delta,
        "horizon": args.horizon,
        "draws": args.draws,
        "mode": mode,
        "seed": args.seed,
    });
    out.finish()
}

fn cv(args: &RunArgs, argv: Vec<String>) -> CliResult<()> {
    check_lags(args.lags)?;
    if args.lambda.is_some() || args.tau.is_some() {
        return Err(CliError::usage("cv selects the penalty and threshold; drop --lambda and --tau"));
    }
    let panel = load_data(&args.data)?;
    let base = PrecisionConfig::new(args.method.into(), tsdag::tuning::LAMBDA_START);
    let result = cross_validate(&panel, args.lags, &base, &cv_plan(args.folds)?)?;
    let mut out = Outputs::create(&args.out, Manifest::new("cv", argv))?;
    out.write_json("cv.json", &result)?;
    print_json(&result)?;
    out.manifest.parameters = json!({
        "input": args.data.input.display().to_string(),
        "diff": args.data.diff,
        "lags": args.lags,
        "method": base.method.to_string(),
        "folds": args.folds,
        "lambda": result.lambda,
        "tau": result.tau,
        "seed": args.seed,
    });
    out.finish()
}

fn aic(args: &AicArgs, argv: Vec<String>) -> CliResult<()> {
    check_lags(args.max_lags)?;
    let base = fixed_config(args.method.into(), args.lambda, args.tau)?;
    let panel = load_data(&args.data)?;
    let result = aic_lag_order(&panel, args.max_lags, &base)?;
    let mut out = Outputs::create(&args.out, Manifest::new("aic", argv))?;
    out.write_json("aic.json", &result)?;
    print_json(&result)?;
    out.manifest.parameters = json!({
        "input": args.data.input.display().to_string(),
        "diff": args.data.diff,
        "max_lags": args.max_lags,
        "method": base.method.to_string(),
        "lambda": base.lambda,
        "tau": base.tau,
        "selected_lags": result.p,
        "seed": args.seed,
    });
    out.finish()
}

/// Echoes a result to stdout; a closed pipe is not an error.
fn print_json<T: serde::Serialize>(value: &T) -> CliResult<()> {
    use std::io::Write;
    let text = serde_json::to_string_pretty(value).map_err(tsdag::Error::from)?;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    Ok(())
}

fn parse_policy(s: &str) -> CliResult<LambdaPolicy> {
    let bad = || CliError::usage(format!("unknown policy '{s}'"));
    let num = |v: &str| v.parse::<f64>().map_err(|_| bad());
    let policy = match s {
        "cv" => LambdaPolicy::Cv(1.0),
        "dense" => LambdaPolicy::Dense,
        "a0" => LambdaPolicy::ZeroA,
        _ => {
            if let Some(m) = s.strip_prefix("cv*") {
                LambdaPolicy::Cv(num(m)?)
            } else if let Some(l) = s.strip_prefix("fixed:") {
                LambdaPolicy::Fixed(num(l)?)
            } else if let Some(rest) = s.strip_prefix("paired:") {
                let (a, b) = rest.split_once(':').ok_or_else(bad)?;
                LambdaPolicy::PairedAverage(num(a)?, num(b)?)
            } else {
                return Err(bad());
            }
        }
    };
    let positive = |v: f64| v > 0.0 && v.is_finite();
    let ok = match policy {
        LambdaPolicy::Cv(m) | LambdaPolicy::Fixed(m) => positive(m),
        LambdaPolicy::PairedAverage(a, b) => positive(a) && positive(b),
        _ => true,
    };
    if !ok {
        return Err(CliError::usage(format!("policy '{s}' needs positive values")));
    }
    Ok(policy)
}

fn simulate(args: &SimArgs, argv: Vec<String>) -> CliResult<()> {
    check_lags(args.lags)?;
    check_alpha(args.alpha)?;
    if args.reps == 0 {
        return Err(CliError::usage("--reps must be positive"));
    }
    let structures: Vec<Structure> = args
        .structure
        .iter()
        .map(|s| s.parse::<Structure>().map_err(CliError::from))
        .collect::<CliResult<_>>()?;
    let policies: Vec<LambdaPolicy> = args.policy.iter().map(|p| parse_policy(p)).collect::<CliResult<_>>()?;

    let mut rows = Vec::new();
    for &structure in &structures {
        for policy in &policies {
            let design = SimDesign {
                structure,
                a: args.a,
                n_clusters: args.clusters,
                n: args.n,
                seed: args.seed,
            };
            let config = BenchConfig {
                restricted_pc: args.restricted_pc,
                alpha: args.alpha,
                p: args.lags,
                ..BenchConfig::new(args.method.into(), *policy, args.reps)
            };
            log::info!("{} / {}: {} replications", structure, policy.label(), args.reps);
            rows.push(run_benchmark(&design, &config)?);
        }
    }

    let mut out = Outputs::create(&args.out, Manifest::new("simulate", argv))?;
    let mut buf = Vec::new();
    write_bench_csv(&mut buf, &rows)?;
    out.write("bench.csv", &buf)?;
    out.write_json("bench.json", &rows)?;
    if args.save_panel {
        for &structure in &structures {
            let design = SimDesign {
                structure,
                a: args.a,
                n_clusters: args.clusters,
                n: args.n,
                seed: args.seed,
            };
            let (panel, _) = generate_cluster_var(&design)?;
            let mut buf = Vec::new();
            panel.write_csv(&mut buf)?;
            out.write(&format!("panel_{}.csv", structure.label()), &buf)?;
        }
    }
    out.manifest.parameters = json!({
        "structures": structures.iter().map(|s| s.label()).collect::<Vec<_>>(),
        "policies": policies.iter().map(|p| p.label()).collect::<Vec<_>>(),
        "a": args.a,
        "clusters": args.clusters,
        "n": args.n,
        "reps": args.reps,
        "method": tsdag::sparse_precision::Method::from(args.method).to_string(),
        "alpha": args.alpha,
        "restricted_pc": args.restricted_pc,
        "lags": args.lags,
        "save_panel": args.save_panel,
        "seeds": (0..args.reps as u64).map(|r| args.seed.wrapping_add(r)).collect::<Vec<_>>(),
    });
    out.finish()
}
