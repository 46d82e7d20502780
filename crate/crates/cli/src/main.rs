mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use serde_json::{json, Map, Value};

use r4_core::io::{
    build_var_design, load_csv_matrix, split_rows, trimmed_mse, write_csv_matrix, write_fit, write_json, write_path,
    write_text,
};
use r4_core::linalg::{numerical_rank, LeastSquares};
use r4_core::sim::{
    breakdown_sweep, default_breakdown_lambda, generate_instance, run_study, Method, Model, SimConfig,
};
use r4_core::{
    fit_path, multistart_fit, pic, rrr_fit, DenseMatrix, GridKind, GridSpec, OutlierSpec, R4Error, R4Problem,
    RegressionData, RuleKind, SolverOptions, ThresholdRule,
};

use config::{merge_config, parse_list, parse_ranks, BreakdownArgs, Cli, Command, DataArgs, FitArgs, PathArgs, SimulateArgs, SolverArgs};

type Result<T> = std::result::Result<T, R4Error>;

const FORECAST_TRIM: f64 = 0.4;

fn exit_code(err: &R4Error) -> u8 {
    match err {
        R4Error::InvalidInput(_) | R4Error::Parse { .. } | R4Error::NotPositiveDefinite { .. } => 2,
        R4Error::Numerical(_) | R4Error::Infeasible(_) => 3,
        R4Error::Io { .. } => 4,
    }
}

fn invalid(msg: impl Into<String>) -> R4Error {
    R4Error::InvalidInput(msg.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error[invalid_input]: {first}");
            return ExitCode::from(2);
        }
    };
    let result = match &cli.command {
        Command::Fit(args) => merge_config(args, args.config.as_deref()).and_then(|a| run_fit(&a)),
        Command::Path(args) => merge_config(args, args.config.as_deref()).and_then(|a| run_path(&a)),
        Command::Simulate(args) => merge_config(args, args.config.as_deref()).and_then(|a| run_simulate(&a)),
        Command::Breakdown(args) => merge_config(args, args.config.as_deref()).and_then(|a| run_breakdown(&a)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.reason_code());
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Training data plus the held-out rows when a series split is requested.
struct Inputs {
    train: RegressionData,
    test: Option<RegressionData>,
}

fn load_inputs(args: &DataArgs) -> Result<Inputs> {
    let gamma = args.gamma.as_ref().map(load_csv_matrix).transpose()?;
    let data = match (&args.series, &args.x, &args.y) {
        (Some(series), None, None) => {
            let design = build_var_design(&load_csv_matrix(series)?, args.lag.unwrap_or(1))?;
            RegressionData::new(design.x, design.y, gamma)?
        }
        (None, Some(x), Some(y)) => {
            if args.lag.is_some() {
                return Err(invalid("--lag applies only to --series input"));
            }
            RegressionData::new(load_csv_matrix(x)?, load_csv_matrix(y)?, gamma)?
        }
        (Some(_), _, _) => return Err(invalid("--series cannot be combined with --x/--y")),
        _ => return Err(invalid("provide --x and --y, or --series")),
    };
    match args.split {
        Some(split) => {
            let (train, test) = split_rows(&data, split)?;
            Ok(Inputs { train, test: Some(test) })
        }
        None => Ok(Inputs { train: data, test: None }),
    }
}

fn solver_options(args: &SolverArgs) -> SolverOptions {
    let d = SolverOptions::default();
    SolverOptions {
        max_iterations: args.max_iterations.unwrap_or(d.max_iterations),
        tolerance: args.tolerance.unwrap_or(d.tolerance),
        multistart: args.multistart.unwrap_or(d.multistart),
        subsample_fraction: args.subsample_fraction.unwrap_or(d.subsample_fraction),
        seed: args.seed.unwrap_or(d.seed),
    }
}

fn rule_kind(rule: Option<&str>, eta: Option<f64>) -> Result<RuleKind> {
    match rule.unwrap_or("hard") {
        "soft" => Ok(RuleKind::Soft),
        "hard" => Ok(RuleKind::Hard),
        "hard-ridge" | "hard_ridge" => {
            Ok(RuleKind::HardRidge { eta: eta.ok_or_else(|| invalid("--rule hard-ridge needs --eta"))? })
        }
        other => Err(invalid(format!("unknown rule {other:?}, expected soft, hard or hard-ridge"))),
    }
}

fn out_dir(out: &Option<PathBuf>) -> Result<&Path> {
    out.as_deref().ok_or_else(|| invalid("--out is required"))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| R4Error::Io { path: dir.to_path_buf(), source })
}

/// Out-of-sample errors of the robust coefficients against plain reduced-rank
/// regression at the same rank and least squares.
fn forecast(dir: &Path, train: &RegressionData, test: &RegressionData, b_hat: &DenseMatrix, rank: usize) -> Result<Value> {
    let pred = &test.x * b_hat;
    write_csv_matrix(dir.join("forecast.csv"), &pred)?;
    let mut report = json!({
        "train_rows": train.n(),
        "test_rows": test.n(),
        "trim_fraction": FORECAST_TRIM,
        "mse": trimmed_mse(&pred, &test.y, 0.0)?,
        "trimmed_mse": trimmed_mse(&pred, &test.y, FORECAST_TRIM)?,
    });
    let mut add = |name: &str, coef: &DenseMatrix| -> Result<()> {
        let p = &test.x * coef;
        report[format!("{name}_mse")] = json!(trimmed_mse(&p, &test.y, 0.0)?);
        report[format!("{name}_trimmed_mse")] = json!(trimmed_mse(&p, &test.y, FORECAST_TRIM)?);
        Ok(())
    };
    if rank > 0 {
        add("rrr", &rrr_fit(train, rank)?.b_hat)?;
    }
    add("ols", &LeastSquares::new(&train.x)?.solve(&train.y))?;
    write_json(dir.join("forecast.json"), &report)?;
    Ok(report)
}

fn run_fit(args: &FitArgs) -> Result<()> {
    let dir = out_dir(&args.output.out)?;
    let inputs = load_inputs(&args.data)?;
    let data = inputs.train;
    let rank = args.rank.ok_or_else(|| invalid("--rank is required"))?;
    let spec = match (args.lambda, args.rho_count) {
        (Some(lambda), None) => {
            let rule = ThresholdRule::new(rule_kind(args.rule.as_deref(), args.eta)?, lambda)?;
            if args.elementwise {
                OutlierSpec::PenalizedElementwise(rule)
            } else {
                OutlierSpec::PenalizedRowwise(rule)
            }
        }
        (None, Some(rho_count)) => {
            if args.elementwise || args.rule.is_some() {
                return Err(invalid("--rho-count does not take --rule or --elementwise"));
            }
            OutlierSpec::Constrained { rho_count, eta: args.eta.unwrap_or(0.0) }
        }
        _ => return Err(invalid("give exactly one of --lambda or --rho-count")),
    };
    let opts = solver_options(&args.solver);
    let problem = R4Problem::new(data.clone(), rank, spec)?;
    let fit = multistart_fit(&problem, &opts)?;
    let q = numerical_rank(&data.x)?;
    let criterion = pic(&data, &fit.b_hat, &fit.c_hat, q)?;
    let mut extra = Map::new();
    extra.insert("command".into(), json!("fit"));
    extra.insert("outlier_spec".into(), serde_json::to_value(spec).expect("spec serializes"));
    extra.insert("solver".into(), serde_json::to_value(&opts).expect("options serialize"));
    write_fit(dir, &fit, Some(criterion), extra, !args.output.no_timestamp)?;
    println!(
        "rank {} | {} outlying rows | objective {:.6e} | {} iterations{}",
        fit.rank,
        fit.outlier_rows.len(),
        fit.objective,
        fit.iterations,
        if fit.converged { "" } else { " (not converged)" }
    );
    if let Some(test) = &inputs.test {
        let report = forecast(dir, &data, test, &fit.b_hat, fit.rank)?;
        println!("forecast mse {} | trimmed mse {}", report["mse"], report["trimmed_mse"]);
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn run_path(args: &PathArgs) -> Result<()> {
    let dir = out_dir(&args.output.out)?;
    let inputs = load_inputs(&args.data)?;
    let data = inputs.train;
    let ranks = match &args.ranks {
        Some(s) => parse_ranks(s)?,
        None => (1..=numerical_rank(&data.x)?.min(data.m())).collect(),
    };
    let kind = if args.constrained {
        if args.elementwise || args.rule.is_some() {
            return Err(invalid("--constrained does not take --rule or --elementwise"));
        }
        GridKind::Constrained { eta: args.eta.unwrap_or(0.0) }
    } else {
        GridKind::Penalized { rule: rule_kind(args.rule.as_deref(), args.eta)?, elementwise: args.elementwise }
    };
    let mut grid = GridSpec::new(ranks, kind);
    grid.retain_fits = false;
    if let Some(count) = args.grid {
        grid.lambda_count = count;
    }
    grid.outlier_fraction_bounds = (
        args.vmin.unwrap_or(grid.outlier_fraction_bounds.0),
        args.vmax.unwrap_or(grid.outlier_fraction_bounds.1),
    );
    let opts = solver_options(&args.solver);
    let path = fit_path(&data, &grid, &opts)?;
    write_path(dir, &path, !args.output.no_timestamp)?;
    let cell = path.selected_cell().ok_or_else(|| R4Error::Numerical("no admissible cell on the path".into()))?;
    println!(
        "selected rank {} | grid value {:.6e} | {} outlying rows | criterion {:.6}",
        cell.rank, cell.grid_value, cell.outlier_count, cell.pic
    );
    if let (Some(test), Some(fit)) = (&inputs.test, &path.selected_fit) {
        let report = forecast(dir, &data, test, &fit.b_hat, fit.rank)?;
        println!("forecast mse {} | trimmed mse {}", report["mse"], report["trimmed_mse"]);
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn run_simulate(args: &SimulateArgs) -> Result<()> {
    let dir = out_dir(&args.output.out)?;
    let model: Model = args.model.as_deref().unwrap_or("I").parse()?;
    let mut cfg = SimConfig::new(model);
    if let Some(v) = args.contamination {
        cfg.outlier_fraction = v;
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.snr {
        cfg.snr = v;
    }
    if let Some(v) = args.reps {
        cfg.replications = v;
    }
    if let Some(v) = args.n {
        cfg.n = v;
    }
    if let Some(v) = args.rank {
        cfg.r_star = v;
    }
    if let Some(v) = args.grid {
        cfg.lambda_count = v;
    }
    if let Some(v) = args.multistart {
        cfg.multistart = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    cfg.leverage = !args.no_leverage;
    let methods: Vec<Method> = match &args.methods {
        Some(s) => parse_list::<String>(s, "method")?.iter().map(|m| m.parse()).collect::<Result<_>>()?,
        None => Method::ALL.to_vec(),
    };
    let report = run_study(&cfg, &methods)?;
    create_dir(dir)?;
    write_text(&dir.join("simreport.csv"), &report.to_csv())?;
    write_json(dir.join("simreport.json"), &report)?;
    println!("{:<12} {:>10} {:>10} {:>6} {:>7} {:>7} {:>9}", "method", "err_b", "sd", "rank", "mask%", "swamp%", "detect%");
    for r in &report.methods {
        println!(
            "{:<12} {:>10.4} {:>10.4} {:>6.2} {:>7.1} {:>7.1} {:>9.1}",
            r.method.name(),
            r.err_b.trimmed_mean,
            r.err_b.sd,
            r.avg_rank,
            100.0 * r.masking,
            100.0 * r.swamping,
            100.0 * r.joint_detection
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn run_breakdown(args: &BreakdownArgs) -> Result<()> {
    let dir = out_dir(&args.output.out)?;
    let rank = args.rank.unwrap_or(3);
    let data = if args.data.x.is_some() || args.data.y.is_some() || args.data.series.is_some() {
        let inputs = load_inputs(&args.data)?;
        inputs.train
    } else {
        let mut cfg = SimConfig::new(Model::I);
        cfg.outlier_fraction = 0.0;
        cfg.leverage = false;
        cfg.seed = args.solver.seed.unwrap_or(0);
        generate_instance(&cfg, 0)?.data
    };
    let magnitudes: Vec<f64> = parse_list(args.magnitudes.as_deref().unwrap_or("1e2,1e4,1e6"), "magnitude")?;
    let lambda = match args.lambda {
        Some(l) => l,
        None => default_breakdown_lambda(&data, rank)?,
    };
    let mut opts = solver_options(&args.solver);
    if args.solver.multistart.is_none() {
        opts.multistart = 10;
    }
    let table = breakdown_sweep(&data, &magnitudes, rank, lambda, &opts)?;
    create_dir(dir)?;
    write_text(&dir.join("breakdown.csv"), &table.to_csv())?;
    println!("contaminated row {} | lambda {lambda:.6}", table.row);
    println!("{:>12} {:>16} {:>16}", "magnitude", "rrr_norm", "r4_norm");
    for k in 0..magnitudes.len() {
        println!("{:>12.3e} {:>16.6e} {:>16.6e}", magnitudes[k], table.rrr_norms[k], table.r4_norms[k]);
    }
    println!("wrote {}", dir.display());
    Ok(())
}
