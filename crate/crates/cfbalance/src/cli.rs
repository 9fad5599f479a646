//! Command-line front end: `simulate`, `estimate`, and `benchmark`.
//!
//! Exit codes are a stable contract: 0 on success, 1 on runtime failure,
//! 2 on invalid flags.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;

use crate::balance::{BalanceConfig, BalanceNorm};
use crate::data::{load_dataset_path, CsvSchema};
use crate::error::Error;
use crate::estimator::{
    fit_factual_counterfactual_with_anchors, fit_model, EstimatorConfig, LambdaPrimeRule, Method,
};
use crate::evaluate::{
    bound_diagnostics, replicate_experiment, standard_methods, BoundConstants, ReportTable, Suite,
};
use crate::simulate::{
    gen_complex_outcome, gen_ihdp_style, gen_linear_outcome, save_simulated, SimulatedDataset,
    IHDP_D, IHDP_N,
};

#[derive(Parser)]
#[command(
    name = "cfbalance",
    version,
    about = "Balancing-weight estimation of individualized treatment effects"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark dataset with ground-truth potential outcomes
    Simulate(SimulateArgs),
    /// Fit an estimator on CSV data; optionally predict effects for new units
    Estimate(EstimateArgs),
    /// Replicated comparison of the five methods on the simulation suites
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// One of: linear, complex, ihdp
    #[arg(long)]
    generator: String,
    /// Number of units (fixed at 747 for ihdp)
    #[arg(long)]
    n: Option<usize>,
    /// Number of features (fixed at 25 for ihdp)
    #[arg(long)]
    p: Option<usize>,
    #[arg(long, env = "CFBALANCE_SEED", default_value_t = 42)]
    seed: u64,
    /// Output directory (created if absent)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimatorFlags {
    /// One of: algo1, algo2, olsr
    #[arg(long, default_value = "algo2")]
    method: String,
    /// One of: l2, linf
    #[arg(long = "balance-norm", default_value = "linf")]
    balance_norm: String,
    /// Ridge/imbalance trade-off in (0, 1)
    #[arg(long, default_value_t = 0.5)]
    xi: f64,
    #[arg(long = "balance-tol", default_value_t = 1e-8)]
    balance_tol: f64,
    #[arg(long = "balance-max-iter", default_value_t = 50_000)]
    balance_max_iter: usize,
    /// Elastic-net mixing parameter in [0, 1]
    #[arg(long, default_value_t = 0.9)]
    alpha: f64,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long = "grid-size", default_value_t = 100)]
    grid_size: usize,
    /// Disable the unpenalized intercept
    #[arg(long = "no-intercept")]
    no_intercept: bool,
    /// Fix the anchored-refit penalty to an explicit value
    #[arg(long = "lambda-prime", conflicts_with = "lambda_prime_cv")]
    lambda_prime: Option<f64>,
    /// Select the anchored-refit penalty by cross-validation instead of the
    /// default weighted-Gram scale
    #[arg(long = "lambda-prime-cv")]
    lambda_prime_cv: bool,
}

impl EstimatorFlags {
    fn to_config(&self, seed: u64) -> Result<EstimatorConfig, String> {
        let method: Method = self.method.parse().map_err(|e: Error| e.to_string())?;
        let norm = match self.balance_norm.as_str() {
            "l2" => BalanceNorm::L2,
            "linf" => BalanceNorm::Linf,
            other => return Err(format!("unknown balance norm `{other}` (use l2 or linf)")),
        };
        let lambda_prime = match (self.lambda_prime, self.lambda_prime_cv) {
            (Some(value), _) => LambdaPrimeRule::Fixed { value },
            (None, true) => LambdaPrimeRule::CrossValidated,
            (None, false) => LambdaPrimeRule::ScaledFixed { factor: 1.0 },
        };
        let cfg = EstimatorConfig {
            method,
            balance: BalanceConfig {
                xi: self.xi,
                norm,
                max_iterations: self.balance_max_iter,
                tolerance: self.balance_tol,
            },
            alpha: self.alpha,
            folds: self.folds,
            grid_size: self.grid_size,
            seed,
            fit_intercept: !self.no_intercept,
            lambda_prime,
            force_uniform_weights: false,
        };
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct EstimateArgs {
    /// Training CSV (header row; see --outcome-col / --treatment-col)
    #[arg(long)]
    train: PathBuf,
    #[arg(long, env = "CFBALANCE_SEED", default_value_t = 42)]
    seed: u64,
    #[command(flatten)]
    estimator: EstimatorFlags,
    #[arg(long = "outcome-col", default_value = "y")]
    outcome_col: String,
    #[arg(long = "treatment-col", default_value = "w")]
    treatment_col: String,
    /// Comma-separated feature columns (default: every other column)
    #[arg(long = "feature-cols", value_delimiter = ',')]
    feature_cols: Option<Vec<String>>,
    /// Where to write the fitted model JSON
    #[arg(long = "model-out", default_value = "model.json")]
    model_out: PathBuf,
    /// CSV of new-unit features to score
    #[arg(long)]
    predict: Option<PathBuf>,
    #[arg(long = "predictions-out", default_value = "predictions.csv")]
    predictions_out: PathBuf,
    /// Write the error-bound diagnostic report to this JSON file
    #[arg(long = "bound-report")]
    bound_report: Option<PathBuf>,
    #[arg(long = "bound-c", default_value_t = 1.0)]
    bound_c: f64,
    #[arg(long = "bound-l", default_value_t = 1.0)]
    bound_l: f64,
    #[arg(long = "bound-delta", default_value_t = 0.1)]
    bound_delta: f64,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// One of: data1, data2, data3, all
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 10)]
    replications: usize,
    #[arg(long, env = "CFBALANCE_SEED", default_value_t = 42)]
    seed: u64,
    /// Output directory for report.csv / report.json
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads (default: logical cores)
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    estimator: EstimatorFlags,
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Parse arguments from the process environment and run. Returns the exit
/// code; clap itself exits with 2 on malformed flags.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Benchmark(args) => cmd_benchmark(args),
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let sim: SimulatedDataset = match args.generator.as_str() {
        "linear" | "complex" => {
            let n = args.n.unwrap_or(1500);
            let p = args.p.unwrap_or(100);
            let result = if args.generator == "linear" {
                gen_linear_outcome(n, p, args.seed)
            } else {
                gen_complex_outcome(n, p, args.seed)
            };
            result.map_err(|e| match e {
                Error::InvalidDims(msg) => CliError::Usage(msg),
                other => CliError::Runtime(other.to_string()),
            })?
        }
        "ihdp" => {
            if args.n.is_some_and(|n| n != IHDP_N) {
                return Err(CliError::Usage(format!(
                    "the ihdp generator is fixed at n = {IHDP_N}"
                )));
            }
            if args.p.is_some_and(|p| p != IHDP_D) {
                return Err(CliError::Usage(format!(
                    "the ihdp generator is fixed at p = {IHDP_D}"
                )));
            }
            gen_ihdp_style(None, args.seed)?
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown generator `{other}` (use linear, complex, or ihdp)"
            )))
        }
    };
    save_simulated(&sim, &args.out)?;
    println!(
        "wrote {} rows ({} treated) to {}",
        sim.dataset.n(),
        sim.dataset.n_treated(),
        args.out.display()
    );
    Ok(())
}

/// Read a feature matrix for prediction, matching the training feature
/// columns by name; extra columns are ignored.
fn load_feature_matrix(path: &Path, feature_names: &[String]) -> Result<Array2<f64>, CliError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header: Vec<String> = match lines.next() {
        Some(l) => l?.split(',').map(|s| s.trim().to_string()).collect(),
        None => return Err(CliError::Runtime(format!("{}: empty file", path.display()))),
    };
    let mut cols = Vec::with_capacity(feature_names.len());
    for name in feature_names {
        match header.iter().position(|h| h == name) {
            Some(j) => cols.push(j),
            None => {
                return Err(CliError::Runtime(format!(
                    "{}: missing feature column `{name}`",
                    path.display()
                )))
            }
        }
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(|s| s.trim()).collect();
        let mut row = Vec::with_capacity(cols.len());
        for &j in &cols {
            let raw = cells.get(j).copied().unwrap_or("");
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    return Err(CliError::Runtime(format!(
                        "{}: bad value `{raw}` at data row {}, column `{}`",
                        path.display(),
                        idx + 1,
                        header[j]
                    )))
                }
            }
        }
        rows.push(row);
    }
    let d = feature_names.len();
    let mut x = Array2::<f64>::zeros((rows.len(), d));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            x[[i, j]] = v;
        }
    }
    Ok(x)
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), CliError> {
    let cfg = args.estimator.to_config(args.seed).map_err(CliError::Usage)?;
    let schema = CsvSchema {
        outcome: args.outcome_col.clone(),
        treatment: args.treatment_col.clone(),
        features: args.feature_cols.clone(),
    };
    let train = load_dataset_path(&args.train, &schema)?;

    let (model, anchors) = match cfg.method {
        Method::FactualCounterfactualBalancing => {
            let (m, a) = fit_factual_counterfactual_with_anchors(&train, &cfg)?;
            (m, Some(a))
        }
        _ => (fit_model(&train, &cfg)?, None),
    };

    let doc = model.to_document();
    let mut out = BufWriter::new(File::create(&args.model_out)?);
    serde_json::to_writer_pretty(&mut out, &doc).map_err(Error::from)?;
    writeln!(out)?;
    out.flush()?;
    println!("wrote model to {}", args.model_out.display());

    if let Some(predict_path) = &args.predict {
        let x_new = load_feature_matrix(predict_path, &train.feature_names)?;
        let tau = model.estimate_ite(&x_new.view())?;
        let mut w = BufWriter::new(File::create(&args.predictions_out)?);
        writeln!(w, "tau_hat")?;
        for v in tau.iter() {
            writeln!(w, "{v}")?;
        }
        w.flush()?;
        println!(
            "wrote {} predictions to {}",
            tau.len(),
            args.predictions_out.display()
        );
    }

    if let Some(report_path) = &args.bound_report {
        let constants = BoundConstants {
            c: args.bound_c,
            l: args.bound_l,
            delta_prob: args.bound_delta,
        };
        let report = bound_diagnostics(&train, &model, constants, anchors.as_ref())?;
        let mut w = BufWriter::new(File::create(report_path)?);
        serde_json::to_writer_pretty(&mut w, &report).map_err(Error::from)?;
        writeln!(w)?;
        w.flush()?;
        println!("wrote bound report to {}", report_path.display());
    }
    Ok(())
}

fn cmd_benchmark(args: BenchmarkArgs) -> Result<(), CliError> {
    let cfg = args.estimator.to_config(args.seed).map_err(CliError::Usage)?;
    let suites: Vec<Suite> = match args.suite.as_str() {
        "all" => vec![Suite::Data1, Suite::Data2, Suite::Data3],
        other => vec![other
            .parse()
            .map_err(|e: Error| CliError::Usage(e.to_string()))?],
    };
    if args.replications == 0 {
        return Err(CliError::Usage("--replications must be at least 1".into()));
    }

    let run_all = || -> ReportTable {
        let methods = standard_methods();
        let mut rows = Vec::new();
        for suite in &suites {
            let table =
                replicate_experiment(*suite, &methods, args.replications, args.seed, &cfg);
            for row in &table.rows {
                let sd = row
                    .sd_pehe
                    .map(|s| format!(" +- {s:.4}"))
                    .unwrap_or_default();
                println!(
                    "{} {}: mean PEHE {:.4}{} over {} replications",
                    suite.label(),
                    row.method,
                    row.mean_pehe,
                    sd,
                    row.replications
                );
            }
            rows.extend(table.rows);
        }
        ReportTable { rows }
    };

    let table = match args.jobs {
        Some(jobs) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            pool.install(run_all)
        }
        None => run_all(),
    };

    fs::create_dir_all(&args.out)?;
    let csv_path = args.out.join("report.csv");
    let mut csv = BufWriter::new(File::create(&csv_path)?);
    table.write_csv(&mut csv)?;
    csv.flush()?;

    let json = serde_json::json!({
        "table": table.to_json(),
        "flags": {
            "suite": args.suite,
            "replications": args.replications,
            "seed": args.seed,
            "xi": cfg.balance.xi,
            "alpha": cfg.alpha,
            "folds": cfg.folds,
            "grid_size": cfg.grid_size,
            "fit_intercept": cfg.fit_intercept,
        },
    });
    let json_path = args.out.join("report.json");
    let mut jw = BufWriter::new(File::create(&json_path)?);
    serde_json::to_writer_pretty(&mut jw, &json).map_err(Error::from)?;
    writeln!(jw)?;
    jw.flush()?;

    println!("wrote {} and {}", csv_path.display(), json_path.display());
    let any_success = table.rows.iter().any(|r| r.replications > 0);
    if any_success {
        Ok(())
    } else {
        Err(CliError::Runtime(
            "every method failed on every replication".into(),
        ))
    }
}
