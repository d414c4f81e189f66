//! Command-line interface: simulate / cv / fit / report.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bsgl::data::Hyperparameters;
use bsgl::error::Error;
use bsgl::inference::InferenceGrid;
use bsgl::io::{
    self, BestConfigFile, DatasetSchema, PipelineOptions, RunManifest,
};
use bsgl::simulate::{generate_dataset, SimConfig};
use bsgl::tuning::{grid_search, TuningGrid};

#[derive(Parser)]
#[command(
    name = "bsgl",
    version,
    about = "Spatially varying coefficient regression with group lasso shrinkage",
    long_about = None,
    after_help = "Thread count follows RAYON_NUM_THREADS. Exit codes: 0 ok, 1 usage, \
                  2 data error, 3 convergence gate failed under --strict."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known coefficient surfaces.
    Simulate(SimulateArgs),
    /// Cross-validate the (L, a_lambda, b_lambda) grid.
    Cv(CvArgs),
    /// Fit the model and write all result files.
    Fit(FitArgs),
    /// Recompute significance maps and SCP from stored samples at a new
    /// credible level, without refitting.
    Report(ReportArgs),
}

#[derive(Args)]
struct SchemaArgs {
    /// Column holding the first spatial coordinate.
    #[arg(long, default_value = "u")]
    u_col: String,
    /// Column holding the second spatial coordinate.
    #[arg(long, default_value = "v")]
    v_col: String,
    /// Response column.
    #[arg(long, default_value = "y")]
    y_col: String,
    /// Comma-separated predictor columns (default: all remaining columns).
    #[arg(long, value_delimiter = ',')]
    predictors: Option<Vec<String>>,
}

impl SchemaArgs {
    fn schema(&self) -> DatasetSchema {
        DatasetSchema {
            u_col: self.u_col.clone(),
            v_col: self.v_col.clone(),
            y_col: self.y_col.clone(),
            predictors: self.predictors.clone(),
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    noise_var: f64,
    /// Spatially constant coefficient for predictor 4.
    #[arg(long)]
    constant_c: Option<f64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CvArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    schema: SchemaArgs,
    /// Basis-count grid (perfect squares).
    #[arg(long, value_delimiter = ',', default_values_t = vec![16, 25, 36, 49])]
    l_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![15.0, 30.0, 35.0, 40.0, 45.0])]
    a_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.01, 0.1, 1.0])]
    b_grid: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 1000)]
    cv_iters: usize,
    #[arg(long, default_value_t = 200)]
    cv_warmup: usize,
    #[arg(long, default_value_t = 3)]
    degree: usize,
    #[arg(long, default_value_t = 0.01)]
    a_sigma: f64,
    #[arg(long, default_value_t = 0.01)]
    b_sigma: f64,
    #[arg(long)]
    intercept: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    schema: SchemaArgs,
    /// Total basis count (perfect square). Overridden by --best-config.
    #[arg(long, default_value_t = 25)]
    l: usize,
    #[arg(long, default_value_t = 3)]
    degree: usize,
    #[arg(long, default_value_t = 15.0)]
    a_lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    b_lambda: f64,
    #[arg(long, default_value_t = 0.01)]
    a_sigma: f64,
    #[arg(long, default_value_t = 0.01)]
    b_sigma: f64,
    /// best_config.json produced by `bsgl cv`.
    #[arg(long)]
    best_config: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    chains: usize,
    #[arg(long, default_value_t = 5000)]
    iters: usize,
    #[arg(long, default_value_t = 500)]
    warmup: usize,
    #[arg(long, default_value_t = 0.95)]
    ci_level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Held-out fraction for MSPE/coverage; 0 fits on everything.
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    /// Inference grid: "observed" or a number q for a regular q x q grid.
    #[arg(long, default_value = "observed")]
    grid: String,
    #[arg(long)]
    intercept: bool,
    /// Also write the full posterior samples CSV.
    #[arg(long)]
    save_samples: bool,
    /// Exit nonzero when the convergence gate fails (report still written).
    #[arg(long)]
    strict: bool,
    /// Convergence gate threshold on split R-hat.
    #[arg(long, default_value_t = 1.1)]
    rhat_threshold: f64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// samples.csv from a fit run with --save-samples.
    #[arg(long)]
    samples: PathBuf,
    /// manifest.json from the same run.
    #[arg(long)]
    manifest: PathBuf,
    /// Dataset override when the manifest grid uses observed locations.
    #[arg(long)]
    data: Option<PathBuf>,
    #[command(flatten)]
    schema: SchemaArgs,
    #[arg(long, default_value_t = 0.95)]
    ci_level: f64,
    #[arg(long, default_value = "out_report")]
    out_dir: PathBuf,
}

fn parse_grid(raw: &str) -> Result<InferenceGrid, Error> {
    if raw.eq_ignore_ascii_case("observed") {
        Ok(InferenceGrid::Observed)
    } else {
        raw.parse::<usize>()
            .map(|q| InferenceGrid::Regular { q })
            .map_err(|_| Error::InvalidConfig(format!("--grid expects 'observed' or an integer, got '{raw}'")))
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Error> {
    io::prepare_out_dir(&args.out_dir)?;
    let config = SimConfig {
        n: args.n,
        m: args.m,
        noise_var: args.noise_var,
        constant_c: args.constant_c,
        ..SimConfig::new(args.n, args.m, args.seed)
    };
    let (dataset, truth) = generate_dataset(&config)?;
    let data_path = args.out_dir.join("dataset.csv");
    let truth_path = args.out_dir.join("truth.csv");
    io::write_dataset(&dataset, &data_path)?;
    io::write_truth(&dataset.locations, &truth, &dataset.predictor_names, &truth_path)?;

    let mut manifest = RunManifest::new("simulate", args.seed);
    manifest.group_names = dataset.predictor_names.clone();
    manifest.outputs = vec!["dataset.csv".into(), "truth.csv".into(), "manifest.json".into()];
    manifest.write(&args.out_dir.join("manifest.json"))?;
    println!(
        "simulate: wrote {} rows, {} predictors to {}",
        dataset.n(),
        dataset.m(),
        args.out_dir.display()
    );
    Ok(())
}

fn cmd_cv(args: &CvArgs) -> Result<(), Error> {
    io::prepare_out_dir(&args.out_dir)?;
    let (dataset, dropped) = io::read_dataset(&args.data, &args.schema.schema())?;
    if dropped > 0 {
        eprintln!("warning: dropped {dropped} rows with non-finite values");
    }
    let grid = TuningGrid {
        l_values: args.l_grid.clone(),
        a_lambda_values: args.a_grid.clone(),
        b_lambda_values: args.b_grid.clone(),
        cv_folds: args.folds,
        cv_iters: args.cv_iters,
        cv_warmup: args.cv_warmup,
    };
    let base = bsgl::data::FitConfig {
        basis: bsgl::basis::BasisConfig::new(4, args.degree, bsgl::basis::Bbox::new(0.0, 1.0, 0.0, 1.0)),
        hyper: Hyperparameters {
            a_sigma: args.a_sigma,
            b_sigma: args.b_sigma,
            a_lambda: args.a_grid[0],
            b_lambda: args.b_grid[0],
        },
        n_iter: args.cv_iters,
        warmup: args.cv_warmup,
        n_chains: 1,
        ci_level: 0.95,
        seed: args.seed,
        include_intercept: args.intercept,
    };
    let (best, table) = grid_search(&dataset, &grid, &base)?;
    io::write_cv_table(&table, &args.out_dir.join("cv_scores.csv"))?;
    std::fs::write(
        args.out_dir.join("best_config.json"),
        serde_json::to_string_pretty(&BestConfigFile::from(best))?,
    )?;

    let mut manifest = RunManifest::new("cv", args.seed);
    manifest.data_path = Some(args.data.display().to_string());
    manifest
        .input_digests
        .insert(args.data.display().to_string(), io::digest_file(&args.data)?);
    manifest.outputs = vec!["cv_scores.csv".into(), "best_config.json".into(), "manifest.json".into()];
    manifest.write(&args.out_dir.join("manifest.json"))?;
    println!(
        "cv: best L={} a_lambda={} b_lambda={} (mean MSPE {:.6})",
        best.l, best.a_lambda, best.b_lambda, best.mean_mspe
    );
    Ok(())
}

/// Distinguishes the strict-gate exit from ordinary errors.
enum FitOutcome {
    Converged,
    GateFailed,
}

fn cmd_fit(args: &FitArgs) -> Result<FitOutcome, Error> {
    io::prepare_out_dir(&args.out_dir)?;
    let (dataset, dropped) = io::read_dataset(&args.data, &args.schema.schema())?;
    if dropped > 0 {
        eprintln!("warning: dropped {dropped} rows with non-finite values");
    }
    let (l, a_lambda, b_lambda) = match &args.best_config {
        Some(path) => {
            let parsed: BestConfigFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            (parsed.l, parsed.a_lambda, parsed.b_lambda)
        }
        None => (args.l, args.a_lambda, args.b_lambda),
    };
    let opts = PipelineOptions {
        l,
        degree: args.degree,
        hyper: Hyperparameters {
            a_sigma: args.a_sigma,
            b_sigma: args.b_sigma,
            a_lambda,
            b_lambda,
        },
        n_iter: args.iters,
        warmup: args.warmup,
        n_chains: args.chains,
        ci_level: args.ci_level,
        seed: args.seed,
        include_intercept: args.intercept,
        test_fraction: args.test_fraction,
        grid: parse_grid(&args.grid)?,
        rhat_threshold: args.rhat_threshold,
        bbox_margin: 0.0,
    };
    let artifacts = io::run_fit(&dataset, &opts)?;
    io::write_results(&artifacts, &args.out_dir, Some(&args.data), args.save_samples)?;

    for s in &artifacts.summaries {
        println!("fit: SCP[{}] = {:.4}", s.name, s.scp);
    }
    if let Some(m) = artifacts.mspe {
        println!("fit: held-out MSPE = {m:.6}");
    }
    if let Some(c) = artifacts.coverage {
        println!("fit: interval coverage = {c:.4}");
    }
    if let Some(report) = &artifacts.report {
        println!(
            "fit: worst split R-hat = {:.4} (gate {}): {}",
            report.worst_rhat,
            report.threshold,
            if report.pass { "pass" } else { "FAIL" }
        );
        if !report.pass {
            return Ok(FitOutcome::GateFailed);
        }
    }
    Ok(FitOutcome::Converged)
}

fn cmd_report(args: &ReportArgs) -> Result<(), Error> {
    io::prepare_out_dir(&args.out_dir)?;
    let manifest: RunManifest = serde_json::from_str(&std::fs::read_to_string(&args.manifest)?)?;
    let config = manifest
        .config
        .ok_or_else(|| Error::InvalidConfig("manifest carries no fit config".into()))?;
    let grid_spec = manifest.grid_spec.unwrap_or(InferenceGrid::Observed);
    let (samples, group_names) = io::read_samples(&args.samples)?;

    let locations: Vec<(f64, f64)> = match grid_spec {
        InferenceGrid::Regular { .. } => Vec::new(),
        InferenceGrid::Observed => {
            let data_path = args
                .data
                .clone()
                .or_else(|| manifest.data_path.as_ref().map(PathBuf::from))
                .ok_or_else(|| {
                    Error::InvalidConfig("observed-location grid needs --data or a manifest data path".into())
                })?;
            let (ds, _) = io::read_dataset(&data_path, &args.schema.schema())?;
            // Re-derive the training split recorded in the manifest so the
            // grid matches the original fit.
            match manifest.test_fraction {
                Some(f) if f > 0.0 => {
                    let (train, _) = bsgl::data::train_test_split(&ds, f, config.seed)?;
                    train.locations
                }
                _ => ds.locations,
            }
        }
    };
    let summaries = io::reprocess_samples(
        &samples,
        &group_names,
        config.basis,
        grid_spec,
        &locations,
        args.ci_level,
    )?;
    io::write_surfaces(&summaries, &args.out_dir.join("surfaces.csv"))?;
    io::write_significance(&summaries, &args.out_dir.join("significance.csv"))?;
    io::write_scp(&summaries, &args.out_dir.join("scp.json"))?;
    let mut out_manifest = RunManifest::new("report", config.seed);
    out_manifest.config = Some(config);
    out_manifest.grid_spec = Some(grid_spec);
    out_manifest.group_names = group_names;
    out_manifest.outputs = vec![
        "surfaces.csv".into(),
        "significance.csv".into(),
        "scp.json".into(),
        "manifest.json".into(),
    ];
    out_manifest.write(&args.out_dir.join("manifest.json"))?;
    for s in &summaries {
        println!("report: SCP[{}] = {:.4} at ci {}", s.name, s.scp, args.ci_level);
    }
    Ok(())
}


fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successes; everything else is usage.
            let benign = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if benign { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    let result = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args).map(|_| FitOutcome::Converged),
        Command::Cv(args) => cmd_cv(args).map(|_| FitOutcome::Converged),
        Command::Fit(args) => cmd_fit(args),
        Command::Report(args) => cmd_report(args).map(|_| FitOutcome::Converged),
    };
    match result {
        Ok(FitOutcome::Converged) => ExitCode::SUCCESS,
        Ok(FitOutcome::GateFailed) => {
            let strict = matches!(&cli.command, Command::Fit(f) if f.strict);
            if strict {
                eprintln!("error: convergence gate failed under --strict");
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
