use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use sssa::alternation::LoopConfig;
use sssa::harness::calibrate::CalibrationConfig;
use sssa::harness::sweep::write_config;
use sssa::harness::{
    calibrate, evaluate_outputs, fit_bundle, load_bundle, run_sweep, write_fit, Bundle, FitJob,
    SweepConfig,
};
use sssa::harness::csvio::write_json;
use sssa::init::InitKind;
use sssa::method::{builtin_methods, SolverSettings};
use sssa::selfexpr::{DEFAULT_ADMM_MAX_ITER, DEFAULT_ADMM_TOL, DEFAULT_ALPHA_E, DEFAULT_ALPHA_Z};
use sssa::synth::{make_dataset, Normalization, SyntheticSpec};
use sssa::{ErrorClass, SssaError};

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_DATA: u8 = 4;
const EXIT_SOLVER: u8 = 5;

/// Subspace clustering and completion of data with missing entries.
#[derive(Parser)]
#[command(name = "sssa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic union-of-subspaces bundle.
    Synth(SynthArgs),
    /// Complete and segment one bundle.
    Fit(FitArgs),
    /// Run a seeded grid of synthetic experiments.
    Sweep(SweepArgs),
    /// Grid-search the lambda scale constants on labelled bundles.
    Calibrate(CalibrateArgs),
    /// Score a previous fit against a bundle's ground truth.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Lr,
    Hr,
    HrSmall,
}

impl Preset {
    fn spec(self) -> SyntheticSpec {
        match self {
            Preset::Lr => SyntheticSpec::low_rank(),
            Preset::Hr => SyntheticSpec::high_rank(),
            Preset::HrSmall => SyntheticSpec::high_rank_small(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Init {
    Zero,
    Mean,
    Random,
}

impl From<Init> for InitKind {
    fn from(i: Init) -> Self {
        match i {
            Init::Zero => InitKind::Zero,
            Init::Mean => InitKind::Mean,
            Init::Random => InitKind::Random,
        }
    }
}

#[derive(Args)]
struct SolverArgs {
    /// Weight of the sparse error term; derived from the data when unset.
    #[arg(long)]
    lambda_e: Option<f64>,
    /// Weight of the dense noise term; derived from the data when unset.
    #[arg(long)]
    lambda_z: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_ALPHA_E)]
    alpha_e: f64,
    #[arg(long, default_value_t = DEFAULT_ALPHA_Z)]
    alpha_z: f64,
    /// Require every column's coefficients to sum to one.
    #[arg(long)]
    affine: bool,
    #[arg(long, default_value_t = DEFAULT_ADMM_TOL)]
    admm_tol: f64,
    #[arg(long, default_value_t = DEFAULT_ADMM_MAX_ITER)]
    admm_max_iter: usize,
    #[arg(long)]
    admm_rho: Option<f64>,
    /// Rebalance the ADMM penalty from the residuals.
    #[arg(long)]
    adaptive_rho: bool,
}

impl SolverArgs {
    fn settings(&self) -> SolverSettings {
        SolverSettings {
            lambda_e: self.lambda_e,
            lambda_z: self.lambda_z,
            alpha_e: self.alpha_e,
            alpha_z: self.alpha_z,
            affine: self.affine,
            admm_rho: self.admm_rho,
            admm_tol: self.admm_tol,
            admm_max_iter: self.admm_max_iter,
            adaptive_rho: self.adaptive_rho,
        }
    }
}

#[derive(Args)]
struct LoopArgs {
    #[arg(long, value_enum, default_value = "zero")]
    init: Init,
    #[arg(long, default_value_t = LoopConfig::default().outer_tol)]
    outer_tol: f64,
    #[arg(long, default_value_t = LoopConfig::default().outer_max_iter)]
    outer_max_iter: usize,
}

impl LoopArgs {
    fn config(&self, seed: u64) -> LoopConfig {
        LoopConfig {
            init: self.init.into(),
            seed,
            outer_tol: self.outer_tol,
            outer_max_iter: self.outer_max_iter,
            ..LoopConfig::default()
        }
    }
}

#[derive(Args)]
struct DataArgs {
    #[arg(long, value_enum, default_value = "lr")]
    preset: Preset,
    /// Scale the whole matrix to [0, 1] before adding noise.
    #[arg(long)]
    range01: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Probability that an entry is missing.
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Fraction of entries corrupted by outliers.
    #[arg(long, default_value_t = 0.0)]
    outliers: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Bundle directory.
    bundle: PathBuf,
    #[arg(long, default_value = "sssa")]
    method: String,
    /// Number of groups; read from the bundle when unset.
    #[arg(long)]
    k: Option<usize>,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    looping: LoopArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    workers: Option<usize>,
    /// Do not write timing.json.
    #[arg(long)]
    no_timing: bool,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8")]
    rho: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    sigma: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    outliers: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "sssa,ssc-ewzf")]
    method: Vec<String>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Master seed; trial t uses seed + t.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    looping: LoopArgs,
    #[arg(long)]
    workers: Option<usize>,
    /// Leave the wall_ms column empty so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
    /// Output directory for sweep.csv, aggregate.csv and config.json.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Labelled bundle directories.
    #[arg(required = true)]
    bundles: Vec<PathBuf>,
    /// Candidate values for the sparse-error scale.
    #[arg(long, value_delimiter = ',', default_value = "1,5,20")]
    grid_alpha_e: Vec<f64>,
    /// Candidate values for the noise scale.
    #[arg(long, value_delimiter = ',', default_value = "50,100,300,800")]
    grid_alpha_z: Vec<f64>,
    #[arg(long, default_value = "sssa")]
    method: String,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    looping: LoopArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    workers: Option<usize>,
    /// Path of the calibration report (JSON).
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Bundle directory holding the ground truth.
    bundle: PathBuf,
    /// Output directory of a previous fit.
    fit: PathBuf,
    /// Also write the metrics to this file.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn workers(n: Option<usize>) -> usize {
    n.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn pool(n: Option<usize>) -> Result<rayon::ThreadPool, SssaError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers(n))
        .build()
        .map_err(|e| SssaError::Config(format!("cannot start worker pool: {e}")))
}

fn synth(args: &SynthArgs) -> Result<(), SssaError> {
    let spec = SyntheticSpec {
        rho: args.rho,
        sigma: args.sigma,
        outlier_frac: args.outliers,
        seed: args.seed,
        ..with_normalization(args.data.preset.spec(), args.data.range01)
    };
    let ds = make_dataset(&spec)?;
    Bundle::from_dataset(&ds).write(&args.out)?;
    println!(
        "wrote {}x{} bundle ({} missing entries) to {}",
        ds.observed.nrows(),
        ds.observed.ncols(),
        ds.observed.missing_count(),
        args.out.display()
    );
    Ok(())
}

fn fit(args: &FitArgs) -> Result<(), SssaError> {
    let bundle = load_bundle(&args.bundle)?;
    let job = FitJob {
        method: args.method.clone(),
        settings: args.solver.settings(),
        looping: args.looping.config(args.seed),
        k: args.k,
    };
    let methods = builtin_methods();
    let result = pool(args.workers)?.install(|| fit_bundle(&bundle, &job, &methods))?;
    write_fit(&args.out, &result, !args.no_timing)?;
    let r = &result.report;
    if r.flags.admm_unconverged {
        log::warn!("some ADMM column solves hit the iteration cap; see report.json");
    }
    println!(
        "{}: {} outer iterations, converged {}, e_c {}, e_r {}",
        r.method,
        r.trace.len(),
        r.flags.outer_converged,
        fmt_opt(r.metrics.e_c),
        fmt_opt(r.metrics.e_r)
    );
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |v| format!("{v:.4}"))
}

fn with_normalization(spec: SyntheticSpec, range01: bool) -> SyntheticSpec {
    SyntheticSpec {
        normalization: if range01 {
            Normalization::Range01
        } else {
            Normalization::None
        },
        ..spec
    }
}

fn sweep(args: &SweepArgs) -> Result<(), SssaError> {
    let cfg = SweepConfig {
        rhos: args.rho.clone(),
        sigmas: args.sigma.clone(),
        outliers: args.outliers.clone(),
        methods: args.method.clone(),
        trials: args.trials,
        master_seed: args.seed,
        settings: args.solver.settings(),
        looping: args.looping.config(args.seed),
        ..SweepConfig::new(with_normalization(args.data.preset.spec(), args.data.range01))
    };
    info!("sweep of {} runs on {} workers", cfg.len(), workers(args.workers));
    let result = run_sweep(&cfg, workers(args.workers))?;
    std::fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    result.write(
        &args.out.join("sweep.csv"),
        &args.out.join("aggregate.csv"),
        !args.no_timing,
    )?;
    write_config(&args.out.join("config.json"), &cfg)?;
    for a in result.aggregate() {
        println!(
            "{:<9} rho {:<5} sigma {:<5} outliers {:<5} mean e_c {} median e_c {} mean e_r {} failed {}",
            a.method,
            a.rho,
            a.sigma,
            a.outlier_frac,
            fmt_opt(a.mean_e_c),
            fmt_opt(a.median_e_c),
            fmt_opt(a.mean_e_r),
            a.failed
        );
    }
    Ok(())
}

fn calibrate_cmd(args: &CalibrateArgs) -> Result<(), SssaError> {
    let bundles = args
        .bundles
        .iter()
        .map(|p| load_bundle(p))
        .collect::<Result<Vec<_>, _>>()?;
    let cfg = CalibrationConfig {
        alpha_e: args.grid_alpha_e.clone(),
        alpha_z: args.grid_alpha_z.clone(),
        method: args.method.clone(),
        settings: args.solver.settings(),
        looping: args.looping.config(args.seed),
    };
    let report = calibrate(&bundles, &cfg, workers(args.workers))?;
    write_json(&args.out, &report)?;
    println!(
        "best alpha_e {} alpha_z {}: mean e_c {:.4}, mean e_r {}",
        report.best.alpha_e,
        report.best.alpha_z,
        report.best.mean_e_c,
        fmt_opt(report.best.mean_e_r)
    );
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<(), SssaError> {
    let bundle = load_bundle(&args.bundle)?;
    let metrics = evaluate_outputs(&bundle, &args.fit)?;
    if let Some(out) = &args.out {
        write_json(out, &metrics)?;
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&metrics).expect("metrics serialize")
    );
    Ok(())
}

fn io_err(path: &Path, e: std::io::Error) -> SssaError {
    SssaError::Io {
        path: path.display().to_string(),
        source: e,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SSSA_LOG", "warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Fit(a) => fit(a),
        Command::Sweep(a) => sweep(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Eval(a) => eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Usage => EXIT_USAGE,
                ErrorClass::Io => EXIT_IO,
                ErrorClass::Data => EXIT_DATA,
                ErrorClass::Solver => EXIT_SOLVER,
            })
        }
    }
}
