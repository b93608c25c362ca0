use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use csfb::harness::{
    calibrate_c, csv_string, emit_csv, emit_plot_data, emit_wishart_csv, run_experiment,
    CalibrationOptions, ExperimentOutput, Overrides, PlotAxis,
};
use csfb::recovery::RecoveryMethod;
use csfb::{Error, Result};

#[derive(Parser)]
#[command(
    name = "csfb",
    version,
    about = "Compressive-sensing opportunistic feedback simulator"
)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario sweep and write CSV.
    Run(RunArgs),
    /// Find the smallest c/2 reaching a support-recovery target.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with the same keys as the flags; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    antennas: Option<usize>,
    #[arg(long)]
    snr_db: Option<f64>,
    /// per-user or total
    #[arg(long)]
    snr_convention: Option<String>,
    #[arg(long)]
    fb_snr_db: Option<f64>,
    /// Feedback noise σ, overriding --fb-snr-db.
    #[arg(long)]
    sigma: Option<f64>,
    /// analog or digital
    #[arg(long)]
    mode: Option<String>,
    /// maxcorr, lasso, or a comma list
    #[arg(long, value_delimiter = ',')]
    recovery: Option<Vec<String>>,
    /// gaussian or bernoulli
    #[arg(long)]
    matrix: Option<String>,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    sparsity: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    c_half: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    budget_bits: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Round channel counts up instead of to nearest.
    #[arg(long)]
    ceil: bool,
    /// Use unit entry variance and the literal two-user expression.
    #[arg(long)]
    literal_wishart: bool,
    #[arg(long)]
    dedicated_noisy: Option<bool>,
    #[arg(long)]
    dedicated_noiseless: Option<bool>,
    /// Skip points that violate the sufficient recovery conditions.
    #[arg(long)]
    strict_conditions: bool,
    #[arg(long)]
    half_fidelity: bool,
    #[arg(long)]
    alpha_multiplier: Option<f64>,
    #[arg(long)]
    wishart_rho: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    wishart_r: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    wishart_beta: Option<Vec<f64>>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write gnuplot blocks here.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, default_value_t = 100)]
    users: usize,
    #[arg(long, default_value_t = 4)]
    antennas: usize,
    #[arg(long, default_value_t = 10.0)]
    snr_db: f64,
    #[arg(long, default_value_t = 6)]
    sparsity: usize,
    #[arg(long, default_value_t = 0.95)]
    target: f64,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    #[arg(long, default_value = "lasso")]
    recovery: String,
    #[arg(long)]
    ceil: bool,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

fn parse_value<T: DeserializeOwned>(flag: &str, s: &str) -> Result<T> {
    toml::Value::String(s.to_string())
        .try_into()
        .map_err(|_| Error::Config(format!("--{flag}: unrecognized value {s:?}")))
}

fn opt<T: DeserializeOwned>(flag: &str, s: Option<String>) -> Result<Option<T>> {
    s.map(|s| parse_value(flag, &s)).transpose()
}

fn overrides(a: RunArgs) -> Result<(Overrides, Option<PathBuf>)> {
    let recovery = match a.recovery {
        Some(list) => Some(
            list.iter()
                .map(|s| parse_value::<RecoveryMethod>("recovery", s))
                .collect::<Result<_>>()?,
        ),
        None => None,
    };
    let flags = Overrides {
        scenario: opt("scenario", a.scenario)?,
        users: a.users,
        antennas: a.antennas,
        snr_db: a.snr_db,
        snr_convention: opt("snr-convention", a.snr_convention)?,
        fb_snr_db: a.fb_snr_db,
        sigma: a.sigma,
        mode: opt("mode", a.mode)?,
        recovery,
        matrix: opt("matrix", a.matrix)?,
        groups: a.groups,
        sparsity: a.sparsity,
        c_half: a.c_half,
        thresholds: a.thresholds,
        budget_bits: a.budget_bits,
        trials: a.trials,
        seed: a.seed,
        ceil: a.ceil.then_some(true),
        literal_wishart: a.literal_wishart.then_some(true),
        success_bound: None,
        dedicated_noisy: a.dedicated_noisy,
        dedicated_noiseless: a.dedicated_noiseless,
        strict_conditions: a.strict_conditions.then_some(true),
        half_fidelity: a.half_fidelity.then_some(true),
        alpha_multiplier: a.alpha_multiplier,
        wishart_rho: a.wishart_rho,
        wishart_r: a.wishart_r,
        wishart_beta: a.wishart_beta,
        out: a.out,
    };
    let base = match &a.config {
        Some(path) => Overrides::from_file(path)?,
        None => Overrides::default(),
    };
    Ok((base.layered(flags), a.plot))
}

fn run(args: RunArgs) -> Result<()> {
    let (layers, plot) = overrides(args)?;
    let config = layers.resolve()?;
    let output = run_experiment(&config)?;
    match (&output, &config.out) {
        (ExperimentOutput::Throughput(points), Some(path)) => {
            let rows: Vec<_> = points.iter().map(|p| p.row.clone()).collect();
            emit_csv(&rows, path)?;
        }
        (ExperimentOutput::Wishart(rows), Some(path)) => emit_wishart_csv(rows, path)?,
        (ExperimentOutput::Throughput(points), None) => {
            let rows: Vec<_> = points.iter().map(|p| p.row.clone()).collect();
            print!("{}", csv_string(&rows)?);
        }
        (ExperimentOutput::Wishart(rows), None) => print!("{}", csv_string(rows)?),
    }
    if let (Some(path), ExperimentOutput::Throughput(points)) = (plot, &output) {
        emit_plot_data(points, PlotAxis::for_results(points), &path)?;
    }
    Ok(())
}

fn calibrate(a: CalibrateArgs) -> Result<()> {
    let params = csfb::channel::SystemParams::from_db(a.users, a.antennas, a.snr_db)?;
    let options = CalibrationOptions {
        trials: a.trials,
        sigma: a.sigma,
        method: parse_value("recovery", &a.recovery)?,
        rounding: if a.ceil {
            csfb::feedback::Rounding::Ceil
        } else {
            csfb::feedback::Rounding::HalfUp
        },
        seed: a.seed,
        ..CalibrationOptions::default()
    };
    let cal = calibrate_c(&params, a.sparsity, a.target, &options)?;
    println!("c_half,r,success_rate,reached");
    println!(
        "{},{},{},{}",
        cal.c_half, cal.r, cal.success_rate, cal.reached
    );
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) => 2,
        Error::AllInfeasible => 3,
        Error::Io { .. } | Error::Csv { .. } => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("csfb: cannot size the thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Calibrate(a) => calibrate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("csfb: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
