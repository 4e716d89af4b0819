//! `detect` — Monte-Carlo BER/MSE experiments for dual-hop relay detection.
//!
//! Exit codes: 0 success, 1 bad configuration or I/O failure, 2 when more
//! than 10% of trials failed at some grid point. `DETECT_LOG` controls log
//! verbosity (error/warn/info/debug/trace).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use detect_cli::config::{parse_file, ConfigPatch, ExperimentConfig};
use detect_cli::csvout::render_csv;
use detect_cli::driver::run_experiment;
use detect_cli::selftest::run_selftest;

#[derive(Parser)]
#[command(name = "detect", version, about = "Dual-hop massive-MIMO relay symbol detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo sweep over the SNR grid and emit a CSV
    Run(RunArgs),
    /// Run only the state-evolution predictor over the SNR grid
    Se(RunArgs),
    /// Run the built-in oracle-equivalence checks
    Selftest,
}

#[derive(Args)]
struct RunArgs {
    /// Flat key=value config file; CLI flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Source antennas
    #[arg(long = "L")]
    l: Option<usize>,
    /// Relay antennas
    #[arg(long = "M")]
    m: Option<usize>,
    /// Destination antennas
    #[arg(long = "N")]
    n: Option<usize>,
    /// Symbol prior (qpsk)
    #[arg(long)]
    prior: Option<String>,
    /// First-hop SNR grid in dB, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr1: Option<Vec<f64>>,
    /// Fixed second-hop SNR in dB
    #[arg(long, allow_hyphen_values = true)]
    snr2: Option<f64>,
    /// Second-hop SNR as an offset from SNR1 in dB
    #[arg(long = "snr2-offset-db", allow_hyphen_values = true, conflicts_with = "snr2")]
    snr2_offset_db: Option<f64>,
    /// Monte-Carlo trials per grid point
    #[arg(long)]
    trials: Option<usize>,
    /// Iteration budget for the iterative detectors
    #[arg(long)]
    iters: Option<usize>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Algorithms: proposed,lmmse_ls,single_lmmse,ep_ls,se_predictor
    #[arg(long, value_delimiter = ',')]
    algos: Option<Vec<String>>,
    /// Variance floor
    #[arg(long = "v-min")]
    v_min: Option<f64>,
    /// Variance ceiling
    #[arg(long = "v-max")]
    v_max: Option<f64>,
    /// Damping factor in (0,1]; 1 disables damping
    #[arg(long)]
    damping: Option<f64>,
    /// Early-stop tolerance; 0 disables early stopping
    #[arg(long = "stop-tol")]
    stop_tol: Option<f64>,
    /// Spectrum source for the SE predictor: empirical|marchenko_pastur
    #[arg(long = "se-spectrum")]
    se_spectrum: Option<String>,
    /// SE mixing-stage averaging: padded|nonzero
    #[arg(long = "se-average")]
    se_average: Option<String>,
    /// Output CSV path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all available cores)
    #[arg(long)]
    workers: Option<usize>,
    /// Record measured wall times (breaks byte-for-byte reproducibility)
    #[arg(long)]
    timing: bool,
}

impl RunArgs {
    fn patch(&self) -> Result<ConfigPatch, detect_cli::config::ConfigError> {
        let mut p = ConfigPatch::default();
        p.l = self.l;
        p.m = self.m;
        p.n = self.n;
        p.prior = self.prior.clone();
        p.snr1_db = self.snr1.clone();
        if let Some(v) = self.snr2 {
            p.assign("snr2", &v.to_string())?;
        }
        if let Some(v) = self.snr2_offset_db {
            p.assign("snr2_offset_db", &v.to_string())?;
        }
        p.trials = self.trials;
        p.iterations = self.iters;
        p.master_seed = self.seed;
        p.algos = self.algos.clone();
        p.v_min = self.v_min;
        p.v_max = self.v_max;
        p.damping = self.damping;
        p.stop_tol = self.stop_tol;
        if let Some(v) = &self.se_spectrum {
            p.assign("se_spectrum", v)?;
        }
        if let Some(v) = &self.se_average {
            p.assign("se_average", v)?;
        }
        p.out = self.out.clone();
        p.workers = self.workers;
        if self.timing {
            p.timing = Some(true);
        }
        Ok(p)
    }
}

fn build_config(args: &RunArgs, force_se_only: bool) -> anyhow::Result<ExperimentConfig> {
    let mut config = ExperimentConfig::default();
    if let Some(path) = &args.config {
        config.apply(&parse_file(path)?)?;
    }
    config.apply(&args.patch()?)?;
    if force_se_only {
        config.algos = vec!["se_predictor".to_string()];
        config.validate()?;
    }
    Ok(config)
}

fn execute(config: &ExperimentConfig) -> anyhow::Result<ExitCode> {
    let output = run_experiment(config)?;
    let text = render_csv(config, &output.rows);
    match &config.out {
        Some(path) => {
            std::fs::write(path, &text)?;
            log::info!("wrote {} rows to {}", output.rows.len(), path.display());
        }
        None => print!("{text}"),
    }
    if output.excessive_failures {
        eprintln!("detect: more than 10% of trials failed at some grid point");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::default().filter_or("DETECT_LOG", "warn"),
    )
    .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => build_config(args, false).and_then(|c| execute(&c)),
        Command::Se(args) => build_config(args, true).and_then(|c| execute(&c)),
        Command::Selftest => {
            return if run_selftest() { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("detect: {err:#}");
            ExitCode::from(1)
        }
    }
}
