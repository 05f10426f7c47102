use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use spgd_cli::config::validate_config;
use spgd_cli::experiment::run_experiment;
use surrogate_pgd::data::{generate_simulated, DEFAULT_POSITIVE_FRAC, DEFAULT_SIMULATED_N};

#[derive(Parser)]
#[command(name = "spgd", version, about = "Train linear classifiers against black-box metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Output directory; overrides `experiment.output`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config file and report every problem found.
    Validate { config: PathBuf },
    /// Write a generated dataset as CSV.
    GenData {
        kind: DataKind,
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SIMULATED_N)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_POSITIVE_FRAC)]
        positive_frac: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DataKind {
    Simulated,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Validate { config } => match validate_config(&config) {
            Ok(cfg) => {
                println!("{}: ok ({} experiment, {} seeds)", config.display(), cfg.experiment, cfg.seeds.len());
                ExitCode::SUCCESS
            }
            Err(errs) => {
                eprintln!("{}:\n{errs}", config.display());
                ExitCode::FAILURE
            }
        },
        Command::Run { config, out } => {
            let cfg = match validate_config(&config) {
                Ok(c) => c,
                Err(errs) => {
                    eprintln!("{}:\n{errs}", config.display());
                    return ExitCode::FAILURE;
                }
            };
            let report = run_experiment(&cfg);
            print!("{}", report.table());
            if let Some(dir) = out.or(cfg.output) {
                let now = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
                match report.write(&dir, now) {
                    Ok(path) => println!("report written to {}", path.display()),
                    Err(e) => {
                        eprintln!("cannot write report to {}: {e}", dir.display());
                        return ExitCode::FAILURE;
                    }
                }
            }
            ExitCode::SUCCESS
        }
        Command::GenData {
            kind: DataKind::Simulated,
            out,
            n,
            positive_frac,
            seed,
        } => match generate_simulated(n, positive_frac, seed).and_then(|ds| ds.write_csv(&out)) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("gen-data: {e}");
                ExitCode::FAILURE
            }
        },
    }
}
