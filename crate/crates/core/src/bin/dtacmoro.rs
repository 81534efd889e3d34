use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dtacmoro::harness::{estimate_diversity_order, measure_gain_db, read_curve, run_to_dir, ExperimentConfig};

#[derive(Parser)]
#[command(version, about = "BER simulation of cooperative relay networks with adaptive code matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a BER sweep and write ber.csv and manifest.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// SNR gain of curve B over curve A at a target BER.
    Gain {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        ber: f64,
    },
    /// Diversity order fitted over an SNR window.
    Diversity {
        #[arg(long)]
        curve: PathBuf,
        #[arg(long)]
        lo: f64,
        #[arg(long)]
        hi: f64,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> dtacmoro::Result<()> {
    match cmd {
        Command::Run { config, out, seed, workers } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let (csv, json, manifest) = run_to_dir(&cfg, &out)?;
            for r in &manifest.records {
                eprintln!("{:>6} dB  ber {:.3e} ± {:.1e}  ({} errors, {:.1}s)", r.snr_db, r.ber, r.ci95, r.bit_errors, r.wall_time);
            }
            println!("{}\n{}", csv.display(), json.display());
        }
        Command::Gain { a, b, ber } => {
            println!("{:.3}", measure_gain_db(&read_curve(&a)?, &read_curve(&b)?, ber)?);
        }
        Command::Diversity { curve, lo, hi } => {
            println!("{:.3}", estimate_diversity_order(&read_curve(&curve)?, lo, hi)?);
        }
    }
    Ok(())
}
