//! Objective traces of the SG loop over independent blocks.
//!
//! `cargo run --release --example descent_trend -- [mas|sas] [snr_db] [beta] [fixed|fresh]`

use dtacmoro::harness::{descent_fraction, optimizer_runs, trace_medians, ExperimentConfig};

fn main() -> dtacmoro::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = ExperimentConfig::default();
    if let Some(sys) = args.first() {
        cfg.set("system", sys)?;
    }
    let snr: f64 = args.get(1).map_or(Ok(10.0), |s| s.parse()).unwrap_or(10.0);
    if let Some(b) = args.get(2) {
        cfg.set("beta", b)?;
    }
    if let Some(o) = args.get(3) {
        cfg.set("observation", o)?;
    }
    let states = optimizer_runs(&cfg, snr, 100)?;
    for (i, s) in states.iter().enumerate().take(5) {
        let (first, last) = trace_medians(&s.objective_trace, 0.1).expect("trace long enough");
        println!("block {i}: median L first {first:.4}, last {last:.4}");
    }
    println!(
        "{} at {snr} dB, beta {}: late median <= early median in {:.0}% of blocks",
        cfg.system,
        cfg.beta,
        100.0 * descent_fraction(&states, 0.1)
    );
    Ok(())
}
