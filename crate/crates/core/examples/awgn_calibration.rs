//! Uncoded BPSK over AWGN against the closed form `Q(√(2 Eb/N0))`.
//!
//! `cargo run --release --example awgn_calibration -- [trials]`

use dtacmoro::harness::{run_sweep, ExperimentConfig};
use statrs::function::erf::erfc;

fn main() -> dtacmoro::Result<()> {
    let trials = std::env::args().nth(1).unwrap_or_else(|| "1000000".into());
    let mut cfg = ExperimentConfig::default();
    cfg.set("system", "awgn")?;
    cfg.set("snr_db_range", "0:1:8")?;
    cfg.set("trials", &trials)?;
    cfg.set("min_bit_errors", "0")?;
    println!("snr_db  simulated   exact       rel_err");
    for r in run_sweep(&cfg)?.records {
        let exact = 0.5 * erfc(10f64.powf(r.snr_db / 10.0).sqrt());
        println!(
            "{:>6}  {:.3e}  {:.3e}  {:+.2}%",
            r.snr_db,
            r.ber,
            exact,
            100.0 * (r.ber - exact) / exact
        );
    }
    Ok(())
}
