//! Fitted diversity order of the delayed two-relay network.
//!
//! `cargo run --release --example diversity_order -- [mas|sas] [trials]`

use dtacmoro::harness::{estimate_diversity_order, run_sweep, ExperimentConfig};

fn main() -> dtacmoro::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = ExperimentConfig::default();
    cfg.set("system", args.first().map_or("mas", String::as_str))?;
    cfg.set("trials", args.get(1).map_or("200000", String::as_str))?;
    cfg.set("snr_db_range", "0:2:12")?;
    let curve = run_sweep(&cfg)?.records;
    for r in &curve {
        println!("{:>5} dB  {:.3e} ± {:.1e}", r.snr_db, r.ber, r.ci95);
    }
    for (lo, hi) in [(0.0, 6.0), (4.0, 12.0), (6.0, 12.0)] {
        match estimate_diversity_order(&curve, lo, hi) {
            Ok(d) => println!("slope over {lo}..{hi} dB: {d:.2}"),
            Err(e) => println!("slope over {lo}..{hi} dB: {e}"),
        }
    }
    Ok(())
}
