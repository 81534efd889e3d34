//! SNR gain of trained code matrices over fixed random ones at BER 1e-3.
//!
//! `cargo run --release --example training_gain -- [mas|sas] [beta] [trials]`

use dtacmoro::harness::{measure_gain_db, run_sweep, ExperimentConfig};

fn main() -> dtacmoro::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let system = args.first().map_or("mas", String::as_str);
    let beta = args.get(1).map_or("0.5", String::as_str);
    let trials = args.get(2).map_or("50000", String::as_str);
    let curve = |optimize: &str| -> dtacmoro::Result<_> {
        let mut cfg = ExperimentConfig::default();
        cfg.set("system", system)?;
        cfg.set("snr_db_range", "0:2:14")?;
        cfg.set("trials", trials)?;
        cfg.set("observation", "fresh")?;
        cfg.set("beta", beta)?;
        cfg.set("optimize", optimize)?;
        Ok(run_sweep(&cfg)?.records)
    };
    let fixed = curve("off")?;
    let trained = curve("on")?;
    println!("snr_db  fixed      trained");
    for (a, b) in fixed.iter().zip(&trained) {
        println!("{:>6}  {:.3e}  {:.3e}", a.snr_db, a.ber, b.ber);
    }
    match measure_gain_db(&fixed, &trained, 1e-3) {
        Ok(g) => println!("gain at BER 1e-3: {g:.2} dB"),
        Err(e) => println!("gain at BER 1e-3 unavailable: {e}"),
    }
    Ok(())
}
