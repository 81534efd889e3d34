//! BER sweep from a key=value config, printed as CSV.
//!
//! `cargo run --release --example ber_sweep -- [config] [key=value ...]`

use dtacmoro::harness::{run_sweep_with, to_csv, ExperimentConfig};

fn main() -> dtacmoro::Result<()> {
    let mut args = std::env::args().skip(1).peekable();
    let mut cfg = match args.peek() {
        Some(a) if !a.contains('=') => {
            let text = std::fs::read_to_string(args.next().expect("peeked"))?;
            ExperimentConfig::parse(&text)?
        }
        _ => {
            let mut cfg = ExperimentConfig::default();
            cfg.set("snr_db_range", "0:2:10")?;
            cfg.set("trials", "20000")?;
            cfg
        }
    };
    for kv in args {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| dtacmoro::Error::InvalidParameter(format!("expected key=value, got {kv}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    let manifest = run_sweep_with(&cfg, |done| {
        if let Some(r) = done.last() {
            eprintln!("{} dB: {} errors in {} bits", r.snr_db, r.bit_errors, r.bits);
        }
        Ok(())
    })?;
    print!("{}", to_csv(&manifest.records));
    Ok(())
}
