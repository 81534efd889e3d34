//! BER of the relay and source-antenna selection policies side by side.
//!
//! `cargo run --release --example relay_selection -- [mas|sas] [trials]`

use dtacmoro::harness::{run_sweep, ExperimentConfig};

fn main() -> dtacmoro::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let system = args.first().map_or("mas", String::as_str);
    let trials = args.get(1).map_or("20000", String::as_str);
    let policies = ["equal", "or", "os", "fo"];
    let mut curves = Vec::new();
    for policy in policies {
        let mut cfg = ExperimentConfig::default();
        cfg.set("system", system)?;
        cfg.set("policy", policy)?;
        cfg.set("snr_db_range", "0:2:10")?;
        cfg.set("trials", trials)?;
        curves.push(run_sweep(&cfg)?.records);
    }
    println!("snr_db  {}", policies.map(|p| format!("{p:<10}")).join(" "));
    for i in 0..curves[0].len() {
        let row: Vec<String> = curves.iter().map(|c| format!("{:.3e}", c[i].ber)).collect();
        println!("{:>6}  {}", curves[0][i].snr_db, row.join("  "));
    }
    Ok(())
}
