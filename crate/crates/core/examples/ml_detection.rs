//! One relayed block: transmit, detect with the fast search and the brute
//! force oracle, and compare.
//!
//! `cargo run --release --example ml_detection -- [snr_db] [blocks]`

use dtacmoro::acmoro::random_codes;
use dtacmoro::channel::{draw_block_fading, ChannelConfig, DelayProfile};
use dtacmoro::detection::{exhaustive_oracle, ml_detect};
use dtacmoro::harness::ExperimentConfig;
use dtacmoro::modem::{enumerate_codebook, Constellation, Modulation, DEFAULT_CODEBOOK_CAP};
use dtacmoro::numerics::RngStream;
use dtacmoro::relaying::{transmit, BlockModel, NoiseLevels, PowerAllocation};
use dtacmoro::stcodes::{DispersionSet, RelayCode, StcScheme};
use rand::Rng;

fn main() -> dtacmoro::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let snr_db: f64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(6.0);
    let blocks: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let sigma2 = 10f64.powf(-snr_db / 10.0);
    let noise = NoiseLevels {
        sigma2_n1: sigma2,
        sigma2_d: sigma2,
    };
    let mut rng = RngStream::new(5, 0);
    let constellation = Constellation::new(Modulation::Qam4);
    let codebook = enumerate_codebook(&constellation, 2, DEFAULT_CODEBOOK_CAP)?;
    let source = DispersionSet::alamouti();
    let profile = DelayProfile::new(vec![0, 1])?;
    let p_r = ExperimentConfig::default().code_budget();
    let (mut errors, mut agree) = (0, 0);
    for _ in 0..blocks {
        let links = draw_block_fading(&mut rng, &ChannelConfig::default())?;
        let relay = RelayCode::new(StcScheme::DAlamouti, 2, 2, &mut rng)?;
        let alloc = PowerAllocation::equal(1.0, 1.0, p_r, &[true, true], links.relay_antennas())?;
        let model = BlockModel::build(&links, &source, &relay, &profile, &alloc, sigma2)?;
        let codes = random_codes(&model, alloc.p_r, &mut rng)?;
        let sent = &codebook[rng.random_range(0..codebook.len())];
        let rx = transmit(sent, &model, &codes, &alloc, noise, &mut rng)?;
        let problem = model.ml_problem(&codes, &rx.r, &codebook)?;
        let (fast, _) = ml_detect(&problem)?;
        let (slow, _) = exhaustive_oracle(&problem)?;
        agree += usize::from(fast == slow);
        errors += usize::from(&fast != sent);
    }
    println!("{blocks} blocks at {snr_db} dB: fast and brute-force agree on {agree}, block errors {errors}");
    Ok(())
}
