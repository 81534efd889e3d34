//! Energy each relay puts into every slot of the receive window for a
//! given delay profile.
//!
//! `cargo run --release --example delay_window -- [delay1 delay2 ...]`

use dtacmoro::channel::{draw_block_fading, ChannelConfig, DelayProfile};
use dtacmoro::numerics::RngStream;
use dtacmoro::relaying::{path_contributions, BlockModel, PowerAllocation};
use dtacmoro::stcodes::{DispersionSet, RelayCode, StcScheme};

fn main() -> dtacmoro::Result<()> {
    let mut delays: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if delays.is_empty() {
        delays = vec![0, 2];
    }
    let n_relays = delays.len();
    let mut rng = RngStream::new(3, 0);
    let links = draw_block_fading(
        &mut rng,
        &ChannelConfig {
            n_relays,
            ..ChannelConfig::default()
        },
    )?;
    let relay = RelayCode::new(StcScheme::DAlamouti, n_relays, 2, &mut rng)?;
    let profile = DelayProfile::new(delays)?;
    let active = vec![true; n_relays];
    let alloc = PowerAllocation::equal(1.0, 1.0, 1.0, &active, links.relay_antennas())?;
    let model = BlockModel::build(&links, &DispersionSet::alamouti(), &relay, &profile, &alloc, 0.1)?;
    let s = rng.complex_normal_vec(model.block_length, 1.0);
    let parts = path_contributions(&model, &model.identity_codes(), &s)?;
    let w = model.window;
    println!("window of {w} slots, {} receive antennas", model.antennas);
    for k in 0..n_relays {
        let mut slots = vec![0.0; w];
        for (part, path) in parts.iter().zip(&model.paths) {
            if path.relay == k {
                for (i, z) in part.iter().enumerate() {
                    slots[i % w] += z.norm_sqr();
                }
            }
        }
        let cells: Vec<String> = slots.iter().map(|e| format!("{e:8.3}")).collect();
        println!("relay {k} (delay {}): {}", profile.delay(k), cells.join(""));
    }
    Ok(())
}
