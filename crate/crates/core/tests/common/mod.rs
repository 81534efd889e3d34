//! Shared fixtures and a slot-by-slot reference model of the relay network.
#![allow(dead_code)]

use dtacmoro::channel::{draw_block_fading, ChannelConfig, DelayProfile, LinkSet, SystemKind};
use dtacmoro::numerics::{RngStream, C64};
use dtacmoro::relaying::{AdjustableCodes, BlockModel, PowerAllocation};
use dtacmoro::stcodes::{DispersionSet, RelayCode, StcScheme};

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// A random block: links, codes and the model built from them.
pub struct Fixture {
    pub links: LinkSet,
    pub source_code: DispersionSet,
    pub relay_code: RelayCode,
    pub profile: DelayProfile,
    pub alloc: PowerAllocation,
    pub sigma2_n1: f64,
    pub model: BlockModel,
}

impl Fixture {
    pub fn new(
        system: SystemKind,
        scheme: StcScheme,
        antennas: usize,
        delays: &[usize],
        direct_link: bool,
        rng: &mut RngStream,
    ) -> Fixture {
        let n_relays = delays.len();
        let links = draw_block_fading(
            rng,
            &ChannelConfig {
                system,
                n_relays,
                antennas,
                sigma2_f: 1.0,
                sigma2_g: 1.0,
                direct_link,
            },
        )
        .unwrap();
        let source_code = DispersionSet::for_scheme(scheme, antennas, rng).unwrap();
        let relay_code = RelayCode::new(scheme, n_relays, antennas, rng).unwrap();
        let profile = DelayProfile::new(delays.to_vec()).unwrap();
        let alloc = PowerAllocation::equal(1.0, 1.0, 1.0, &vec![true; n_relays], links.relay_antennas()).unwrap();
        let sigma2_n1 = 0.3;
        let model = BlockModel::build(&links, &source_code, &relay_code, &profile, &alloc, sigma2_n1).unwrap();
        Fixture {
            links,
            source_code,
            relay_code,
            profile,
            alloc,
            sigma2_n1,
            model,
        }
    }
}

/// Unnormalised random codes of the right shape for `model`.
pub fn random_codes(model: &BlockModel, rng: &mut RngStream) -> AdjustableCodes {
    AdjustableCodes::gaussian(model.system, model.paths.len(), model.antennas, model.window, rng)
}

/// `T×N` block with entry `(t, n) = (A_n s)_t` or `(A_n conj(s))_t`.
pub fn space_time_block(s: &[C64], d: &DispersionSet) -> Vec<Vec<C64>> {
    let t_len = d.block_length();
    let mut out = vec![vec![ZERO; d.antennas()]; t_len];
    for (n, disp) in d.matrices().iter().enumerate() {
        for t in 0..t_len {
            let mut acc = ZERO;
            for i in 0..t_len {
                let x = if disp.conjugate { s[i].conj() } else { s[i] };
                acc += disp.matrix[(t, i)] * x;
            }
            out[t][n] = acc;
        }
    }
    out
}

/// Receive vector computed by walking every relay's transmission slot by slot.
///
/// `relay_noise[k]` and `dest_noise` use the same layout as
/// [`dtacmoro::relaying::ReceiveVector`].
pub fn time_domain_receive(
    f: &Fixture,
    codes: &AdjustableCodes,
    s: &[C64],
    relay_noise: &[Vec<C64>],
    dest_noise: &[C64],
) -> Vec<C64> {
    let links = &f.links;
    let n = links.antennas();
    let t_len = f.source_code.block_length();
    let d_max = f.profile.delays().iter().copied().max().unwrap();
    let w_len = t_len + d_max;
    let c = (f.alloc.p1 * t_len as f64 / n as f64).sqrt();
    let block = space_time_block(s, &f.source_code);
    let mut r = vec![ZERO; n * w_len];

    for k in 0..links.n_relays() {
        let delay = f.profile.delay(k);
        let fk = links.source_relay(k);
        let gk = links.relay_dest(k);
        match links.system() {
            SystemKind::Mas => {
                // x[t][i]: relay antenna i, slot t.
                let mut x = vec![vec![ZERO; n]; t_len];
                for t in 0..t_len {
                    for i in 0..n {
                        let mut acc = ZERO;
                        for m in 0..n {
                            acc += block[t][m] * fk[(m, i)];
                        }
                        x[t][i] = acc * c + relay_noise[k][i * t_len + t];
                    }
                }
                for j in 0..n {
                    let p_kj = f.alloc.per_antenna[k][j];
                    if p_kj == 0.0 {
                        continue;
                    }
                    let rho = (p_kj / (links.sigma2_f() * f.alloc.p1 + f.sigma2_n1)).sqrt();
                    let w = f.relay_code.antenna_weights(k, j).unwrap();
                    let mut v = vec![ZERO; n * w_len];
                    for t in 0..t_len {
                        let mut sent = ZERO;
                        for i in 0..n {
                            sent += x[t][i] * w[i];
                        }
                        for a in 0..n {
                            v[a * w_len + t + delay] = gk[(j, a)] * sent;
                        }
                    }
                    let out = codes.apply(k * n + j, &v).unwrap();
                    for (acc, o) in r.iter_mut().zip(out) {
                        *acc += o * rho;
                    }
                }
            }
            SystemKind::Sas => {
                let p_k = f.alloc.per_antenna[k][0];
                if p_k == 0.0 {
                    continue;
                }
                let rho = (p_k / (links.sigma2_f() * f.alloc.p1 + f.sigma2_n1)).sqrt();
                let x: Vec<C64> = (0..t_len)
                    .map(|t| {
                        let mut acc = ZERO;
                        for m in 0..n {
                            acc += block[t][m] * fk[(m, 0)];
                        }
                        acc * c + relay_noise[k][t]
                    })
                    .collect();
                let relay_block = space_time_block(&x, f.relay_code.codeword());
                let weights = f.relay_code.column_weights(k).unwrap();
                let sent: Vec<C64> = relay_block
                    .iter()
                    .map(|row| row.iter().zip(weights).map(|(a, b)| a * b).sum())
                    .collect();
                for j in 0..n {
                    let mut v = vec![ZERO; n * w_len];
                    for t in 0..t_len {
                        v[j * w_len + t + delay] = gk[(0, j)] * sent[t];
                    }
                    let out = codes.apply(k * n + j, &v).unwrap();
                    for (acc, o) in r.iter_mut().zip(out) {
                        *acc += o * rho;
                    }
                }
            }
        }
    }

    if let Some(h) = links.direct() {
        for a in 0..n {
            for t in 0..t_len {
                let mut acc = ZERO;
                for m in 0..n {
                    acc += block[t][m] * h[(m, a)];
                }
                r.push(acc * c);
            }
        }
    }
    for (acc, z) in r.iter_mut().zip(dest_noise) {
        *acc += z;
    }
    r
}

/// Every delay profile over `n_relays` relays with minimum 0 and maximum at
/// most `d_max`.
pub fn delay_profiles(n_relays: usize, d_max: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let total = (d_max + 1).pow(n_relays as u32);
    for code in 0..total {
        let mut c = code;
        let profile: Vec<usize> = (0..n_relays)
            .map(|_| {
                let d = c % (d_max + 1);
                c /= d_max + 1;
                d
            })
            .collect();
        if profile.contains(&0) {
            out.push(profile);
        }
    }
    out
}

pub fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Relative error between the analytic gradient of `L` and central finite
/// differences of step `eps`, over every free real coordinate of the codes.
///
/// With `∇ = ∂L/∂Φ*`, `∂L/∂Re Φ = 2 Re ∇` and `∂L/∂Im Φ = 2 Im ∇`.
pub fn gradient_fd_error(f: &Fixture, codes: &AdjustableCodes, r: &[C64], s_hat: &[C64], eps: f64) -> f64 {
    use dtacmoro::acmoro::{lagrangian, sg_gradient};
    let grad = sg_gradient(r, &f.model, codes, s_hat).unwrap();
    let loss = |c: &AdjustableCodes| lagrangian(r, &f.model, c, s_hat).unwrap();
    let mut diff_sq = 0.0;
    let mut ref_sq = 0.0;
    let mut accumulate = |analytic: C64, perturbed: &mut dyn FnMut(C64) -> f64| {
        for (unit, part) in [(C64::new(eps, 0.0), 2.0 * analytic.re), (C64::new(0.0, eps), 2.0 * analytic.im)] {
            let fd = (perturbed(unit) - perturbed(-unit)) / (2.0 * eps);
            diff_sq += (fd - part) * (fd - part);
            ref_sq += part * part;
        }
    };
    match (codes, &grad) {
        (AdjustableCodes::Matrices { blocks, window, phi }, AdjustableCodes::Matrices { phi: g, .. }) => {
            for p in 0..phi.len() {
                for b in 0..*blocks {
                    for i in 0..*window {
                        for j in 0..*window {
                            let (row, col) = (b * window + i, b * window + j);
                            accumulate(g[p][(row, col)], &mut |delta| {
                                let mut c = codes.clone();
                                if let AdjustableCodes::Matrices { phi, .. } = &mut c {
                                    phi[p][(row, col)] += delta;
                                }
                                loss(&c)
                            });
                        }
                    }
                }
            }
        }
        (AdjustableCodes::Scalars(v), AdjustableCodes::Scalars(g)) => {
            for p in 0..v.len() {
                accumulate(g[p], &mut |delta| {
                    let mut c = codes.clone();
                    if let AdjustableCodes::Scalars(v) = &mut c {
                        v[p] += delta;
                    }
                    loss(&c)
                });
            }
        }
        _ => panic!("gradient shape does not match the codes"),
    }
    (diff_sq / ref_sq).sqrt()
}

/// Worst finite-difference error over `instances` noisy blocks of `system`.
pub fn worst_gradient_error(system: SystemKind, instances: usize, eps: f64, seed: u64) -> f64 {
    use dtacmoro::acmoro::normalize_power;
    use dtacmoro::relaying::{transmit, NoiseLevels};
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let mut rng = RngStream::new(seed, i as u64);
        let delays = [[0, 0], [0, 1], [1, 0]][i % 3];
        let f = Fixture::new(system, StcScheme::DAlamouti, 2, &delays, i % 2 == 1, &mut rng);
        let codes = normalize_power(&random_codes(&f.model, &mut rng), f.alloc.p_r).unwrap();
        let s = rng.complex_normal_vec(2, 1.0);
        let noise = NoiseLevels {
            sigma2_n1: f.sigma2_n1,
            sigma2_d: 0.1,
        };
        let rx = transmit(&s, &f.model, &codes, &f.alloc, noise, &mut rng).unwrap();
        // a wrong decision keeps the residual, and hence the gradient, large
        let s_hat = rng.complex_normal_vec(2, 1.0);
        worst = worst.max(gradient_fd_error(&f, &codes, &rx.r, &s_hat, eps));
    }
    worst
}

/// Number of noisy instances on which `ml_detect` and `exhaustive_oracle`
/// return the same decision and metric.
pub fn ml_oracle_agreement(modulation: dtacmoro::modem::Modulation, instances: usize, seed: u64) -> usize {
    use dtacmoro::acmoro::normalize_power;
    use dtacmoro::detection::{exhaustive_oracle, ml_detect};
    use dtacmoro::modem::{enumerate_codebook, Constellation};
    use dtacmoro::relaying::{transmit, NoiseLevels};
    let constellation = Constellation::new(modulation);
    let codebook = enumerate_codebook(&constellation, 2, 1 << 16).unwrap();
    let mut agree = 0;
    for i in 0..instances {
        let mut rng = RngStream::new(seed, i as u64);
        let system = if i % 2 == 0 { SystemKind::Mas } else { SystemKind::Sas };
        let delays = [[0, 0], [0, 1], [2, 0]][i % 3];
        let f = Fixture::new(system, StcScheme::DAlamouti, 2, &delays, i % 4 < 2, &mut rng);
        let codes = normalize_power(&random_codes(&f.model, &mut rng), f.alloc.p_r).unwrap();
        let s = &codebook[i % codebook.len()];
        let noise = NoiseLevels {
            sigma2_n1: f.sigma2_n1,
            sigma2_d: 0.5,
        };
        let rx = transmit(s, &f.model, &codes, &f.alloc, noise, &mut rng).unwrap();
        let problem = f.model.ml_problem(&codes, &rx.r, &codebook).unwrap();
        let (fast, m_fast) = ml_detect(&problem).unwrap();
        let (slow, m_slow) = exhaustive_oracle(&problem).unwrap();
        if fast == slow && (m_fast - m_slow).abs() <= 1e-9 * m_slow.max(1.0) {
            agree += 1;
        }
    }
    agree
}

fn schemes(antennas: usize) -> Vec<StcScheme> {
    match antennas {
        2 => vec![StcScheme::DAlamouti, StcScheme::RAlamouti, StcScheme::Ldc],
        _ => vec![StcScheme::Ldc],
    }
}

/// Compares `transmit` against [`time_domain_receive`] for every system,
/// scheme, `N ≤ 2`, `n_r ≤ 2`, delay profile with `δ_max ≤ 2` and direct-link
/// setting, `reps` random draws each. Returns the case count and the largest
/// deviation.
pub fn equivalence_sweep(reps: usize, seed: u64) -> (usize, f64) {
    use dtacmoro::acmoro::normalize_power;
    use dtacmoro::relaying::{transmit, NoiseLevels};
    let mut rng = RngStream::new(seed, 0);
    let mut cases = 0;
    let mut worst: f64 = 0.0;
    for system in [SystemKind::Mas, SystemKind::Sas] {
        for antennas in 1..=2 {
            for scheme in schemes(antennas) {
                for n_relays in 1..=2 {
                    for delays in delay_profiles(n_relays, 2) {
                        for direct in [false, true] {
                            for _ in 0..reps {
                                let f = Fixture::new(system, scheme, antennas, &delays, direct, &mut rng);
                                let codes = normalize_power(&random_codes(&f.model, &mut rng), f.alloc.p_r).unwrap();
                                let s = rng.complex_normal_vec(f.model.block_length, 1.0);
                                let noise = NoiseLevels {
                                    sigma2_n1: f.sigma2_n1,
                                    sigma2_d: 0.2,
                                };
                                let rx = transmit(&s, &f.model, &codes, &f.alloc, noise, &mut rng).unwrap();
                                let oracle = time_domain_receive(&f, &codes, &s, &rx.relay_noise, &rx.dest_noise);
                                worst = worst.max(max_abs_diff(&rx.r, &oracle));
                                cases += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    (cases, worst)
}
