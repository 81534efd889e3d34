//! Amplify-and-forward relaying with adjustable code matrices.
//!
//! The destination window is
//!
//! ```text
//! r = √(P₁T/N) Σ_p ρ_p Φ_p H_p s̄  +  Σ_p ρ_p Φ_p G_p n̄_{relay(p)}  +  n_d
//! ```
//!
//! over the relay paths `p`, where `s̄ = [s; conj(s)]`. For a multiple-antenna
//! system a path is one relay antenna and `Φ_p` is block diagonal with one
//! `W×W` block per destination antenna; for a single-antenna system a path is
//! one (relay, destination antenna) pair and `Φ_p = φ_p I`.

use rayon::prelude::*;

use crate::channel::{
    augment, build_direct_map, build_equivalent_mas, build_equivalent_sas, relay_noise_len, DelayProfile, EquivalentChannel,
    LinkSet, SystemKind,
};
use crate::detection::{MLProblem, ModelTerm};
use crate::error::{Error, Result};
use crate::modem::SymbolVector;
use crate::numerics::{CMatrix, RngStream, C64, ZERO};
use crate::stcodes::{DispersionSet, RelayCode};

/// AF scaling `ρ = √(P_{k,j} / (σ²_F P₁ + σ²_{n1}))`.
pub fn amplification_gain(p_kj: f64, sigma2_f: f64, p1: f64, sigma2_n1: f64) -> Result<f64> {
    if !(p_kj > 0.0) || !(sigma2_f > 0.0) || !(p1 > 0.0) || sigma2_n1 < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "amplification gain needs positive powers (P={p_kj}, σ²_F={sigma2_f}, P1={p1}, σ²_n1={sigma2_n1})"
        )));
    }
    let denom = sigma2_f * p1 + sigma2_n1;
    if !denom.is_finite() {
        return Ok(0.0);
    }
    Ok((p_kj / denom).sqrt())
}

/// Noise variances of the two hops.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseLevels {
    pub sigma2_n1: f64,
    pub sigma2_d: f64,
}

impl NoiseLevels {
    pub fn noiseless() -> Self {
        NoiseLevels {
            sigma2_n1: 0.0,
            sigma2_d: 0.0,
        }
    }
}

/// Source power `P₁`, total relay power `P₂` and the code-matrix budget `P_R`.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerAllocation {
    pub p1: f64,
    pub p2: f64,
    pub p_r: f64,
    /// `P_{k,j}` per relay, per relay antenna; zero for silent relays.
    pub per_antenna: Vec<Vec<f64>>,
}

impl PowerAllocation {
    /// `P₂` split evenly over the antennas of the active relays.
    pub fn equal(p1: f64, p2: f64, p_r: f64, active: &[bool], relay_antennas: usize) -> Result<Self> {
        if !(p1 > 0.0 && p2 > 0.0 && p_r > 0.0) {
            return Err(Error::InvalidParameter("powers must be positive".into()));
        }
        let n_active = active.iter().filter(|&&a| a).count();
        if n_active == 0 {
            return Err(Error::InvalidParameter("no active relay".into()));
        }
        let share = p2 / (n_active * relay_antennas) as f64;
        Ok(PowerAllocation {
            p1,
            p2,
            p_r,
            per_antenna: active
                .iter()
                .map(|&a| vec![if a { share } else { 0.0 }; relay_antennas])
                .collect(),
        })
    }

    /// Everything to relay `k`.
    pub fn single(p1: f64, p2: f64, p_r: f64, n_relays: usize, k: usize, relay_antennas: usize) -> Result<Self> {
        let mut active = vec![false; n_relays];
        *active
            .get_mut(k)
            .ok_or_else(|| Error::InvalidParameter(format!("relay {k} out of range")))? = true;
        Self::equal(p1, p2, p_r, &active, relay_antennas)
    }

    pub fn total_relay_power(&self) -> f64 {
        self.per_antenna.iter().flatten().sum()
    }

    pub fn is_active(&self, k: usize) -> bool {
        self.per_antenna[k].iter().any(|&p| p > 0.0)
    }
}

/// Adjustable code matrices `Φ_p`, one per relay path.
#[derive(Clone, Debug, PartialEq)]
pub enum AdjustableCodes {
    /// Block-diagonal `(B·W)×(B·W)` matrices with `B` blocks of size `W`.
    Matrices { blocks: usize, window: usize, phi: Vec<CMatrix> },
    /// One complex scalar per path.
    Scalars(Vec<C64>),
}

impl AdjustableCodes {
    pub fn identity(system: SystemKind, n_paths: usize, blocks: usize, window: usize) -> Self {
        match system {
            SystemKind::Mas => AdjustableCodes::Matrices {
                blocks,
                window,
                phi: vec![CMatrix::identity(blocks * window); n_paths],
            },
            SystemKind::Sas => AdjustableCodes::Scalars(vec![C64::new(1.0, 0.0); n_paths]),
        }
    }

    /// i.i.d. Gaussian entries on the support; callers normalise afterwards,
    /// which yields a uniform draw on the constraint sphere.
    pub fn gaussian(system: SystemKind, n_paths: usize, blocks: usize, window: usize, rng: &mut RngStream) -> Self {
        match system {
            SystemKind::Mas => {
                let phi = (0..n_paths)
                    .map(|_| {
                        let mut m = CMatrix::zeros(blocks * window, blocks * window);
                        for b in 0..blocks {
                            for r in 0..window {
                                for c in 0..window {
                                    m[(b * window + r, b * window + c)] = rng.complex_normal(1.0);
                                }
                            }
                        }
                        m
                    })
                    .collect();
                AdjustableCodes::Matrices { blocks, window, phi }
            }
            SystemKind::Sas => AdjustableCodes::Scalars(rng.complex_normal_vec(n_paths, 1.0)),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            AdjustableCodes::Matrices { phi, .. } => phi.len(),
            AdjustableCodes::Scalars(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `Tr(Φ_p Φ_p^H)` (or `|φ_p|²`).
    pub fn path_power(&self, p: usize) -> f64 {
        match self {
            AdjustableCodes::Matrices { phi, .. } => crate::numerics::frobenius_norm_sq(&phi[p]),
            AdjustableCodes::Scalars(v) => v[p].norm_sqr(),
        }
    }

    /// `Σ_p Tr(Φ_p Φ_p^H)`.
    pub fn power(&self) -> f64 {
        (0..self.len()).map(|p| self.path_power(p)).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        match self {
            AdjustableCodes::Matrices { phi, .. } => {
                for m in phi.iter_mut() {
                    m.as_mut_slice().iter_mut().for_each(|z| *z *= factor);
                }
            }
            AdjustableCodes::Scalars(v) => v.iter_mut().for_each(|z| *z *= factor),
        }
    }

    /// Sets path `p` to zero.
    pub fn silence(&mut self, p: usize) {
        match self {
            AdjustableCodes::Matrices { phi, .. } => {
                let (r, c) = phi[p].shape();
                phi[p] = CMatrix::zeros(r, c);
            }
            AdjustableCodes::Scalars(v) => v[p] = ZERO,
        }
    }

    /// `Φ_p` as a dense matrix of side `len`.
    pub fn matrix(&self, p: usize, len: usize) -> CMatrix {
        match self {
            AdjustableCodes::Matrices { phi, .. } => phi[p].clone(),
            AdjustableCodes::Scalars(v) => CMatrix::identity(len).scale(v[p]),
        }
    }

    pub fn apply(&self, p: usize, v: &[C64]) -> Result<Vec<C64>> {
        match self {
            AdjustableCodes::Matrices { phi, .. } => phi[p].matvec(v),
            AdjustableCodes::Scalars(s) => Ok(v.iter().map(|z| z * s[p]).collect()),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            AdjustableCodes::Matrices { phi, .. } => phi.iter().all(CMatrix::is_finite),
            AdjustableCodes::Scalars(v) => v.iter().all(|z| z.re.is_finite() && z.im.is_finite()),
        }
    }
}

/// One relay path of the block model.
#[derive(Clone, Debug)]
pub struct RelayPath {
    pub relay: usize,
    /// Relay antenna (multiple-antenna) or destination antenna (single-antenna).
    pub index: usize,
    /// AF gain `ρ`; zero for silent relays.
    pub gain: f64,
    pub channel: EquivalentChannel,
}

/// Everything the destination knows about one fading block.
#[derive(Clone, Debug)]
pub struct BlockModel {
    pub system: SystemKind,
    pub n_relays: usize,
    pub antennas: usize,
    pub block_length: usize,
    pub window: usize,
    /// `√(P₁T/N)`.
    pub prefactor: f64,
    pub paths: Vec<RelayPath>,
    /// Complex relay-noise samples per relay (before augmentation).
    pub relay_noise_len: usize,
    /// `(N·T)×2T` source→destination map, appended after the relay window.
    pub direct: Option<CMatrix>,
}

impl BlockModel {
    pub fn build(
        links: &LinkSet,
        source_code: &DispersionSet,
        relay_code: &RelayCode,
        profile: &DelayProfile,
        alloc: &PowerAllocation,
        sigma2_n1: f64,
    ) -> Result<Self> {
        let system = links.system();
        let n = links.antennas();
        let t = source_code.block_length();
        if alloc.per_antenna.len() != links.n_relays() {
            return Err(Error::Shape("power allocation does not cover every relay".into()));
        }
        let mut paths = Vec::with_capacity(links.n_relays() * n);
        for k in 0..links.n_relays() {
            for j in 0..n {
                let (channel, p_kj) = match system {
                    SystemKind::Mas => (
                        build_equivalent_mas(links, source_code, relay_code, profile, k, j)?,
                        alloc.per_antenna[k][j],
                    ),
                    SystemKind::Sas => (
                        build_equivalent_sas(links, source_code, relay_code, profile, k, j)?,
                        alloc.per_antenna[k][0],
                    ),
                };
                let gain = if p_kj > 0.0 {
                    amplification_gain(p_kj, links.sigma2_f(), alloc.p1, sigma2_n1)?
                } else {
                    0.0
                };
                paths.push(RelayPath {
                    relay: k,
                    index: j,
                    gain,
                    channel,
                });
            }
        }
        let window = paths[0].channel.window;
        Ok(BlockModel {
            system,
            n_relays: links.n_relays(),
            antennas: n,
            block_length: t,
            window,
            prefactor: (alloc.p1 * t as f64 / n as f64).sqrt(),
            paths,
            relay_noise_len: relay_noise_len(system, t, n),
            direct: build_direct_map(links, source_code)?,
        })
    }

    /// Length of the relay window part of the receive vector.
    pub fn window_len(&self) -> usize {
        self.window * self.antennas
    }

    pub fn receive_len(&self) -> usize {
        self.window_len() + self.direct.as_ref().map_or(0, CMatrix::rows)
    }

    /// Fresh code matrices matching this model's shape.
    pub fn identity_codes(&self) -> AdjustableCodes {
        AdjustableCodes::identity(self.system, self.paths.len(), self.antennas, self.window)
    }

    pub fn check_codes(&self, codes: &AdjustableCodes) -> Result<()> {
        if codes.len() != self.paths.len() {
            return Err(Error::Shape(format!(
                "{} code matrices for {} paths",
                codes.len(),
                self.paths.len()
            )));
        }
        match (self.system, codes) {
            (SystemKind::Mas, AdjustableCodes::Matrices { phi, .. }) => {
                if phi.iter().any(|m| m.shape() != (self.window_len(), self.window_len())) {
                    return Err(Error::Shape("code matrix does not match the receive window".into()));
                }
                Ok(())
            }
            (SystemKind::Sas, AdjustableCodes::Scalars(_)) => Ok(()),
            _ => Err(Error::Shape("code representation does not match the system".into())),
        }
    }

    /// The detection problem for receive vector `r` under `codes`.
    pub fn ml_problem<'a>(&self, codes: &AdjustableCodes, r: &[C64], codebook: &'a [SymbolVector]) -> Result<MLProblem<'a>> {
        self.check_codes(codes)?;
        let len = self.window_len();
        let terms = self
            .paths
            .iter()
            .enumerate()
            .filter(|(_, path)| path.gain > 0.0)
            .map(|(p, path)| ModelTerm {
                gain: path.gain,
                phi: codes.matrix(p, len),
                channel: path.channel.signal.clone(),
            })
            .collect();
        MLProblem::new(r.to_vec(), terms, self.prefactor, self.direct.clone(), codebook)
    }
}

/// One block's receive vector plus the noise that produced it.
#[derive(Clone, Debug)]
pub struct ReceiveVector {
    /// Relay window followed by the direct-link samples, if any.
    pub r: Vec<C64>,
    /// Relay noise per relay, before augmentation.
    pub relay_noise: Vec<Vec<C64>>,
    pub dest_noise: Vec<C64>,
}

fn check_budget(codes: &AdjustableCodes, p_r: f64) -> Result<()> {
    let power = codes.power();
    if power > p_r * (1.0 + 1e-9) + 1e-12 {
        return Err(Error::PowerConstraint { power, budget: p_r });
    }
    Ok(())
}

/// Draws a receive vector for symbol vector `s` through `model`.
pub fn transmit(
    s: &[C64],
    model: &BlockModel,
    codes: &AdjustableCodes,
    alloc: &PowerAllocation,
    noise: NoiseLevels,
    rng: &mut RngStream,
) -> Result<ReceiveVector> {
    model.check_codes(codes)?;
    check_budget(codes, alloc.p_r)?;
    if s.len() != model.block_length {
        return Err(Error::Shape(format!(
            "symbol vector of length {} for block length {}",
            s.len(),
            model.block_length
        )));
    }
    let s_aug = augment(s);
    let relay_noise: Vec<Vec<C64>> = (0..model.n_relays)
        .map(|_| {
            if noise.sigma2_n1 > 0.0 {
                rng.complex_normal_vec(model.relay_noise_len, noise.sigma2_n1)
            } else {
                vec![ZERO; model.relay_noise_len]
            }
        })
        .collect();
    let aug_noise: Vec<Vec<C64>> = relay_noise.iter().map(|n| augment(n)).collect();
    let len = model.window_len();
    let mut r = vec![ZERO; model.receive_len()];
    for (p, path) in model.paths.iter().enumerate() {
        if path.gain == 0.0 {
            continue;
        }
        let sig = path.channel.signal.matvec(&s_aug)?;
        let fwd = path.channel.noise.matvec(&aug_noise[path.relay])?;
        let pre: Vec<C64> = sig
            .iter()
            .zip(&fwd)
            .map(|(a, b)| a * model.prefactor + b)
            .collect();
        let out = codes.apply(p, &pre)?;
        for (acc, v) in r[..len].iter_mut().zip(out) {
            *acc += v * path.gain;
        }
    }
    if let Some(d) = &model.direct {
        for (acc, v) in r[len..].iter_mut().zip(d.matvec(&s_aug)?) {
            *acc += v * model.prefactor;
        }
    }
    let dest_noise = if noise.sigma2_d > 0.0 {
        rng.complex_normal_vec(r.len(), noise.sigma2_d)
    } else {
        vec![ZERO; r.len()]
    };
    for (acc, n) in r.iter_mut().zip(&dest_noise) {
        *acc += n;
    }
    Ok(ReceiveVector {
        r,
        relay_noise,
        dest_noise,
    })
}

pub fn transmit_mas(
    s: &[C64],
    model: &BlockModel,
    codes: &AdjustableCodes,
    alloc: &PowerAllocation,
    noise: NoiseLevels,
    rng: &mut RngStream,
) -> Result<ReceiveVector> {
    if model.system != SystemKind::Mas {
        return Err(Error::InvalidParameter("model is not a multiple-antenna system".into()));
    }
    transmit(s, model, codes, alloc, noise, rng)
}

pub fn transmit_sas(
    s: &[C64],
    model: &BlockModel,
    codes: &AdjustableCodes,
    alloc: &PowerAllocation,
    noise: NoiseLevels,
    rng: &mut RngStream,
) -> Result<ReceiveVector> {
    if model.system != SystemKind::Sas {
        return Err(Error::InvalidParameter("model is not a single-antenna system".into()));
    }
    transmit(s, model, codes, alloc, noise, rng)
}

/// Noiseless relay-window contribution of every path, in parallel; used by
/// callers that need the per-path split (selection diagnostics, tests).
pub fn path_contributions(model: &BlockModel, codes: &AdjustableCodes, s: &[C64]) -> Result<Vec<Vec<C64>>> {
    let s_aug = augment(s);
    model
        .paths
        .par_iter()
        .enumerate()
        .map(|(p, path)| {
            let v = path.channel.signal.matvec(&s_aug)?;
            let out = codes.apply(p, &v)?;
            Ok(out.into_iter().map(|z| z * (path.gain * model.prefactor)).collect())
        })
        .collect()
}
