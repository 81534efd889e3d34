//! Stochastic-gradient adaptation of the relay code matrices, power
//! normalisation and opportunistic relay selection.
//!
//! The objective for one block is `L(Φ) = ‖r − r̂(Φ, ŝ)‖²` with `ŝ` the ML
//! decision. Gradients are Wirtinger derivatives with respect to `Φ*`: a real
//! perturbation `ε` of entry `(a, b)` changes `L` by `2 ε Re(∇_{ab})`, an
//! imaginary one by `2 ε Im(∇_{ab})`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{augment, DelayProfile, LinkSet, SystemKind};
use crate::error::{Error, Result};
use crate::modem::SymbolVector;
use crate::numerics::{frobenius_norm_sq, CMatrix, RngStream, C64, ZERO};
use crate::relaying::{transmit, AdjustableCodes, BlockModel, NoiseLevels, PowerAllocation};
use crate::stcodes::{DispersionSet, RelayCode};

/// What the optimizer observes on each iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Observation {
    /// One training block is received and reused for every iteration.
    Fixed,
    /// A new training block, sent with the current codes, per iteration.
    Fresh,
}

impl FromStr for Observation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fixed" => Ok(Observation::Fixed),
            "fresh" => Ok(Observation::Fresh),
            other => Err(Error::Config(format!("unknown observation mode `{other}`"))),
        }
    }
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Observation::Fixed => "fixed",
            Observation::Fresh => "fresh",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SGConfig {
    pub beta: f64,
    pub iterations: usize,
    /// Re-run ML detection before every step instead of once per observation.
    pub redetect: bool,
    pub observation: Observation,
}

impl Default for SGConfig {
    fn default() -> Self {
        SGConfig {
            beta: 0.01,
            iterations: 50,
            redetect: true,
            observation: Observation::Fixed,
        }
    }
}

impl SGConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("step size {} must be non-negative", self.beta)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionPolicy {
    /// Every relay active, relay power split evenly.
    Equal,
    /// All relay power to the best relay.
    Or,
    /// Best source antenna only.
    Os,
    /// Best source antenna and best relay.
    Fo,
}

impl SelectionPolicy {
    pub fn selects_relay(self) -> bool {
        matches!(self, SelectionPolicy::Or | SelectionPolicy::Fo)
    }

    pub fn selects_source(self) -> bool {
        matches!(self, SelectionPolicy::Os | SelectionPolicy::Fo)
    }
}

impl FromStr for SelectionPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "equal" => Ok(SelectionPolicy::Equal),
            "or" => Ok(SelectionPolicy::Or),
            "os" => Ok(SelectionPolicy::Os),
            "fo" => Ok(SelectionPolicy::Fo),
            other => Err(Error::Config(format!("unknown policy `{other}`"))),
        }
    }
}

impl fmt::Display for SelectionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionPolicy::Equal => "equal",
            SelectionPolicy::Or => "or",
            SelectionPolicy::Os => "os",
            SelectionPolicy::Fo => "fo",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub codes: AdjustableCodes,
    /// `L` before each step.
    pub objective_trace: Vec<f64>,
    /// `Σ Tr(ΦΦ^H)` after each normalisation.
    pub power_trace: Vec<f64>,
}

impl OptimizerState {
    pub fn new(codes: AdjustableCodes) -> Self {
        OptimizerState {
            codes,
            objective_trace: Vec::new(),
            power_trace: Vec::new(),
        }
    }
}

/// Relay-window residual `r − r̂` for decision `s_hat`.
fn window_residual(r: &[C64], model: &BlockModel, codes: &AdjustableCodes, s_hat: &[C64]) -> Result<Vec<C64>> {
    model.check_codes(codes)?;
    if r.len() != model.receive_len() {
        return Err(Error::Shape(format!(
            "receive vector of length {} for a model of length {}",
            r.len(),
            model.receive_len()
        )));
    }
    let s_aug = augment(s_hat);
    let len = model.window_len();
    let mut e = r[..len].to_vec();
    for (p, path) in model.paths.iter().enumerate() {
        if path.gain == 0.0 {
            continue;
        }
        let v = codes.apply(p, &path.channel.signal.matvec(&s_aug)?)?;
        for (acc, x) in e.iter_mut().zip(v) {
            *acc -= x * (path.gain * model.prefactor);
        }
    }
    Ok(e)
}

/// `‖r − r̂‖²`, including the direct-link segment when present.
pub fn lagrangian(r: &[C64], model: &BlockModel, codes: &AdjustableCodes, s_hat: &[C64]) -> Result<f64> {
    let e = window_residual(r, model, codes, s_hat)?;
    let mut total: f64 = e.iter().map(|z| z.norm_sqr()).sum();
    if let Some(d) = &model.direct {
        let rd = d.matvec(&augment(s_hat))?;
        total += r[model.window_len()..]
            .iter()
            .zip(rd)
            .map(|(a, b)| (a - b * model.prefactor).norm_sqr())
            .sum::<f64>();
    }
    Ok(total)
}

fn block_mask(m: &mut CMatrix, blocks: usize, window: usize) {
    for r in 0..blocks * window {
        for c in 0..blocks * window {
            if r / window != c / window {
                m[(r, c)] = ZERO;
            }
        }
    }
}

/// `∂L/∂Φ_p* = −c ρ_p e (H_p ŝ̄)^H`, restricted to the block-diagonal support.
pub fn sg_gradient_mas(r: &[C64], model: &BlockModel, codes: &AdjustableCodes, s_hat: &[C64], p: usize) -> Result<CMatrix> {
    if model.system != SystemKind::Mas {
        return Err(Error::InvalidParameter("model is not a multiple-antenna system".into()));
    }
    let e = window_residual(r, model, codes, s_hat)?;
    let path = model
        .paths
        .get(p)
        .ok_or_else(|| Error::Shape(format!("path {p} out of range")))?;
    let hs = path.channel.signal.matvec(&augment(s_hat))?;
    let k = -model.prefactor * path.gain;
    let len = model.window_len();
    let mut g = CMatrix::from_fn(len, len, |a, b| e[a] * hs[b].conj() * k);
    block_mask(&mut g, model.antennas, model.window);
    Ok(g)
}

/// `∂L/∂φ_p* = −c ρ_p (D_p ŝ̄)^H e`.
pub fn sg_gradient_sas(r: &[C64], model: &BlockModel, codes: &AdjustableCodes, s_hat: &[C64], p: usize) -> Result<C64> {
    if model.system != SystemKind::Sas {
        return Err(Error::InvalidParameter("model is not a single-antenna system".into()));
    }
    let e = window_residual(r, model, codes, s_hat)?;
    let path = model
        .paths
        .get(p)
        .ok_or_else(|| Error::Shape(format!("path {p} out of range")))?;
    let ds = path.channel.signal.matvec(&augment(s_hat))?;
    let inner: C64 = ds.iter().zip(&e).map(|(a, b)| a.conj() * b).sum();
    Ok(inner * (-model.prefactor * path.gain))
}

/// Gradient for every path, in the shape of `codes`.
pub fn sg_gradient(r: &[C64], model: &BlockModel, codes: &AdjustableCodes, s_hat: &[C64]) -> Result<AdjustableCodes> {
    let e = window_residual(r, model, codes, s_hat)?;
    let s_aug = augment(s_hat);
    let len = model.window_len();
    match codes {
        AdjustableCodes::Matrices { blocks, window, .. } => {
            let phi = model
                .paths
                .iter()
                .map(|path| {
                    let hs = path.channel.signal.matvec(&s_aug)?;
                    let k = -model.prefactor * path.gain;
                    let mut g = CMatrix::from_fn(len, len, |a, b| e[a] * hs[b].conj() * k);
                    block_mask(&mut g, *blocks, *window);
                    Ok(g)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(AdjustableCodes::Matrices {
                blocks: *blocks,
                window: *window,
                phi,
            })
        }
        AdjustableCodes::Scalars(_) => {
            let g = model
                .paths
                .iter()
                .map(|path| {
                    let ds = path.channel.signal.matvec(&s_aug)?;
                    let inner: C64 = ds.iter().zip(&e).map(|(a, b)| a.conj() * b).sum();
                    Ok(inner * (-model.prefactor * path.gain))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(AdjustableCodes::Scalars(g))
        }
    }
}

/// `Φ ← Φ − β ∇`.
pub fn sg_step(codes: &AdjustableCodes, gradient: &AdjustableCodes, beta: f64) -> Result<AdjustableCodes> {
    match (codes, gradient) {
        (AdjustableCodes::Matrices { blocks, window, phi }, AdjustableCodes::Matrices { phi: grad, .. }) if phi.len() == grad.len() => {
            let phi = phi
                .iter()
                .zip(grad)
                .map(|(m, g)| {
                    let mut out = m.clone();
                    out.axpy(C64::new(-beta, 0.0), g)?;
                    Ok(out)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(AdjustableCodes::Matrices {
                blocks: *blocks,
                window: *window,
                phi,
            })
        }
        (AdjustableCodes::Scalars(v), AdjustableCodes::Scalars(g)) if v.len() == g.len() => Ok(AdjustableCodes::Scalars(
            v.iter().zip(g).map(|(a, b)| a - b * beta).collect(),
        )),
        _ => Err(Error::Shape("gradient does not match the code set".into())),
    }
}

pub fn sg_step_mas(state: &OptimizerState, gradient: &AdjustableCodes, beta: f64) -> Result<OptimizerState> {
    if !matches!(state.codes, AdjustableCodes::Matrices { .. }) {
        return Err(Error::InvalidParameter("code set is not matrix-valued".into()));
    }
    Ok(OptimizerState {
        codes: sg_step(&state.codes, gradient, beta)?,
        ..state.clone()
    })
}

pub fn sg_step_sas(state: &OptimizerState, gradient: &AdjustableCodes, beta: f64) -> Result<OptimizerState> {
    if !matches!(state.codes, AdjustableCodes::Scalars(_)) {
        return Err(Error::InvalidParameter("code set is not scalar-valued".into()));
    }
    Ok(OptimizerState {
        codes: sg_step(&state.codes, gradient, beta)?,
        ..state.clone()
    })
}

/// Scales every code by one common factor so that `Σ Tr(ΦΦ^H) = P_R`.
pub fn normalize_power(codes: &AdjustableCodes, p_r: f64) -> Result<AdjustableCodes> {
    if !(p_r > 0.0) {
        return Err(Error::InvalidParameter(format!("power budget {p_r} must be positive")));
    }
    let mut out = codes.clone();
    normalize_in_place(&mut out, p_r)?;
    Ok(out)
}

/// Returns the factor applied and the resulting power.
fn normalize_in_place(codes: &mut AdjustableCodes, p_r: f64) -> Result<(f64, f64)> {
    let power = codes.power();
    if !(power > 0.0) || !power.is_finite() {
        return Err(Error::Degenerate);
    }
    let mut factor = (p_r / power).sqrt();
    codes.scale(factor);
    let mut after = codes.power();
    // one correction pass absorbs the rounding of the first scaling
    if (after - p_r).abs() > 1e-14 * p_r {
        let fix = (p_r / after).sqrt();
        codes.scale(fix);
        factor *= fix;
        after = codes.power();
    }
    Ok((factor, after))
}

/// Uniform draw on `{Σ Tr(ΦΦ^H) = P_R}` over the support of `model`'s codes.
pub fn random_codes(model: &BlockModel, p_r: f64, rng: &mut RngStream) -> Result<AdjustableCodes> {
    let codes = AdjustableCodes::gaussian(model.system, model.paths.len(), model.antennas, model.window, rng);
    normalize_power(&codes, p_r)
}

/// Per-relay end-to-end SNR expressions used for selection.
pub fn relay_scores(model: &BlockModel, links: &LinkSet, codes: &AdjustableCodes, noise: NoiseLevels, p1: f64) -> Result<Vec<f64>> {
    model.check_codes(codes)?;
    let n = model.antennas as f64;
    let t = model.block_length as f64;
    let len = model.window_len();
    let mut scores = vec![0.0; model.n_relays];
    for (p, path) in model.paths.iter().enumerate() {
        let phi = codes.matrix(p, len);
        let rho2 = path.gain * path.gain;
        let num = p1 * t * rho2 * frobenius_norm_sq(&phi.matmul(&path.channel.signal)?);
        let den = n * rho2 * frobenius_norm_sq(&phi.matmul(&path.channel.noise)?) * noise.sigma2_n1 + noise.sigma2_d;
        scores[path.relay] += num / den.max(f64::MIN_POSITIVE);
    }
    if model.system == SystemKind::Mas {
        for (k, s) in scores.iter_mut().enumerate() {
            let first_hop = p1 * frobenius_norm_sq(links.source_relay(k)) / (n * noise.sigma2_n1.max(f64::MIN_POSITIVE));
            *s *= first_hop;
        }
    }
    Ok(scores)
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn select_relay_mas(model: &BlockModel, links: &LinkSet, codes: &AdjustableCodes, noise: NoiseLevels, p1: f64) -> Result<usize> {
    if model.system != SystemKind::Mas {
        return Err(Error::InvalidParameter("model is not a multiple-antenna system".into()));
    }
    Ok(argmax(&relay_scores(model, links, codes, noise, p1)?))
}

pub fn select_relay_sas(model: &BlockModel, links: &LinkSet, codes: &AdjustableCodes, noise: NoiseLevels, p1: f64) -> Result<usize> {
    if model.system != SystemKind::Sas {
        return Err(Error::InvalidParameter("model is not a single-antenna system".into()));
    }
    Ok(argmax(&relay_scores(model, links, codes, noise, p1)?))
}

/// Source antenna with the largest first-hop energy summed over relays.
pub fn select_source_antenna(links: &LinkSet) -> usize {
    let energies: Vec<f64> = (0..links.antennas())
        .map(|a| {
            (0..links.n_relays())
                .map(|k| links.source_relay(k).row(a).iter().map(|z| z.norm_sqr()).sum::<f64>())
                .sum()
        })
        .collect();
    argmax(&energies)
}

/// Silences every path not belonging to relay `k`; the selected relay's
/// codes then carry the whole budget `p_r`.
pub fn restrict_to_relay(model: &BlockModel, codes: &AdjustableCodes, k: usize, p_r: f64) -> Result<AdjustableCodes> {
    let mut out = codes.clone();
    for (p, path) in model.paths.iter().enumerate() {
        if path.relay != k {
            out.silence(p);
        }
    }
    normalize_power(&out, p_r)
}

/// Per-block inputs of the optimizer.
#[derive(Clone, Debug)]
pub struct BlockInputs<'a> {
    pub links: &'a LinkSet,
    pub source_code: &'a DispersionSet,
    pub relay_code: &'a RelayCode,
    pub profile: &'a DelayProfile,
    pub codebook: &'a [SymbolVector],
    pub noise: NoiseLevels,
    pub p1: f64,
    pub p2: f64,
    pub p_r: f64,
}

/// Result of one block: the model and codes to transmit with.
#[derive(Clone, Debug)]
pub struct BlockOutcome {
    pub links: LinkSet,
    pub model: BlockModel,
    pub alloc: PowerAllocation,
    pub state: OptimizerState,
    pub relay: Option<usize>,
    pub source_antenna: Option<usize>,
}

/// Per-block cache of `c ρ_p H_p` and of its image `c ρ_p H_p s̄` for every
/// codeword, so that the SG loop only touches the code matrices.
struct Trainer<'m> {
    model: &'m BlockModel,
    basis: Vec<CMatrix>,
    symbols: Vec<Vec<C64>>,
    images: Vec<Vec<Vec<C64>>>,
    /// Per codeword and receive block `b`: `Σ_p Σ_{i∈b} conj(img_p[i]) basis_p[i,·]`,
    /// the change of the effective map per unit residual in block `b`.
    gram: Vec<Vec<Vec<C64>>>,
    direct: Vec<Vec<C64>>,
}

impl<'m> Trainer<'m> {
    fn new(model: &'m BlockModel, codebook: &[SymbolVector]) -> Result<Self> {
        let basis: Vec<CMatrix> = model
            .paths
            .iter()
            .map(|path| path.channel.signal.scale_real(model.prefactor * path.gain))
            .collect();
        let symbols: Vec<Vec<C64>> = codebook.iter().map(|s| augment(s)).collect();
        let mut images = Vec::with_capacity(codebook.len());
        let mut direct = Vec::with_capacity(codebook.len());
        for s_aug in &symbols {
            images.push(basis.iter().map(|h| h.matvec(s_aug)).collect::<Result<Vec<_>>>()?);
            direct.push(match &model.direct {
                Some(d) => d.matvec(s_aug)?.into_iter().map(|z| z * model.prefactor).collect(),
                None => Vec::new(),
            });
        }
        let width = basis.first().map_or(0, CMatrix::cols);
        let gram = images
            .iter()
            .map(|per_path| {
                (0..model.antennas)
                    .map(|b| {
                        let mut g = vec![ZERO; width];
                        for (img, h) in per_path.iter().zip(&basis) {
                            for i in b * model.window..(b + 1) * model.window {
                                let z = img[i].conj();
                                for (acc, &y) in g.iter_mut().zip(h.row(i)) {
                                    *acc += z * y;
                                }
                            }
                        }
                        g
                    })
                    .collect()
            })
            .collect();
        Ok(Trainer {
            model,
            basis,
            symbols,
            images,
            gram,
            direct,
        })
    }

    /// `Σ_p Φ_p c ρ_p H_p`: the relay-window map of the augmented symbols.
    /// Scalar codes reconstruct straight from the images and have no map.
    fn effective(&self, codes: &AdjustableCodes) -> Option<CMatrix> {
        if let AdjustableCodes::Scalars(_) = codes {
            return None;
        }
        let len = self.model.window_len();
        let width = self.basis.first().map_or(0, CMatrix::cols);
        let mut out = CMatrix::zeros(len, width);
        let acc = out.as_mut_slice();
        for (p, h) in self.basis.iter().enumerate() {
            if self.model.paths[p].gain == 0.0 {
                continue;
            }
            let h = h.as_slice();
            match codes {
                AdjustableCodes::Matrices { blocks, window, phi } => {
                    for b in 0..*blocks {
                        let lo = b * window;
                        for a in lo..lo + window {
                            let dst = &mut acc[a * width..(a + 1) * width];
                            for (i, &x) in phi[p].row(a)[lo..lo + window].iter().enumerate() {
                                let src = &h[(lo + i) * width..(lo + i + 1) * width];
                                for (d, &y) in dst.iter_mut().zip(src) {
                                    *d += x * y;
                                }
                            }
                        }
                    }
                }
                AdjustableCodes::Scalars(_) => unreachable!("scalar codes have no map"),
            }
        }
        Some(out)
    }

    /// Relay-window reconstruction of codeword `idx` under `codes`, whose
    /// map is `m`.
    fn reconstruct(&self, codes: &AdjustableCodes, m: Option<&CMatrix>, idx: usize, out: &mut [C64]) {
        match codes {
            AdjustableCodes::Matrices { .. } => {
                let m = m.expect("matrix codes carry a map");
                let s = &self.symbols[idx];
                for (o, row) in out.iter_mut().zip(m.as_slice().chunks_exact(s.len())) {
                    *o = row.iter().zip(s).map(|(a, b)| a * b).sum();
                }
            }
            AdjustableCodes::Scalars(v) => {
                out.fill(ZERO);
                for (img, &phi) in self.images[idx].iter().zip(v) {
                    for (o, z) in out.iter_mut().zip(img) {
                        *o += z * phi;
                    }
                }
            }
        }
    }

    fn metric(&self, codes: &AdjustableCodes, m: Option<&CMatrix>, r: &[C64], idx: usize, buf: &mut [C64]) -> f64 {
        self.reconstruct(codes, m, idx, buf);
        let len = buf.len();
        let window: f64 = r[..len].iter().zip(buf.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
        let direct: f64 = r[len..].iter().zip(&self.direct[idx]).map(|(a, b)| (a - b).norm_sqr()).sum();
        window + direct
    }

    /// ML decision; ties go to the lowest index.
    fn detect(&self, codes: &AdjustableCodes, m: Option<&CMatrix>, r: &[C64], buf: &mut [C64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for idx in 0..self.images.len() {
            let metric = self.metric(codes, m, r, idx, buf);
            if metric < best.1 {
                best = (idx, metric);
            }
        }
        best
    }

    /// `Φ ← Φ − β ∇L` for decision `idx`, keeping `m` equal to the map of
    /// the updated codes.
    fn step(&self, codes: &mut AdjustableCodes, m: &mut Option<CMatrix>, r: &[C64], idx: usize, beta: f64, buf: &mut [C64]) {
        self.reconstruct(codes, m.as_ref(), idx, buf);
        for (b, a) in buf.iter_mut().zip(r) {
            *b = (a - *b) * beta;
        }
        let e = &*buf;
        match codes {
            AdjustableCodes::Matrices { blocks, window, phi } => {
                for (p, img) in self.images[idx].iter().enumerate() {
                    let data = phi[p].as_mut_slice();
                    let stride = *blocks * *window;
                    for b in 0..*blocks {
                        let lo = b * *window;
                        for a in lo..lo + *window {
                            let row = &mut data[a * stride + lo..a * stride + lo + *window];
                            for (x, y) in row.iter_mut().zip(&img[lo..lo + *window]) {
                                *x += e[a] * y.conj();
                            }
                        }
                    }
                }
                let m = m.as_mut().expect("matrix codes carry a map");
                let width = m.cols();
                let acc = m.as_mut_slice();
                for (a, &ea) in e.iter().enumerate() {
                    let g = &self.gram[idx][a / *window];
                    for (d, &y) in acc[a * width..(a + 1) * width].iter_mut().zip(g) {
                        *d += ea * y;
                    }
                }
            }
            AdjustableCodes::Scalars(v) => {
                for (p, img) in self.images[idx].iter().enumerate() {
                    v[p] += img.iter().zip(e).map(|(x, y)| x.conj() * y).sum::<C64>();
                }
            }
        }
    }
}

/// SG adaptation on `sg.iterations` steps from `state`.
///
/// With [`Observation::Fresh`] every iteration sends a random training
/// codeword through the current codes; with [`Observation::Fixed`] the first
/// received block is reused. `objective_trace` gets `L` before each step.
pub fn adapt(
    state: &mut OptimizerState,
    model: &BlockModel,
    alloc: &PowerAllocation,
    inputs: &BlockInputs<'_>,
    sg: &SGConfig,
    rng: &mut RngStream,
) -> Result<()> {
    sg.validate()?;
    model.check_codes(&state.codes)?;
    let trainer = Trainer::new(model, inputs.codebook)?;
    let mut buf = vec![ZERO; model.window_len()];
    let mut held: Option<(Vec<C64>, usize)> = None;
    let mut m = trainer.effective(&state.codes);
    for _ in 0..sg.iterations {
        let (r, idx, metric) = match (sg.observation, held.take()) {
            (Observation::Fixed, Some((r, idx))) => {
                let (idx, metric) = if sg.redetect {
                    trainer.detect(&state.codes, m.as_ref(), &r, &mut buf)
                } else {
                    (idx, trainer.metric(&state.codes, m.as_ref(), &r, idx, &mut buf))
                };
                (r, idx, metric)
            }
            _ => {
                let s = &inputs.codebook[rng.random_range(0..inputs.codebook.len())];
                let r = transmit(s, model, &state.codes, alloc, inputs.noise, rng)?.r;
                let (idx, metric) = trainer.detect(&state.codes, m.as_ref(), &r, &mut buf);
                (r, idx, metric)
            }
        };
        state.objective_trace.push(metric);
        trainer.step(&mut state.codes, &mut m, &r, idx, sg.beta, &mut buf);
        let (factor, power) = normalize_in_place(&mut state.codes, alloc.p_r)?;
        if let Some(m) = &mut m {
            for z in m.as_mut_slice() {
                *z *= factor;
            }
        }
        state.power_trace.push(power);
        if sg.observation == Observation::Fixed {
            held = Some((r, idx));
        }
    }
    Ok(())
}

/// One block: source selection, code initialisation, SG adaptation (when
/// `optimize`), then relay selection with all relay power to the winner.
pub fn run_block_optimization(
    inputs: &BlockInputs<'_>,
    sg: &SGConfig,
    policy: SelectionPolicy,
    optimize: bool,
    rng: &mut RngStream,
) -> Result<BlockOutcome> {
    if inputs.codebook.is_empty() {
        return Err(Error::InvalidParameter("empty codebook".into()));
    }
    let (links, source_antenna) = if policy.selects_source() {
        let a = select_source_antenna(inputs.links);
        (inputs.links.with_source_antenna(a)?, Some(a))
    } else {
        (inputs.links.clone(), None)
    };
    let n_relays = links.n_relays();
    let ant = links.relay_antennas();
    let alloc = PowerAllocation::equal(inputs.p1, inputs.p2, inputs.p_r, &vec![true; n_relays], ant)?;
    let model = BlockModel::build(
        &links,
        inputs.source_code,
        inputs.relay_code,
        inputs.profile,
        &alloc,
        inputs.noise.sigma2_n1,
    )?;
    let mut state = OptimizerState::new(random_codes(&model, inputs.p_r, rng)?);
    if optimize {
        adapt(&mut state, &model, &alloc, inputs, sg, rng)?;
    }
    if !policy.selects_relay() {
        return Ok(BlockOutcome {
            links,
            model,
            alloc,
            state,
            relay: None,
            source_antenna,
        });
    }
    let k = argmax(&relay_scores(&model, &links, &state.codes, inputs.noise, inputs.p1)?);
    let alloc = PowerAllocation::single(inputs.p1, inputs.p2, inputs.p_r, n_relays, k, ant)?;
    let model = BlockModel::build(
        &links,
        inputs.source_code,
        inputs.relay_code,
        inputs.profile,
        &alloc,
        inputs.noise.sigma2_n1,
    )?;
    state.codes = restrict_to_relay(&model, &state.codes, k, inputs.p_r)?;
    Ok(BlockOutcome {
        links,
        model,
        alloc,
        state,
        relay: Some(k),
        source_antenna,
    })
}
