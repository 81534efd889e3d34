//! Block fading, delays, and the delay-embedded equivalent channels.
//!
//! The destination observes a window of `T + δ_max` symbol periods on each of
//! its `N` antennas; the receive vector stacks those windows antenna by
//! antenna. A relay whose signal arrives `δ_k` periods after the earliest one
//! occupies slots `δ_k .. δ_k + T` of every antenna window.
//!
//! Equivalent channels map the augmented symbol vector `[s; conj(s)]` (and
//! the augmented relay noise) into that window. They carry neither the source
//! prefactor `√(P₁T/N)` nor the relay gain `ρ`; [`crate::relaying`] applies
//! both.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{complex_gaussian, CMatrix, RngStream, C64, ONE};
use crate::stcodes::{augment_conjugate, DispersionSet, RelayCode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    /// Relays with `N` antennas each.
    Mas,
    /// Single-antenna relays.
    Sas,
}

impl FromStr for SystemKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mas" => Ok(SystemKind::Mas),
            "sas" => Ok(SystemKind::Sas),
            other => Err(Error::Config(format!("unknown system `{other}`"))),
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SystemKind::Mas => "mas",
            SystemKind::Sas => "sas",
        })
    }
}

/// Relative arrival delays in whole symbol periods; the earliest relay is 0.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayProfile {
    delays: Vec<usize>,
}

impl DelayProfile {
    pub fn new(delays: Vec<usize>) -> Result<Self> {
        match delays.iter().min() {
            None => Err(Error::InvalidParameter("empty delay profile".into())),
            Some(&m) if m != 0 => Err(Error::InvalidParameter(format!(
                "delays are relative to the earliest relay; smallest is {m}, expected 0"
            ))),
            _ => Ok(DelayProfile { delays }),
        }
    }

    pub fn zero(n_relays: usize) -> Self {
        DelayProfile {
            delays: vec![0; n_relays.max(1)],
        }
    }

    pub fn delays(&self) -> &[usize] {
        &self.delays
    }

    pub fn delay(&self, k: usize) -> usize {
        self.delays[k]
    }

    pub fn delta_max(&self) -> usize {
        *self.delays.iter().max().expect("non-empty")
    }

    pub fn n_relays(&self) -> usize {
        self.delays.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub system: SystemKind,
    pub n_relays: usize,
    pub antennas: usize,
    /// Source→relay channel variance σ²_F.
    pub sigma2_f: f64,
    /// Relay→destination channel variance.
    pub sigma2_g: f64,
    pub direct_link: bool,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            system: SystemKind::Mas,
            n_relays: 2,
            antennas: 2,
            sigma2_f: 1.0,
            sigma2_g: 1.0,
            direct_link: false,
        }
    }
}

/// One quasi-static realisation of every link.
#[derive(Clone, Debug)]
pub struct LinkSet {
    system: SystemKind,
    antennas: usize,
    sigma2_f: f64,
    /// Per relay: `N×B` (source antenna × relay antenna).
    source_relay: Vec<CMatrix>,
    /// Per relay: `B×N` (relay antenna × destination antenna).
    relay_dest: Vec<CMatrix>,
    /// `N×N` source antenna × destination antenna.
    direct: Option<CMatrix>,
}

impl LinkSet {
    pub fn new(
        system: SystemKind,
        sigma2_f: f64,
        source_relay: Vec<CMatrix>,
        relay_dest: Vec<CMatrix>,
        direct: Option<CMatrix>,
    ) -> Result<Self> {
        let antennas = source_relay
            .first()
            .map(|f| f.rows())
            .ok_or_else(|| Error::InvalidParameter("no relays".into()))?;
        let relay_ant = match system {
            SystemKind::Mas => antennas,
            SystemKind::Sas => 1,
        };
        if source_relay.len() != relay_dest.len() {
            return Err(Error::Shape("source→relay and relay→destination counts differ".into()));
        }
        for (f, g) in source_relay.iter().zip(&relay_dest) {
            if f.shape() != (antennas, relay_ant) || g.shape() != (relay_ant, antennas) {
                return Err(Error::Shape(format!(
                    "link shapes {:?}/{:?} do not fit a {system} system with N={antennas}",
                    f.shape(),
                    g.shape()
                )));
            }
        }
        if let Some(h) = &direct {
            if h.shape() != (antennas, antennas) {
                return Err(Error::Shape("direct link must be NxN".into()));
            }
        }
        Ok(LinkSet {
            system,
            antennas,
            sigma2_f,
            source_relay,
            relay_dest,
            direct,
        })
    }

    pub fn system(&self) -> SystemKind {
        self.system
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn n_relays(&self) -> usize {
        self.source_relay.len()
    }

    pub fn relay_antennas(&self) -> usize {
        match self.system {
            SystemKind::Mas => self.antennas,
            SystemKind::Sas => 1,
        }
    }

    pub fn sigma2_f(&self) -> f64 {
        self.sigma2_f
    }

    pub fn source_relay(&self, k: usize) -> &CMatrix {
        &self.source_relay[k]
    }

    pub fn relay_dest(&self, k: usize) -> &CMatrix {
        &self.relay_dest[k]
    }

    /// Channel vector from relay `k`, antenna `j`, to the destination antennas.
    pub fn relay_dest_vector(&self, k: usize, j: usize) -> Vec<C64> {
        self.relay_dest[k].row(j).to_vec()
    }

    pub fn direct(&self) -> Option<&CMatrix> {
        self.direct.as_ref()
    }

    /// The same links with the source restricted to antenna `n`, which then
    /// carries the full source power.
    pub fn with_source_antenna(&self, n: usize) -> Result<LinkSet> {
        if n >= self.antennas {
            return Err(Error::Shape(format!("source antenna {n} out of range")));
        }
        let boost = (self.antennas as f64).sqrt();
        let mask = |m: &CMatrix| CMatrix::from_fn(m.rows(), m.cols(), |r, c| if r == n { m[(r, c)] * boost } else { C64::new(0.0, 0.0) });
        Ok(LinkSet {
            source_relay: self.source_relay.iter().map(mask).collect(),
            direct: self.direct.as_ref().map(mask),
            ..self.clone()
        })
    }
}

pub fn draw_block_fading(rng: &mut RngStream, cfg: &ChannelConfig) -> Result<LinkSet> {
    if cfg.n_relays == 0 || cfg.antennas == 0 {
        return Err(Error::InvalidParameter("need at least one relay and one antenna".into()));
    }
    let relay_ant = match cfg.system {
        SystemKind::Mas => cfg.antennas,
        SystemKind::Sas => 1,
    };
    let mut source_relay = Vec::with_capacity(cfg.n_relays);
    let mut relay_dest = Vec::with_capacity(cfg.n_relays);
    for _ in 0..cfg.n_relays {
        source_relay.push(complex_gaussian(rng, cfg.antennas, relay_ant, cfg.sigma2_f)?);
        relay_dest.push(complex_gaussian(rng, relay_ant, cfg.antennas, cfg.sigma2_g)?);
    }
    let direct = if cfg.direct_link {
        Some(complex_gaussian(rng, cfg.antennas, cfg.antennas, cfg.sigma2_g)?)
    } else {
        None
    };
    LinkSet::new(cfg.system, cfg.sigma2_f, source_relay, relay_dest, direct)
}

/// `window×inner` matrix placing a length-`inner` sequence at offset `delta`.
pub fn shift_operator(delta: usize, inner: usize, window: usize) -> Result<CMatrix> {
    if inner == 0 || window < inner + delta {
        return Err(Error::Shape(format!(
            "a window of {window} cannot hold {inner} samples delayed by {delta}"
        )));
    }
    let mut j = CMatrix::zeros(window, inner);
    for t in 0..inner {
        j[(delta + t, t)] = ONE;
    }
    Ok(j)
}

/// Maps of one relay path into the destination window.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivalentChannel {
    /// `(N·W)×2T`, acting on `[s; conj(s)]`.
    pub signal: CMatrix,
    /// `(N·W)×2M`, acting on the relay's augmented noise `[n; conj(n)]`.
    pub noise: CMatrix,
    /// Window length `W = T + δ_max` per destination antenna.
    pub window: usize,
    pub rx_antennas: usize,
}

impl EquivalentChannel {
    pub fn len(&self) -> usize {
        self.signal.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Window length per destination antenna.
pub fn window_length(block_length: usize, profile: &DelayProfile) -> usize {
    block_length + profile.delta_max()
}

/// Number of complex relay-noise samples per relay (before augmentation).
pub fn relay_noise_len(system: SystemKind, block_length: usize, antennas: usize) -> usize {
    match system {
        SystemKind::Mas => block_length * antennas,
        SystemKind::Sas => block_length,
    }
}

/// Stacks `gains[a] · J_δ · map` for every destination antenna `a`.
fn embed(map: &CMatrix, gains: &[C64], delta: usize, window: usize) -> Result<CMatrix> {
    let shifted = shift_operator(delta, map.rows(), window)?.matmul(map)?;
    let mut out = CMatrix::zeros(window * gains.len(), map.cols());
    for (a, &g) in gains.iter().enumerate() {
        out.set_block(a * window, 0, &shifted.scale(g));
    }
    Ok(out)
}

fn check_relay(links: &LinkSet, profile: &DelayProfile, k: usize) -> Result<()> {
    if profile.n_relays() != links.n_relays() {
        return Err(Error::Shape(format!(
            "{} delays for {} relays",
            profile.n_relays(),
            links.n_relays()
        )));
    }
    if k >= links.n_relays() {
        return Err(Error::Shape(format!("relay {k} out of range")));
    }
    Ok(())
}

/// Path of relay `k`, antenna `j` in a multiple-antenna system.
///
/// Antenna `j` forwards `X_k w_{k,j}`, where `X_k = S F_k + N_k` is the
/// relay's `T×N` received block and `w_{k,j}` the relay code's mixing column.
/// The noise map acts on `[vec(N_k); conj(vec(N_k))]` (column-major).
pub fn build_equivalent_mas(
    links: &LinkSet,
    d: &DispersionSet,
    code: &RelayCode,
    profile: &DelayProfile,
    k: usize,
    j: usize,
) -> Result<EquivalentChannel> {
    if links.system() != SystemKind::Mas {
        return Err(Error::InvalidParameter("links are not a multiple-antenna system".into()));
    }
    check_relay(links, profile, k)?;
    let n = links.antennas();
    if j >= n {
        return Err(Error::Shape(format!("relay antenna {j} out of range")));
    }
    if d.antennas() != n {
        return Err(Error::Shape("dispersion set does not match the antenna count".into()));
    }
    let t = d.block_length();
    let window = window_length(t, profile);
    let w = code.antenna_weights(k, j)?;
    let f_eff = links.source_relay(k).matvec(&w)?;
    let sent_signal = d.combined_map(&f_eff)?;
    let mut sent_noise = CMatrix::zeros(t, 2 * t * n);
    for (jj, &wj) in w.iter().enumerate() {
        for tt in 0..t {
            sent_noise[(tt, jj * t + tt)] = wj;
        }
    }
    let g = links.relay_dest_vector(k, j);
    Ok(EquivalentChannel {
        signal: embed(&sent_signal, &g, profile.delay(k), window)?,
        noise: embed(&sent_noise, &g, profile.delay(k), window)?,
        window,
        rx_antennas: n,
    })
}

/// Path of single-antenna relay `k` as seen by destination antenna `j`.
///
/// The relay receives `x_k = S f_k + n_k`, re-encodes it with its relay code
/// and transmits; only the rows of antenna `j`'s window are non-zero, so the
/// per-antenna scalars `φ_{k,j}` weight each receive window separately.
pub fn build_equivalent_sas(
    links: &LinkSet,
    d: &DispersionSet,
    code: &RelayCode,
    profile: &DelayProfile,
    k: usize,
    j: usize,
) -> Result<EquivalentChannel> {
    if links.system() != SystemKind::Sas {
        return Err(Error::InvalidParameter("links are not a single-antenna system".into()));
    }
    check_relay(links, profile, k)?;
    let n = links.antennas();
    if j >= n {
        return Err(Error::Shape(format!("destination antenna {j} out of range")));
    }
    if code.block_length() != d.block_length() {
        return Err(Error::Shape("relay code and source code block lengths differ".into()));
    }
    let t = d.block_length();
    let window = window_length(t, profile);
    let received = augment_conjugate(&d.combined_map(&links.source_relay(k).column(0))?);
    let relay_map = code.single_antenna_map(k)?;
    let sent_signal = relay_map.matmul(&received)?;
    let mut gains = vec![C64::new(0.0, 0.0); n];
    gains[j] = links.relay_dest(k)[(0, j)];
    Ok(EquivalentChannel {
        signal: embed(&sent_signal, &gains, profile.delay(k), window)?,
        noise: embed(&relay_map, &gains, profile.delay(k), window)?,
        window,
        rx_antennas: n,
    })
}

/// `(N·T)×2T` map of the source→destination transmission (first phase).
pub fn build_direct_map(links: &LinkSet, d: &DispersionSet) -> Result<Option<CMatrix>> {
    let Some(h) = links.direct() else {
        return Ok(None);
    };
    let t = d.block_length();
    let n = links.antennas();
    let mut out = CMatrix::zeros(n * t, 2 * t);
    for a in 0..n {
        out.set_block(a * t, 0, &d.combined_map(&h.column(a))?);
    }
    Ok(Some(out))
}

/// Adds i.i.d. complex Gaussian noise; zero variance returns the input.
pub fn add_awgn(rng: &mut RngStream, signal: &[C64], variance: f64) -> Result<Vec<C64>> {
    if variance < 0.0 || !variance.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise variance must be non-negative, got {variance}"
        )));
    }
    if variance == 0.0 {
        return Ok(signal.to_vec());
    }
    Ok(signal.iter().map(|&x| x + rng.complex_normal(variance)).collect())
}

/// `[v; conj(v)]`.
pub fn augment(v: &[C64]) -> Vec<C64> {
    v.iter().copied().chain(v.iter().map(|z| z.conj())).collect()
}
