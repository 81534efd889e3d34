//! Monte Carlo BER engine, experiment configuration and curve statistics.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acmoro::{run_block_optimization, BlockInputs, Observation, OptimizerState, SGConfig, SelectionPolicy};
use crate::channel::{draw_block_fading, ChannelConfig, DelayProfile, SystemKind};
use crate::detection::ml_detect_index;
use crate::error::{Error, Result};
use crate::modem::{codeword_bits, enumerate_codebook, modulate, Constellation, Modulation, SymbolVector, DEFAULT_CODEBOOK_CAP};
use crate::numerics::RngStream;
use crate::relaying::{transmit, NoiseLevels};
use crate::stcodes::{DispersionSet, RelayCode, StcScheme};

/// Trials simulated between two checks of the stop rule.
pub const BATCH: u64 = 256;

/// Largest tolerated share of skipped (degenerate) blocks.
pub const MAX_SKIPPED_FRACTION: f64 = 1e-3;

/// Stream reserved for per-run code construction.
const CODE_STREAM: u64 = u64::MAX;

pub const CSV_HEADER: &str = "snr_db,ber,bit_errors,bits,ci95";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Mas,
    Sas,
    /// Point-to-point AWGN, no relays; for calibration.
    Awgn,
}

impl std::str::FromStr for Link {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mas" => Ok(Link::Mas),
            "sas" => Ok(Link::Sas),
            "awgn" => Ok(Link::Awgn),
            other => Err(Error::Config(format!("unknown system `{other}`"))),
        }
    }
}

impl std::fmt::Display for Link {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Link::Mas => "mas",
            Link::Sas => "sas",
            Link::Awgn => "awgn",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub system: Link,
    pub stc: StcScheme,
    pub modulation: Modulation,
    pub n_relays: usize,
    pub n_antennas: usize,
    pub delays: Vec<usize>,
    pub direct_link: bool,
    pub sigma2_f: f64,
    pub sigma2_g: f64,
    /// Relay noise variance relative to `P₁/SNR`.
    pub sigma2_n1: f64,
    /// Destination noise variance relative to `P₁/SNR`.
    pub sigma2_d: f64,
    pub p1: f64,
    pub p2: f64,
    /// Code-matrix budget `P_R`; `None` is the identity-equivalent budget.
    pub p_r: Option<f64>,
    pub snr_db: Vec<f64>,
    pub beta: f64,
    pub sg_iterations: usize,
    pub redetect: bool,
    pub observation: Observation,
    pub policy: SelectionPolicy,
    pub optimize: bool,
    /// Most blocks per SNR point.
    pub trials: u64,
    /// Stop a point early once this many bit errors are seen; 0 disables.
    pub min_bit_errors: u64,
    pub codewords_per_block: usize,
    pub seed: u64,
    /// Worker threads; 0 lets the thread pool decide.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            system: Link::Mas,
            stc: StcScheme::DAlamouti,
            modulation: Modulation::Bpsk,
            n_relays: 2,
            n_antennas: 2,
            delays: vec![0, 1],
            direct_link: false,
            sigma2_f: 1.0,
            sigma2_g: 1.0,
            sigma2_n1: 1.0,
            sigma2_d: 1.0,
            p1: 1.0,
            p2: 1.0,
            p_r: None,
            snr_db: parse_grid("0:2:20").expect("static grid"),
            beta: SGConfig::default().beta,
            sg_iterations: SGConfig::default().iterations,
            redetect: true,
            observation: SGConfig::default().observation,
            policy: SelectionPolicy::Equal,
            optimize: true,
            trials: 100_000,
            min_bit_errors: 200,
            codewords_per_block: 1,
            seed: 1,
            workers: 0,
        }
    }
}

/// `lo:step:hi` (inclusive) or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bad number `{s}` in SNR grid")))
    };
    let grid = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let [lo, step, hi] = parts[..] else {
            return Err(Error::Config(format!("SNR range `{text}` is not lo:step:hi")));
        };
        let (lo, step, hi) = (num(lo)?, num(step)?, num(hi)?);
        if !(step > 0.0) || hi < lo {
            return Err(Error::Config(format!("SNR range `{text}` is empty")));
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| lo + step * i as f64).collect()
    } else {
        text.split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) || grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config(format!("SNR grid `{text}` must be non-empty and strictly increasing")));
    }
    Ok(grid)
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}` expects on/off, got `{v}`"))),
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`")))
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("duplicate key `{key}`")));
            }
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "system" => self.system = v.parse()?,
            "stc" => self.stc = v.parse()?,
            "modulation" => self.modulation = v.parse()?,
            "n_relays" => self.n_relays = parse_value(key, v)?,
            "n_antennas" => self.n_antennas = parse_value(key, v)?,
            "delays" => {
                self.delays = v
                    .split(',')
                    .map(|d| parse_value(key, d.trim()))
                    .collect::<Result<Vec<_>>>()?
            }
            "direct_link" => self.direct_link = parse_bool(key, v)?,
            "sigma2_f" => self.sigma2_f = parse_value(key, v)?,
            "sigma2_g" => self.sigma2_g = parse_value(key, v)?,
            "sigma2_n1" => self.sigma2_n1 = parse_value(key, v)?,
            "sigma2_d" => self.sigma2_d = parse_value(key, v)?,
            "p1" => self.p1 = parse_value(key, v)?,
            "p2" => self.p2 = parse_value(key, v)?,
            "p_r" => {
                self.p_r = if v.eq_ignore_ascii_case("auto") {
                    None
                } else {
                    Some(parse_value(key, v)?)
                }
            }
            "snr_db_range" | "snr_db" => self.snr_db = parse_grid(v)?,
            "beta" => self.beta = parse_value(key, v)?,
            "sg_iterations" => self.sg_iterations = parse_value(key, v)?,
            "redetect" => self.redetect = parse_bool(key, v)?,
            "observation" => self.observation = v.parse()?,
            "policy" => self.policy = v.parse()?,
            "optimize" => self.optimize = parse_bool(key, v)?,
            "trials" => self.trials = parse_value(key, v)?,
            "min_bit_errors" => self.min_bit_errors = parse_value(key, v)?,
            "codewords_per_block" => self.codewords_per_block = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "workers" => self.workers = parse_value(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// The config in the same flat format [`ExperimentConfig::parse`] reads.
    pub fn to_kv(&self) -> String {
        let list = |v: &[String]| v.join(",");
        let mut s = String::new();
        let delays: Vec<String> = self.delays.iter().map(|d| d.to_string()).collect();
        let grid: Vec<String> = self.snr_db.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(s, "system = {}", self.system);
        let _ = writeln!(s, "stc = {}", self.stc);
        let _ = writeln!(s, "modulation = {}", self.modulation);
        let _ = writeln!(s, "n_relays = {}", self.n_relays);
        let _ = writeln!(s, "n_antennas = {}", self.n_antennas);
        let _ = writeln!(s, "delays = {}", list(&delays));
        let _ = writeln!(s, "direct_link = {}", on_off(self.direct_link));
        let _ = writeln!(s, "sigma2_f = {}", self.sigma2_f);
        let _ = writeln!(s, "sigma2_g = {}", self.sigma2_g);
        let _ = writeln!(s, "sigma2_n1 = {}", self.sigma2_n1);
        let _ = writeln!(s, "sigma2_d = {}", self.sigma2_d);
        let _ = writeln!(s, "p1 = {}", self.p1);
        let _ = writeln!(s, "p2 = {}", self.p2);
        match self.p_r {
            Some(p) => {
                let _ = writeln!(s, "p_r = {p}");
            }
            None => s.push_str("p_r = auto\n"),
        }
        let _ = writeln!(s, "snr_db_range = {}", list(&grid));
        let _ = writeln!(s, "beta = {}", self.beta);
        let _ = writeln!(s, "sg_iterations = {}", self.sg_iterations);
        let _ = writeln!(s, "redetect = {}", on_off(self.redetect));
        let _ = writeln!(s, "observation = {}", self.observation);
        let _ = writeln!(s, "policy = {}", self.policy);
        let _ = writeln!(s, "optimize = {}", on_off(self.optimize));
        let _ = writeln!(s, "trials = {}", self.trials);
        let _ = writeln!(s, "min_bit_errors = {}", self.min_bit_errors);
        let _ = writeln!(s, "codewords_per_block = {}", self.codewords_per_block);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "workers = {}", self.workers);
        s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.codewords_per_block == 0 {
            return bad("codewords_per_block must be at least 1".into());
        }
        if self.snr_db.is_empty() || self.snr_db.windows(2).any(|w| w[1] <= w[0]) {
            return bad("SNR grid must be non-empty and strictly increasing".into());
        }
        for (name, v) in [("p1", self.p1), ("p2", self.p2), ("p_r", self.p_r.unwrap_or(1.0)), ("sigma2_f", self.sigma2_f), ("sigma2_g", self.sigma2_g)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("sigma2_n1", self.sigma2_n1), ("sigma2_d", self.sigma2_d)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be non-negative, got {}", self.beta));
        }
        if self.system != Link::Awgn {
            if self.n_relays == 0 || self.n_antennas == 0 {
                return bad("need at least one relay and one antenna".into());
            }
            if self.delays.len() != self.n_relays {
                return bad(format!("{} delays for {} relays", self.delays.len(), self.n_relays));
            }
            DelayProfile::new(self.delays.clone())?;
        }
        Ok(())
    }

    pub fn sg(&self) -> SGConfig {
        SGConfig {
            beta: self.beta,
            iterations: self.sg_iterations,
            redetect: self.redetect,
            observation: self.observation,
        }
    }

    /// `P_R`, resolving `auto` to `Σ Tr(I)` over the code matrices: one
    /// identity per path, so unadapted codes pass the relay signal unscaled.
    pub fn code_budget(&self) -> f64 {
        if let Some(p) = self.p_r {
            return p;
        }
        let paths = (self.n_relays * self.n_antennas) as f64;
        match self.system {
            Link::Sas => paths,
            _ => {
                let window = self.n_antennas + self.delays.iter().copied().max().unwrap_or(0);
                paths * (self.n_antennas * window) as f64
            }
        }
    }

    /// Absolute noise variances at `snr_db`, with `SNR = P₁/σ²`.
    pub fn noise_at(&self, snr_db: f64) -> NoiseLevels {
        let sigma2 = self.p1 / 10f64.powf(snr_db / 10.0);
        NoiseLevels {
            sigma2_n1: self.sigma2_n1 * sigma2,
            sigma2_d: self.sigma2_d * sigma2,
        }
    }
}

/// Wilson score interval half-width for `errors` out of `n`.
pub fn wilson_half_width(errors: u64, n: u64, z: f64) -> f64 {
    if n == 0 {
        return 0.5;
    }
    let n = n as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt()
}

/// Centre of the Wilson interval.
pub fn wilson_center(errors: u64, n: u64, z: f64) -> f64 {
    if n == 0 {
        return 0.5;
    }
    let n = n as f64;
    let z2 = z * z;
    (errors as f64 / n + z2 / (2.0 * n)) / (1.0 + z2 / n)
}

/// SplitMix64 finaliser over `seed ⊕ key`.
pub fn derive_seed(seed: u64, key: u64) -> u64 {
    let mut z = seed ^ key.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BERRecord {
    pub snr_db: f64,
    pub bit_errors: u64,
    pub bits: u64,
    pub ber: f64,
    pub ci95: f64,
    pub trials: u64,
    pub skipped: u64,
    pub wall_time: f64,
}

impl BERRecord {
    pub fn new(snr_db: f64, bit_errors: u64, bits: u64) -> Self {
        BERRecord {
            snr_db,
            bit_errors,
            bits,
            ber: if bits == 0 { 0.0 } else { bit_errors as f64 / bits as f64 },
            ci95: wilson_half_width(bit_errors, bits, 1.96),
            trials: 0,
            skipped: 0,
            wall_time: 0.0,
        }
    }

    /// Wilson 95% interval.
    pub fn interval(&self) -> (f64, f64) {
        let c = wilson_center(self.bit_errors, self.bits, 1.96);
        ((c - self.ci95).max(0.0), (c + self.ci95).min(1.0))
    }
}

/// Everything that stays fixed across the blocks of a run.
struct Simulator {
    cfg: ExperimentConfig,
    constellation: Constellation,
    codebook: Vec<SymbolVector>,
    source_code: DispersionSet,
    relay_code: Option<RelayCode>,
    profile: DelayProfile,
    channel: ChannelConfig,
    bits_per_codeword: u64,
}

impl Simulator {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let constellation = Constellation::new(cfg.modulation);
        let system = match cfg.system {
            Link::Sas => SystemKind::Sas,
            _ => SystemKind::Mas,
        };
        let mut code_rng = RngStream::new(cfg.seed, CODE_STREAM);
        let (source_code, relay_code, profile) = if cfg.system == Link::Awgn {
            (DispersionSet::alamouti(), None, DelayProfile::zero(1))
        } else {
            let source = DispersionSet::for_scheme(cfg.stc, cfg.n_antennas, &mut code_rng)?;
            let relay = match cfg.stc {
                StcScheme::RAlamouti => None,
                _ => Some(RelayCode::new(cfg.stc, cfg.n_relays, cfg.n_antennas, &mut code_rng)?),
            };
            (source, relay, DelayProfile::new(cfg.delays.clone())?)
        };
        let t = source_code.block_length();
        let codebook = enumerate_codebook(&constellation, t, DEFAULT_CODEBOOK_CAP)?;
        Ok(Simulator {
            bits_per_codeword: (t * constellation.bits_per_symbol()) as u64,
            constellation,
            codebook,
            source_code,
            relay_code,
            profile,
            channel: ChannelConfig {
                system,
                n_relays: cfg.n_relays,
                antennas: cfg.n_antennas,
                sigma2_f: cfg.sigma2_f,
                sigma2_g: cfg.sigma2_g,
                direct_link: cfg.direct_link,
            },
            cfg: cfg.clone(),
        })
    }

    fn random_bits(&self, rng: &mut RngStream) -> Vec<u8> {
        (0..self.bits_per_codeword).map(|_| rng.random_range(0..2u8)).collect()
    }

    fn block_inputs_and_run(&self, noise: NoiseLevels, rng: &mut RngStream) -> Result<crate::acmoro::BlockOutcome> {
        let links = draw_block_fading(rng, &self.channel)?;
        let drawn;
        let relay_code = match &self.relay_code {
            Some(c) => c,
            None => {
                drawn = RelayCode::new(self.cfg.stc, self.cfg.n_relays, self.cfg.n_antennas, rng)?;
                &drawn
            }
        };
        let inputs = BlockInputs {
            links: &links,
            source_code: &self.source_code,
            relay_code,
            profile: &self.profile,
            codebook: &self.codebook,
            noise,
            p1: self.cfg.p1,
            p2: self.cfg.p2,
            p_r: self.cfg.code_budget(),
        };
        run_block_optimization(&inputs, &self.cfg.sg(), self.cfg.policy, self.cfg.optimize, rng)
    }

    /// Bit errors of one block.
    fn trial(&self, noise: NoiseLevels, rng: &mut RngStream) -> Result<u64> {
        if self.cfg.system == Link::Awgn {
            let mut errors = 0;
            for _ in 0..self.cfg.codewords_per_block {
                let bits = self.random_bits(rng);
                let s = modulate(&bits, &self.constellation)?;
                let y: Vec<_> = s.iter().map(|z| z + rng.complex_normal(noise.sigma2_d)).collect();
                let hat = crate::modem::demodulate_hard(&y, &self.constellation);
                errors += bits.iter().zip(&hat).filter(|(a, b)| a != b).count() as u64;
            }
            return Ok(errors);
        }
        let out = self.block_inputs_and_run(noise, rng)?;
        let t = self.source_code.block_length();
        let mut errors = 0;
        for _ in 0..self.cfg.codewords_per_block {
            let bits = self.random_bits(rng);
            let s = modulate(&bits, &self.constellation)?;
            let rv = transmit(&s, &out.model, &out.state.codes, &out.alloc, noise, rng)?;
            let (idx, _) = ml_detect_index(&out.model.ml_problem(&out.state.codes, &rv.r, &self.codebook)?)?;
            let hat = codeword_bits(&self.constellation, t, idx);
            errors += bits.iter().zip(&hat).filter(|(a, b)| a != b).count() as u64;
        }
        Ok(errors)
    }

    fn run_point(&self, snr_db: f64) -> Result<BERRecord> {
        let start = Instant::now();
        let noise = self.cfg.noise_at(snr_db);
        let point_seed = derive_seed(self.cfg.seed, snr_db.to_bits());
        let bits_per_trial = self.bits_per_codeword * self.cfg.codewords_per_block as u64;
        let (mut errors, mut trials, mut skipped) = (0u64, 0u64, 0u64);
        while trials < self.cfg.trials && (self.cfg.min_bit_errors == 0 || errors < self.cfg.min_bit_errors) {
            let end = (trials + BATCH).min(self.cfg.trials);
            let results: Vec<Result<u64>> = (trials..end)
                .into_par_iter()
                .map(|i| self.trial(noise, &mut RngStream::new(point_seed, i)))
                .collect();
            for r in results {
                match r {
                    Ok(e) => errors += e,
                    Err(Error::Degenerate) => skipped += 1,
                    Err(e) => return Err(e),
                }
            }
            trials = end;
        }
        if skipped as f64 > MAX_SKIPPED_FRACTION * trials as f64 {
            return Err(Error::InvalidParameter(format!(
                "{skipped} of {trials} blocks were degenerate at {snr_db} dB"
            )));
        }
        let mut rec = BERRecord::new(snr_db, errors, (trials - skipped) * bits_per_trial);
        rec.trials = trials;
        rec.skipped = skipped;
        rec.wall_time = start.elapsed().as_secs_f64();
        Ok(rec)
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}

/// One SNR point. Blocks use the stream `(derive_seed(seed, snr), block index)`,
/// so results do not depend on the grid or the worker count.
pub fn run_point(cfg: &ExperimentConfig, snr_db: f64) -> Result<BERRecord> {
    let sim = Simulator::new(cfg)?;
    pool(cfg.workers)?.install(|| sim.run_point(snr_db))
}

/// Optimizer states of `blocks` independent blocks at `snr_db`, drawn from
/// the same streams as the BER simulation.
pub fn optimizer_runs(cfg: &ExperimentConfig, snr_db: f64, blocks: u64) -> Result<Vec<OptimizerState>> {
    if cfg.system == Link::Awgn {
        return Err(Error::Config("the AWGN link has no relays to optimise".into()));
    }
    let sim = Simulator::new(cfg)?;
    let noise = cfg.noise_at(snr_db);
    let seed = derive_seed(cfg.seed, snr_db.to_bits());
    pool(cfg.workers)?.install(|| {
        (0..blocks)
            .into_par_iter()
            .map(|i| Ok(sim.block_inputs_and_run(noise, &mut RngStream::new(seed, i))?.state))
            .collect()
    })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median objective over the first and the last `fraction` of a trace.
pub fn trace_medians(trace: &[f64], fraction: f64) -> Option<(f64, f64)> {
    let n = trace.len();
    let k = ((n as f64 * fraction).round() as usize).max(1);
    if n < 2 * k {
        return None;
    }
    Some((median(&mut trace[..k].to_vec()), median(&mut trace[n - k..].to_vec())))
}

/// Share of traces whose late median does not exceed their early median.
pub fn descent_fraction(states: &[OptimizerState], fraction: f64) -> f64 {
    if states.is_empty() {
        return 0.0;
    }
    let ok = states
        .iter()
        .filter(|s| trace_medians(&s.objective_trace, fraction).is_some_and(|(first, last)| last <= first))
        .count();
    ok as f64 / states.len() as f64
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub records: Vec<BERRecord>,
    pub wall_time: f64,
}

/// Every grid point; `on_point` sees each record as soon as it is done.
pub fn run_sweep_with(cfg: &ExperimentConfig, mut on_point: impl FnMut(&[BERRecord]) -> Result<()>) -> Result<Manifest> {
    let start = Instant::now();
    let sim = Simulator::new(cfg)?;
    let pool = pool(cfg.workers)?;
    let mut records = Vec::with_capacity(cfg.snr_db.len());
    for &snr in &cfg.snr_db {
        records.push(pool.install(|| sim.run_point(snr))?);
        on_point(&records)?;
    }
    Ok(Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        config: cfg.clone(),
        records,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Manifest> {
    run_sweep_with(cfg, |_| Ok(()))
}

/// CSV text of a curve. Holds no timing, so equal runs give equal bytes.
pub fn to_csv(records: &[BERRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(s, "{},{:e},{},{},{:e}", r.snr_db, r.ber, r.bit_errors, r.bits, r.ci95);
    }
    s
}

pub fn parse_csv(text: &str) -> Result<Vec<BERRecord>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        _ => return Err(Error::Config(format!("expected CSV header `{CSV_HEADER}`"))),
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 5 {
                return Err(Error::Config(format!("CSV row {}: expected 5 fields", i + 1)));
            }
            let snr = parse_value("snr_db", f[0])?;
            let errors = parse_value("bit_errors", f[2])?;
            let bits = parse_value("bits", f[3])?;
            let mut rec = BERRecord::new(snr, errors, bits);
            rec.ber = parse_value("ber", f[1])?;
            rec.ci95 = parse_value("ci95", f[4])?;
            Ok(rec)
        })
        .collect()
}

pub fn read_curve(path: &Path) -> Result<Vec<BERRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_csv(&text)
}

/// Runs the sweep, rewriting `ber.csv` after every point and writing
/// `manifest.json` at the end. Returns the two paths.
pub fn run_to_dir(cfg: &ExperimentConfig, out: &Path) -> Result<(PathBuf, PathBuf, Manifest)> {
    fs::create_dir_all(out)?;
    let csv = out.join("ber.csv");
    let json = out.join("manifest.json");
    let manifest = run_sweep_with(cfg, |records| Ok(fs::write(&csv, to_csv(records))?))?;
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(&json, text)?;
    Ok((csv, json, manifest))
}

/// SNR at which the log-linear interpolation of `curve` first reaches `target`.
pub fn snr_at_ber(curve: &[BERRecord], target: f64) -> Result<f64> {
    if !(target > 0.0) {
        return Err(Error::Range(format!("target BER {target} must be positive")));
    }
    let pts: Vec<(f64, f64)> = curve.iter().filter(|r| r.ber > 0.0).map(|r| (r.snr_db, r.ber.log10())).collect();
    let t = target.log10();
    for w in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if y0 >= t && y1 <= t {
            if y0 == y1 {
                return Ok(x0);
            }
            return Ok(x0 + (t - y0) * (x1 - x0) / (y1 - y0));
        }
    }
    Err(Error::Range(format!("curve does not bracket BER {target:e}")))
}

/// SNR advantage of curve `b` over curve `a` at `target` BER, in dB;
/// positive when `b` reaches the target at lower SNR.
pub fn measure_gain_db(a: &[BERRecord], b: &[BERRecord], target: f64) -> Result<f64> {
    Ok(snr_at_ber(a, target)? - snr_at_ber(b, target)?)
}

/// Negative least-squares slope of `log10(ber)` against `snr_db / 10` over
/// the points in `[lo, hi]` with non-zero BER.
pub fn estimate_diversity_order(curve: &[BERRecord], lo: f64, hi: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = curve
        .iter()
        .filter(|r| r.snr_db >= lo - 1e-9 && r.snr_db <= hi + 1e-9 && r.ber > 0.0)
        .map(|r| (r.snr_db / 10.0, r.ber.log10()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Range(format!(
            "{} usable points in [{lo}, {hi}] dB; need 3",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(-sxy / sxx)
}

/// True when the Wilson intervals of `a` and `b` do not overlap.
pub fn intervals_disjoint(a: &BERRecord, b: &BERRecord) -> bool {
    let (alo, ahi) = a.interval();
    let (blo, bhi) = b.interval();
    ahi < blo || bhi < alo
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(order: f64, shift_db: f64) -> Vec<BERRecord> {
        (0..=10)
            .map(|i| {
                let snr = 2.0 * i as f64;
                let mut r = BERRecord::new(snr, 0, 1);
                r.ber = 0.5 * 10f64.powf(-order * (snr + shift_db) / 10.0);
                r
            })
            .collect()
    }

    #[test]
    fn grid_arithmetic() {
        assert_eq!(parse_grid("0:2:20").unwrap().len(), 11);
        assert_eq!(parse_grid("0,5,7.5").unwrap(), vec![0.0, 5.0, 7.5]);
        assert!(parse_grid("3,1").is_err());
        assert!(parse_grid("0:0:2").is_err());
        assert!(parse_grid("").is_err());
    }

    #[test]
    fn config_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.system = Link::Sas;
        cfg.beta = 0.037;
        cfg.snr_db = vec![1.5, 3.0];
        cfg.policy = SelectionPolicy::Fo;
        let again = ExperimentConfig::parse(&cfg.to_kv()).unwrap();
        assert_eq!(again, cfg);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&json).unwrap(), cfg);
    }

    #[test]
    fn config_errors() {
        assert!(matches!(ExperimentConfig::parse("bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("trials = 0"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("seed = 1\nseed = 2"), Err(Error::Config(_))));
        assert!(ExperimentConfig::parse("n_relays = 3").is_err());
        assert!(ExperimentConfig::parse("n_relays = 3\ndelays = 0,2,1\n# comment\n").is_ok());
    }

    #[test]
    fn wilson_examples() {
        // hand-evaluated: p = 0.1, n = 100
        assert!((wilson_half_width(10, 100, 1.96) - 0.059_570).abs() < 1e-5);
        assert!(wilson_half_width(0, 1000, 1.96) > 0.0);
    }

    #[test]
    fn gain_and_diversity_on_constructed_curves() {
        let a = synthetic(2.0, 0.0);
        assert!(measure_gain_db(&a, &a, 1e-3).unwrap().abs() < 1e-12);
        let b = synthetic(2.0, 3.0);
        assert!((measure_gain_db(&a, &b, 1e-3).unwrap() - 3.0).abs() < 0.01);
        assert!((estimate_diversity_order(&synthetic(1.0, 0.0), 0.0, 20.0).unwrap() - 1.0).abs() < 0.05);
        assert!((estimate_diversity_order(&a, 12.0, 20.0).unwrap() - 2.0).abs() < 0.05);
        assert!(matches!(measure_gain_db(&a, &b, 1e-30), Err(Error::Range(_))));
        assert!(matches!(estimate_diversity_order(&a, 0.0, 3.0), Err(Error::Range(_))));
        // a diversity-2 curve pulls away from a diversity-1 curve as BER falls
        let d1 = synthetic(1.0, 0.0);
        let g2 = measure_gain_db(&d1, &a, 1e-1).unwrap();
        let g3 = measure_gain_db(&d1, &a, 2e-2).unwrap();
        assert!(g3 > g2);
    }

    #[test]
    fn csv_round_trip() {
        let recs = vec![BERRecord::new(0.0, 12, 1000), BERRecord::new(2.0, 3, 4000)];
        let back = parse_csv(&to_csv(&recs)).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].bit_errors, 3);
        assert!((back[0].ber - 0.012).abs() < 1e-15);
        assert!(parse_csv("a,b\n").is_err());
    }

    #[test]
    fn seeds_spread() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }

    proptest::proptest! {
        #[test]
        fn wilson_interval_is_inside_the_unit_range(n in 1u64..10_000_000, frac in 0.0f64..=1.0) {
            let errors = (frac * n as f64) as u64;
            let c = wilson_center(errors, n, 1.96);
            let h = wilson_half_width(errors, n, 1.96);
            let p = errors as f64 / n as f64;
            proptest::prop_assert!(h > 0.0);
            proptest::prop_assert!(c - h >= -1e-12 && c + h <= 1.0 + 1e-12);
            proptest::prop_assert!(c - h <= p + 1e-12 && p <= c + h + 1e-12);
        }
    }
}
