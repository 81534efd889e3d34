//! Gray-mapped BPSK and 4-QAM with unit average symbol energy.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::C64;

/// Symbols carried by one space-time block.
pub type SymbolVector = Vec<C64>;

/// Largest exhaustive ML search space accepted by default.
pub const DEFAULT_CODEBOOK_CAP: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    Bpsk,
    Qam4,
}

impl FromStr for Modulation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bpsk" => Ok(Modulation::Bpsk),
            "qam4" | "4qam" | "qpsk" => Ok(Modulation::Qam4),
            other => Err(Error::Config(format!("unknown modulation `{other}`"))),
        }
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modulation::Bpsk => "bpsk",
            Modulation::Qam4 => "qam4",
        })
    }
}

/// Point `i` carries the bit pattern of `i`, most significant bit first.
#[derive(Clone, Debug, PartialEq)]
pub struct Constellation {
    modulation: Modulation,
    points: Vec<C64>,
    bits_per_symbol: usize,
}

impl Constellation {
    pub fn new(modulation: Modulation) -> Self {
        let points = match modulation {
            // 0 -> +1, 1 -> -1
            Modulation::Bpsk => vec![C64::new(1.0, 0.0), C64::new(-1.0, 0.0)],
            // first bit picks the sign of the real part, second the imaginary part
            Modulation::Qam4 => {
                let a = std::f64::consts::FRAC_1_SQRT_2;
                vec![
                    C64::new(a, a),
                    C64::new(a, -a),
                    C64::new(-a, a),
                    C64::new(-a, -a),
                ]
            }
        };
        let bits_per_symbol = points.len().trailing_zeros() as usize;
        Constellation {
            modulation,
            points,
            bits_per_symbol,
        }
    }

    pub fn modulation(&self) -> Modulation {
        self.modulation
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    fn index_of_bits(&self, bits: &[u8]) -> usize {
        bits.iter().fold(0, |acc, &b| (acc << 1) | usize::from(b & 1))
    }

    fn bits_of_index(&self, index: usize, out: &mut Vec<u8>) {
        for shift in (0..self.bits_per_symbol).rev() {
            out.push(((index >> shift) & 1) as u8);
        }
    }

    /// Nearest point; exact ties go to the lower bit pattern.
    pub fn nearest_index(&self, z: C64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }
}

pub fn modulate(bits: &[u8], c: &Constellation) -> Result<SymbolVector> {
    let k = c.bits_per_symbol();
    if bits.len() % k != 0 {
        return Err(Error::Framing {
            len: bits.len(),
            bits_per_symbol: k,
        });
    }
    Ok(bits.chunks(k).map(|chunk| c.points[c.index_of_bits(chunk)]).collect())
}

/// Minimum-distance hard decisions, one bit group per symbol.
pub fn demodulate_hard(symbols: &[C64], c: &Constellation) -> Vec<u8> {
    let mut out = Vec::with_capacity(symbols.len() * c.bits_per_symbol());
    for &z in symbols {
        c.bits_of_index(c.nearest_index(z), &mut out);
    }
    out
}

/// All `|c|^n` symbol vectors of length `n`, in lexicographic bit order.
pub fn enumerate_codebook(c: &Constellation, n: usize, cap: usize) -> Result<Vec<SymbolVector>> {
    if n == 0 {
        return Err(Error::InvalidParameter("codebook length must be at least 1".into()));
    }
    let size = (c.size() as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if size > cap as u128 {
        return Err(Error::Capacity { size, cap });
    }
    let m = c.size();
    Ok((0..size as usize)
        .map(|mut idx| {
            let mut v = vec![C64::new(0.0, 0.0); n];
            for slot in v.iter_mut().rev() {
                *slot = c.points[idx % m];
                idx /= m;
            }
            v
        })
        .collect())
}

/// Bits carried by codebook entry `index` (as produced by [`enumerate_codebook`]).
pub fn codeword_bits(c: &Constellation, n: usize, index: usize) -> Vec<u8> {
    let m = c.size();
    let mut digits = vec![0usize; n];
    let mut idx = index;
    for d in digits.iter_mut().rev() {
        *d = idx % m;
        idx /= m;
    }
    let mut out = Vec::with_capacity(n * c.bits_per_symbol());
    for d in digits {
        c.bits_of_index(d, &mut out);
    }
    out
}
