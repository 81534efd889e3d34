//! Space-time code constructions.
//!
//! A dispersion matrix may act on the symbol vector or on its complex
//! conjugate; Alamouti's second antenna needs the latter. Because of that the
//! linear maps produced here act on the *augmented* vector `[s; conj(s)]`,
//! which keeps every downstream model matrix-valued.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{complex_gaussian, frobenius_norm_sq, orthonormalize_columns, CMatrix, RngStream, C64, ONE, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StcScheme {
    #[serde(rename = "d-alamouti")]
    DAlamouti,
    #[serde(rename = "r-alamouti")]
    RAlamouti,
    #[serde(rename = "ldc")]
    Ldc,
}

impl FromStr for StcScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "d-alamouti" | "alamouti" => Ok(StcScheme::DAlamouti),
            "r-alamouti" => Ok(StcScheme::RAlamouti),
            "ldc" => Ok(StcScheme::Ldc),
            other => Err(Error::Config(format!("unknown space-time code `{other}`"))),
        }
    }
}

impl fmt::Display for StcScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StcScheme::DAlamouti => "d-alamouti",
            StcScheme::RAlamouti => "r-alamouti",
            StcScheme::Ldc => "ldc",
        })
    }
}

/// One `T×T` unitary dispersion matrix, applied to `s` or to `conj(s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dispersion {
    pub matrix: CMatrix,
    pub conjugate: bool,
}

impl Dispersion {
    pub fn apply(&self, s: &[C64]) -> Result<Vec<C64>> {
        if self.conjugate {
            let c: Vec<C64> = s.iter().map(|z| z.conj()).collect();
            self.matrix.matvec(&c)
        } else {
            self.matrix.matvec(s)
        }
    }
}

/// The `N` dispersion matrices that spread `s` over `T` slots and `N` antennas.
#[derive(Clone, Debug, PartialEq)]
pub struct DispersionSet {
    block_length: usize,
    matrices: Vec<Dispersion>,
}

impl DispersionSet {
    pub fn new(matrices: Vec<Dispersion>) -> Result<Self> {
        let t = matrices
            .first()
            .map(|d| d.matrix.rows())
            .ok_or_else(|| Error::InvalidParameter("empty dispersion set".into()))?;
        for d in &matrices {
            if d.matrix.shape() != (t, t) {
                return Err(Error::Shape(format!("dispersion matrices must be {t}x{t}")));
            }
            let gram = d.matrix.hermitian().matmul(&d.matrix)?;
            let err = frobenius_norm_sq(&gram.sub(&CMatrix::identity(t))?).sqrt();
            if err > 1e-10 {
                return Err(Error::InvalidParameter(format!(
                    "dispersion matrix is not unitary (error {err:e})"
                )));
            }
        }
        Ok(DispersionSet {
            block_length: t,
            matrices,
        })
    }

    /// `A₁ = I`, `A₂ s = [-s₂*, s₁*]`: the columns of the Alamouti block.
    pub fn alamouti() -> Self {
        let swap = CMatrix::from_rows(&[&[ZERO, -ONE], &[ONE, ZERO]]).expect("static shape");
        DispersionSet::new(vec![
            Dispersion {
                matrix: CMatrix::identity(2),
                conjugate: false,
            },
            Dispersion {
                matrix: swap,
                conjugate: true,
            },
        ])
        .expect("Alamouti generators are unitary")
    }

    /// `antennas` independent Haar-like unitary matrices of size `t`.
    pub fn random_unitary(rng: &mut RngStream, t: usize, antennas: usize) -> Result<Self> {
        let matrices = (0..antennas)
            .map(|_| {
                let mut m = complex_gaussian(rng, t, t, 1.0)?;
                orthonormalize_columns(&mut m)?;
                Ok(Dispersion {
                    matrix: m,
                    conjugate: false,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        DispersionSet::new(matrices)
    }

    /// Source (or relay codeword) dispersion for `antennas` antennas, `T = N`.
    pub fn for_scheme(scheme: StcScheme, antennas: usize, rng: &mut RngStream) -> Result<Self> {
        match scheme {
            StcScheme::DAlamouti | StcScheme::RAlamouti if antennas == 2 => Ok(Self::alamouti()),
            StcScheme::DAlamouti | StcScheme::RAlamouti => Err(Error::InvalidParameter(format!(
                "Alamouti codes need exactly 2 antennas, got {antennas}"
            ))),
            StcScheme::Ldc => Self::random_unitary(rng, antennas, antennas),
        }
    }

    pub fn block_length(&self) -> usize {
        self.block_length
    }

    pub fn antennas(&self) -> usize {
        self.matrices.len()
    }

    pub fn matrices(&self) -> &[Dispersion] {
        &self.matrices
    }

    /// `T×2T` matrix `L` with `Σ_n w_n A_n s = L [s; conj(s)]`.
    pub fn combined_map(&self, weights: &[C64]) -> Result<CMatrix> {
        if weights.len() != self.antennas() {
            return Err(Error::Shape(format!(
                "{} weights for {} dispersion matrices",
                weights.len(),
                self.antennas()
            )));
        }
        let t = self.block_length;
        let mut out = CMatrix::zeros(t, 2 * t);
        for (d, &w) in self.matrices.iter().zip(weights) {
            let offset = if d.conjugate { t } else { 0 };
            for r in 0..t {
                for c in 0..t {
                    out[(r, offset + c)] += w * d.matrix[(r, c)];
                }
            }
        }
        Ok(out)
    }
}

/// `S = [A₁s A₂s … A_N s]`, a `T×N` block (rows are symbol periods).
pub fn encode_source(s: &[C64], d: &DispersionSet) -> Result<CMatrix> {
    if s.len() != d.block_length() {
        return Err(Error::Shape(format!(
            "symbol vector of length {} for block length {}",
            s.len(),
            d.block_length()
        )));
    }
    let mut out = CMatrix::zeros(d.block_length(), d.antennas());
    for (n, a) in d.matrices().iter().enumerate() {
        out.set_column(n, &a.apply(s)?);
    }
    Ok(out)
}

/// Given `L` with `x = L z̄`, returns the map `z̄ ↦ [x; conj(x)]`.
pub fn augment_conjugate(map: &CMatrix) -> CMatrix {
    let (rows, cols) = map.shape();
    let half = cols / 2;
    let mut out = CMatrix::zeros(2 * rows, cols);
    out.set_block(0, 0, map);
    for r in 0..rows {
        for c in 0..cols {
            // conj(L z̄) = conj(L) swap(z̄)
            let swapped = if c < half { c + half } else { c - half };
            out[(rows + r, swapped)] = map[(r, c)].conj();
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CodeMatrixInit {
    pub radius: f64,
    pub rows: usize,
    pub cols: usize,
}

/// A matrix drawn uniformly from the complex hypersphere `‖Φ‖_F = radius`.
pub fn sample_uniform_sphere_matrix(rng: &mut RngStream, init: CodeMatrixInit) -> Result<CMatrix> {
    if !(init.radius > 0.0) || !init.radius.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "sphere radius must be positive, got {}",
            init.radius
        )));
    }
    let g = complex_gaussian(rng, init.rows, init.cols, 1.0)?;
    let norm = frobenius_norm_sq(&g).sqrt();
    Ok(g.scale_real(init.radius / norm))
}

/// Amplify-and-forward re-encoding at the relays.
///
/// Every relay builds the scheme's codeword from its noisy received samples
/// (no decisions). A single-antenna relay then transmits one fixed linear
/// combination of the codeword columns: column `k mod T` for the
/// deterministic schemes, a random unit-norm combination for R-Alamouti.
/// Multi-antenna relays forward their antenna streams through an `N×N`
/// mixing matrix (identity except for R-Alamouti).
#[derive(Clone, Debug)]
pub struct RelayCode {
    scheme: StcScheme,
    codeword: DispersionSet,
    column_weights: Vec<Vec<C64>>,
    antenna_mixing: Vec<CMatrix>,
}

impl RelayCode {
    pub fn new(scheme: StcScheme, n_relays: usize, antennas: usize, rng: &mut RngStream) -> Result<Self> {
        if n_relays == 0 || antennas == 0 {
            return Err(Error::InvalidParameter("need at least one relay and one antenna".into()));
        }
        let codeword = DispersionSet::for_scheme(scheme, antennas, rng)?;
        let t = codeword.block_length();
        let unit_vec = |rng: &mut RngStream, len: usize| -> Result<Vec<C64>> {
            let v = sample_uniform_sphere_matrix(
                rng,
                CodeMatrixInit {
                    radius: 1.0,
                    rows: len,
                    cols: 1,
                },
            )?;
            Ok(v.column(0))
        };
        let mut column_weights = Vec::with_capacity(n_relays);
        let mut antenna_mixing = Vec::with_capacity(n_relays);
        for k in 0..n_relays {
            match scheme {
                StcScheme::RAlamouti => {
                    column_weights.push(unit_vec(rng, codeword.antennas())?);
                    let mut mix = CMatrix::zeros(antennas, antennas);
                    for j in 0..antennas {
                        mix.set_column(j, &unit_vec(rng, antennas)?);
                    }
                    antenna_mixing.push(mix);
                }
                StcScheme::DAlamouti | StcScheme::Ldc => {
                    let mut w = vec![ZERO; codeword.antennas()];
                    w[k % codeword.antennas()] = ONE;
                    column_weights.push(w);
                    antenna_mixing.push(CMatrix::identity(antennas));
                }
            }
        }
        debug_assert_eq!(t, codeword.block_length());
        Ok(RelayCode {
            scheme,
            codeword,
            column_weights,
            antenna_mixing,
        })
    }

    pub fn scheme(&self) -> StcScheme {
        self.scheme
    }

    pub fn codeword(&self) -> &DispersionSet {
        &self.codeword
    }

    pub fn block_length(&self) -> usize {
        self.codeword.block_length()
    }

    pub fn n_relays(&self) -> usize {
        self.column_weights.len()
    }

    /// `T×2T` map from the relay's augmented received vector `[x; conj(x)]`
    /// to the sequence a single-antenna relay `k` transmits.
    pub fn single_antenna_map(&self, k: usize) -> Result<CMatrix> {
        let w = self
            .column_weights
            .get(k)
            .ok_or_else(|| Error::Shape(format!("relay {k} out of range")))?;
        self.codeword.combined_map(w)
    }

    /// Weights relay `k` puts on the codeword columns.
    pub fn column_weights(&self, k: usize) -> Result<&[C64]> {
        self.column_weights
            .get(k)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Shape(format!("relay {k} out of range")))
    }

    /// Column `j` of relay `k`'s antenna mixing matrix.
    pub fn antenna_weights(&self, k: usize, j: usize) -> Result<Vec<C64>> {
        let m = self
            .antenna_mixing
            .get(k)
            .ok_or_else(|| Error::Shape(format!("relay {k} out of range")))?;
        if j >= m.cols() {
            return Err(Error::Shape(format!("antenna {j} out of range")));
        }
        Ok(m.column(j))
    }
}

/// The relay's codeword built from its noisy received samples.
pub fn relay_reencode(x: &[C64], code: &RelayCode) -> Result<CMatrix> {
    encode_source(x, code.codeword())
}
