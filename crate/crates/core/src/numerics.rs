//! Small dense complex matrices and reproducible random streams.
//!
//! Every matrix in the simulator is at most a few dozen entries on a side, so
//! [`CMatrix`] is a plain row-major `Vec<Complex64>` with the handful of
//! operations the system model needs. Random draws go through [`RngStream`],
//! a ChaCha stream keyed by `(seed, stream_id)` so each Monte Carlo trial owns
//! an independent, replayable sequence.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        CMatrix {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = f(r, c);
            }
        }
        m
    }

    /// Builds a matrix from row-major data.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(CMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[C64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn column_vector(v: &[C64]) -> Result<Self> {
        Self::from_vec(v.len(), 1, v.to_vec())
    }

    pub fn diagonal(d: &[C64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn set_column(&mut self, c: usize, v: &[C64]) {
        assert_eq!(v.len(), self.rows);
        for (r, &x) in v.iter().enumerate() {
            self[(r, c)] = x;
        }
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn matmul(&self, other: &CMatrix) -> Result<CMatrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == ZERO {
                    continue;
                }
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other.data[k * other.cols + c];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[C64]) -> Result<Vec<C64>> {
        if self.cols != v.len() {
            return Err(Error::Shape(format!(
                "cannot apply {}x{} matrix to a length-{} vector",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn conj(&self) -> CMatrix {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn add(&self, other: &CMatrix) -> Result<CMatrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &CMatrix) -> Result<CMatrix> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &CMatrix, f: impl Fn(C64, C64) -> C64) -> Result<CMatrix> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "{}x{} and {}x{} do not conform",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn scale(&self, k: C64) -> CMatrix {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * k).collect(),
        }
    }

    pub fn scale_real(&self, k: f64) -> CMatrix {
        self.scale(C64::new(k, 0.0))
    }

    /// `self += k * other`, in place.
    pub fn axpy(&mut self, k: C64, other: &CMatrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape("axpy operands do not conform".into()));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
        Ok(())
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Places `block` with its top-left corner at `(row, col)`.
    pub fn set_block(&mut self, row: usize, col: usize, block: &CMatrix) {
        assert!(row + block.rows <= self.rows && col + block.cols <= self.cols);
        for r in 0..block.rows {
            for c in 0..block.cols {
                self[(row + r, col + c)] = block[(r, c)];
            }
        }
    }

    pub fn block(&self, row: usize, col: usize, rows: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(rows, cols, |r, c| self[(row + r, col + c)])
    }

    /// Largest entry-wise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        assert!(r < self.rows && c < self.cols, "index ({r},{c}) out of bounds");
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        assert!(r < self.rows && c < self.cols, "index ({r},{c}) out of bounds");
        &mut self.data[r * self.cols + c]
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, " ")?;
            for z in self.row(r) {
                write!(f, " {:+.4}{:+.4}i", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Σ|m_ij|².
pub fn frobenius_norm_sq(m: &CMatrix) -> f64 {
    norm_sq(m.as_slice())
}

pub fn norm_sq(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `⟨a, b⟩ = Σ conj(a_i) b_i`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Orthonormalises the columns of a square matrix in place (modified
/// Gram-Schmidt). Fails if the columns are numerically dependent.
pub fn orthonormalize_columns(m: &mut CMatrix) -> Result<()> {
    let n = m.cols();
    for c in 0..n {
        let mut v = m.column(c);
        for p in 0..c {
            let q = m.column(p);
            let proj = inner(&q, &v);
            for (x, y) in v.iter_mut().zip(&q) {
                *x -= proj * y;
            }
        }
        let norm = norm_sq(&v).sqrt();
        if norm < 1e-12 {
            return Err(Error::InvalidParameter("columns are linearly dependent".into()));
        }
        let v: Vec<C64> = v.iter().map(|x| x / norm).collect();
        m.set_column(c, &v);
    }
    Ok(())
}

/// Independent random stream keyed by `(seed, stream_id)`.
///
/// Equal keys replay the same sequence; distinct stream ids select disjoint
/// ChaCha keystreams.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// One circularly-symmetric complex Gaussian sample with the given variance.
    pub fn complex_normal(&mut self, variance: f64) -> C64 {
        let sd = (variance / 2.0).sqrt();
        let re: f64 = StandardNormal.sample(&mut self.inner);
        let im: f64 = StandardNormal.sample(&mut self.inner);
        C64::new(sd * re, sd * im)
    }

    pub fn complex_normal_vec(&mut self, len: usize, variance: f64) -> Vec<C64> {
        (0..len).map(|_| self.complex_normal(variance)).collect()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// i.i.d. circularly-symmetric complex Gaussian entries, each of the given
/// variance (real and imaginary parts carry half each).
pub fn complex_gaussian(rng: &mut RngStream, rows: usize, cols: usize, variance: f64) -> Result<CMatrix> {
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "variance must be positive, got {variance}"
        )));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::Shape("matrix dimensions must be positive".into()));
    }
    CMatrix::from_vec(rows, cols, rng.complex_normal_vec(rows * cols, variance))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn frobenius_examples() {
        assert_eq!(frobenius_norm_sq(&CMatrix::identity(2)), 2.0);
        assert_eq!(frobenius_norm_sq(&CMatrix::zeros(3, 3)), 0.0);
        let m = CMatrix::from_rows(&[&[c(1.0, 1.0), ZERO], &[ZERO, c(1.0, -1.0)]]).unwrap();
        assert!((frobenius_norm_sq(&m) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = RngStream::new(7, 0);
        let m = complex_gaussian(&mut rng, 1000, 1000, 1.0).unwrap();
        let n = 1e6;
        let mean: C64 = m.as_slice().iter().sum::<C64>() / n;
        let var = frobenius_norm_sq(&m) / n;
        assert!(mean.norm() < 0.01, "mean {mean}");
        assert!((0.99..=1.01).contains(&var), "variance {var}");
        let re_var = m.as_slice().iter().map(|z| z.re * z.re).sum::<f64>() / n;
        assert!((re_var - 0.5).abs() < 0.01);
    }

    #[test]
    fn gaussian_rejects_bad_variance() {
        let mut rng = RngStream::new(1, 1);
        assert!(matches!(
            complex_gaussian(&mut rng, 2, 2, 0.0),
            Err(Error::InvalidParameter(_))
        ));
        assert!(complex_gaussian(&mut rng, 2, 2, -1.0).is_err());
    }

    #[test]
    fn streams_replay_and_differ() {
        let a = complex_gaussian(&mut RngStream::new(42, 3), 4, 4, 1.0).unwrap();
        let b = complex_gaussian(&mut RngStream::new(42, 3), 4, 4, 1.0).unwrap();
        let other = complex_gaussian(&mut RngStream::new(42, 4), 4, 4, 1.0).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        assert_ne!(a.as_slice(), other.as_slice());
    }

    #[test]
    fn identity_and_adjoint_rules() {
        let mut rng = RngStream::new(3, 0);
        let a = complex_gaussian(&mut rng, 4, 4, 1.0).unwrap();
        assert!(a.matmul(&CMatrix::identity(4)).unwrap().max_abs_diff(&a) < 1e-15);
        let a = complex_gaussian(&mut rng, 3, 2, 1.0).unwrap();
        let b = complex_gaussian(&mut rng, 2, 4, 1.0).unwrap();
        let lhs = a.matmul(&b).unwrap().hermitian();
        let rhs = b.hermitian().matmul(&a.hermitian()).unwrap();
        assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        assert_eq!(a.hermitian().hermitian(), a);
    }

    #[test]
    fn shape_errors() {
        let a = CMatrix::zeros(2, 3);
        let b = CMatrix::zeros(4, 2);
        assert!(matches!(a.matmul(&b), Err(Error::Shape(_))));
        assert!(a.add(&b).is_err());
        assert!(a.matvec(&[ONE; 2]).is_err());
        assert!(CMatrix::from_vec(2, 2, vec![ONE; 3]).is_err());
    }

    #[test]
    fn unitary_preserves_frobenius() {
        let mut rng = RngStream::new(11, 2);
        for _ in 0..20 {
            let mut u = complex_gaussian(&mut rng, 4, 4, 1.0).unwrap();
            orthonormalize_columns(&mut u).unwrap();
            let a = complex_gaussian(&mut rng, 4, 3, 1.0).unwrap();
            let ua = u.matmul(&a).unwrap();
            assert!((frobenius_norm_sq(&ua) - frobenius_norm_sq(&a)).abs() <= 1e-10);
        }
    }

    proptest::proptest! {
        #[test]
        fn hermitian_reverses_products(seed in 0u64..10_000, n in 1usize..5, m in 1usize..5, k in 1usize..5) {
            let mut rng = RngStream::new(seed, 0);
            let a = complex_gaussian(&mut rng, n, m, 1.0).unwrap();
            let b = complex_gaussian(&mut rng, m, k, 1.0).unwrap();
            let lhs = a.matmul(&b).unwrap().hermitian();
            let rhs = b.hermitian().matmul(&a.hermitian()).unwrap();
            proptest::prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
            let v = rng.complex_normal_vec(m, 1.0);
            let col = a.matmul(&CMatrix::column_vector(&v).unwrap()).unwrap();
            proptest::prop_assert!(max_diff(&a.matvec(&v).unwrap(), col.as_slice()) < 1e-12);
        }
    }

    fn max_diff(a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }
}
