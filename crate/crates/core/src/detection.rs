//! Coherent ML detection over the windowed receive vector.

use crate::channel::augment;
use crate::error::{Error, Result};
use crate::modem::SymbolVector;
use crate::numerics::{norm_sq, CMatrix, C64, ZERO};

/// One active relay path: `ρ Φ H` acting on `[s; conj(s)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelTerm {
    pub gain: f64,
    pub phi: CMatrix,
    pub channel: CMatrix,
}

#[derive(Clone, Debug)]
pub struct MLProblem<'a> {
    r: Vec<C64>,
    terms: Vec<ModelTerm>,
    prefactor: f64,
    direct: Option<CMatrix>,
    codebook: &'a [SymbolVector],
}

impl<'a> MLProblem<'a> {
    pub fn new(
        r: Vec<C64>,
        terms: Vec<ModelTerm>,
        prefactor: f64,
        direct: Option<CMatrix>,
        codebook: &'a [SymbolVector],
    ) -> Result<Self> {
        let direct_len = direct.as_ref().map_or(0, CMatrix::rows);
        if r.len() < direct_len {
            return Err(Error::Shape("receive vector shorter than the direct-link segment".into()));
        }
        let window = r.len() - direct_len;
        let width = terms
            .first()
            .map(|t| t.channel.cols())
            .or_else(|| direct.as_ref().map(CMatrix::cols));
        for t in &terms {
            if t.phi.shape() != (window, window) || t.channel.rows() != window || Some(t.channel.cols()) != width {
                return Err(Error::Shape(format!(
                    "model term Φ {:?}, H {:?} against a window of {window}",
                    t.phi.shape(),
                    t.channel.shape()
                )));
            }
        }
        if let (Some(d), Some(w)) = (&direct, width) {
            if d.cols() != w {
                return Err(Error::Shape("direct map width differs from the relay maps".into()));
            }
        }
        if let (Some(w), Some(s)) = (width, codebook.first()) {
            if 2 * s.len() != w {
                return Err(Error::Shape(format!("codeword length {} for model width {w}", s.len())));
            }
        }
        Ok(MLProblem {
            r,
            terms,
            prefactor,
            direct,
            codebook,
        })
    }

    pub fn r(&self) -> &[C64] {
        &self.r
    }

    pub fn terms(&self) -> &[ModelTerm] {
        &self.terms
    }

    pub fn prefactor(&self) -> f64 {
        self.prefactor
    }

    pub fn direct(&self) -> Option<&CMatrix> {
        self.direct.as_ref()
    }

    pub fn codebook(&self) -> &[SymbolVector] {
        self.codebook
    }

    fn window_len(&self) -> usize {
        self.r.len() - self.direct.as_ref().map_or(0, CMatrix::rows)
    }

    /// `c Σ ρ Φ H` stacked over the direct map: the full linear map from
    /// `[s; conj(s)]` to the noiseless receive vector.
    pub fn effective_map(&self, width: usize) -> Result<CMatrix> {
        let mut m = CMatrix::zeros(self.r.len(), width);
        let mut window = CMatrix::zeros(self.window_len().max(1), width);
        for t in &self.terms {
            window.axpy(C64::new(t.gain * self.prefactor, 0.0), &t.phi.matmul(&t.channel)?)?;
        }
        if self.window_len() > 0 {
            m.set_block(0, 0, &window.block(0, 0, self.window_len(), width));
        }
        if let Some(d) = &self.direct {
            m.set_block(self.window_len(), 0, &d.scale_real(self.prefactor));
        }
        Ok(m)
    }
}

/// `r̂ = c Σ ρ Φ H s̄` (plus the direct segment).
pub fn reconstruct_signal(p: &MLProblem<'_>, s: &[C64]) -> Result<Vec<C64>> {
    let s_aug = augment(s);
    let mut out = vec![ZERO; p.r.len()];
    let window = p.window_len();
    for t in &p.terms {
        let v = t.phi.matvec(&t.channel.matvec(&s_aug)?)?;
        for (acc, x) in out[..window].iter_mut().zip(v) {
            *acc += x * (t.gain * p.prefactor);
        }
    }
    if let Some(d) = &p.direct {
        for (acc, x) in out[window..].iter_mut().zip(d.matvec(&s_aug)?) {
            *acc += x * p.prefactor;
        }
    }
    Ok(out)
}

/// Minimum-distance search; exact ties go to the lowest codebook index.
pub fn ml_detect(p: &MLProblem<'_>) -> Result<(SymbolVector, f64)> {
    let (idx, metric) = ml_detect_index(p)?;
    Ok((p.codebook[idx].clone(), metric))
}

/// As [`ml_detect`], returning the codebook index.
pub fn ml_detect_index(p: &MLProblem<'_>) -> Result<(usize, f64)> {
    let first = p
        .codebook
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty codebook".into()))?;
    let map = p.effective_map(2 * first.len())?;
    let mut best = (0, f64::INFINITY);
    let mut buf = vec![ZERO; p.r.len()];
    for (i, s) in p.codebook.iter().enumerate() {
        let s_aug = augment(s);
        for (row, out) in buf.iter_mut().enumerate() {
            *out = map.row(row).iter().zip(&s_aug).map(|(a, b)| a * b).sum();
        }
        let metric: f64 = p.r.iter().zip(&buf).map(|(a, b)| (a - b).norm_sqr()).sum();
        if metric < best.1 {
            best = (i, metric);
        }
    }
    Ok(best)
}

/// Brute force: rebuilds every path's output from scratch for each candidate.
pub fn exhaustive_oracle(p: &MLProblem<'_>) -> Result<(SymbolVector, f64)> {
    if p.codebook.is_empty() {
        return Err(Error::InvalidParameter("empty codebook".into()));
    }
    let window = p.window_len();
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in p.codebook.iter().enumerate() {
        let t_len = s.len();
        let mut x = vec![ZERO; 2 * t_len];
        for n in 0..t_len {
            x[n] = s[n];
            x[t_len + n] = s[n].conj();
        }
        let mut model = vec![ZERO; p.r.len()];
        for term in &p.terms {
            let mut hs = vec![ZERO; term.channel.rows()];
            for a in 0..term.channel.rows() {
                for b in 0..term.channel.cols() {
                    hs[a] += term.channel[(a, b)] * x[b];
                }
            }
            for a in 0..window {
                let mut acc = ZERO;
                for b in 0..window {
                    acc += term.phi[(a, b)] * hs[b];
                }
                model[a] += acc * term.gain * p.prefactor;
            }
        }
        if let Some(d) = &p.direct {
            for a in 0..d.rows() {
                for b in 0..d.cols() {
                    model[window + a] += d[(a, b)] * x[b] * p.prefactor;
                }
            }
        }
        let mut metric = 0.0;
        for a in 0..p.r.len() {
            let e = p.r[a] - model[a];
            metric += e.re * e.re + e.im * e.im;
        }
        match best {
            Some((_, m)) if metric >= m => {}
            _ => best = Some((i, metric)),
        }
    }
    let (i, m) = best.expect("non-empty codebook");
    Ok((p.codebook[i].clone(), m))
}

/// `‖r − r̂‖²` for candidate `s`.
pub fn residual_norm_sq(p: &MLProblem<'_>, s: &[C64]) -> Result<f64> {
    let rhat = reconstruct_signal(p, s)?;
    let e: Vec<C64> = p.r.iter().zip(&rhat).map(|(a, b)| a - b).collect();
    Ok(norm_sq(&e))
}
