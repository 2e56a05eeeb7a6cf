//! Eigenvalues of `−A` and the diagonal operators built from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed-form generator `i ↦ λ_i` (1-based index) used beyond the stored modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GrowthLaw {
    /// `λ_i = c · i^γ`
    PowerLaw { c: f64, gamma: f64 },
}

impl GrowthLaw {
    pub fn eval(&self, i: f64) -> f64 {
        match *self {
            GrowthLaw::PowerLaw { c, gamma } => c * i.powf(gamma),
        }
    }

    /// Real index at which the law reaches `lambda`.
    pub fn inverse(&self, lambda: f64) -> f64 {
        match *self {
            GrowthLaw::PowerLaw { c, gamma } => (lambda / c).powf(1.0 / gamma),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    growth_law: Option<GrowthLaw>,
    trace_exponent: f64,
}

impl Spectrum {
    /// `λ_i = c·i^γ` for `i = 1..=n`.
    pub fn power_law(c: f64, gamma: f64, n: usize, trace_exponent: f64) -> Result<Self> {
        if !(c > 0.0) || !(gamma > 0.0) {
            return Err(Error::input(format!("power law needs c > 0 and γ > 0, got c = {c}, γ = {gamma}")));
        }
        let law = GrowthLaw::PowerLaw { c, gamma };
        let eigenvalues = (1..=n).map(|i| law.eval(i as f64)).collect();
        Self::new(eigenvalues, Some(law), trace_exponent)
    }

    pub fn new(eigenvalues: Vec<f64>, growth_law: Option<GrowthLaw>, trace_exponent: f64) -> Result<Self> {
        if !(trace_exponent > 0.0 && trace_exponent < 1.0) {
            return Err(Error::input(format!("trace exponent must lie in (0,1), got {trace_exponent}")));
        }
        if eigenvalues.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::input("eigenvalues must be finite and strictly positive"));
        }
        if eigenvalues.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::input("eigenvalues must be non-decreasing"));
        }
        if let Some(law) = growth_law {
            for (k, &l) in eigenvalues.iter().enumerate() {
                let g = law.eval((k + 1) as f64);
                if (g - l).abs() > 1e-9 * l.max(1.0) {
                    return Err(Error::input(format!("stored λ_{} = {l} disagrees with the growth law ({g})", k + 1)));
                }
            }
        }
        Ok(Self { eigenvalues, growth_law, trace_exponent })
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn growth_law(&self) -> Option<GrowthLaw> {
        self.growth_law
    }

    pub fn trace_exponent(&self) -> f64 {
        self.trace_exponent
    }

    /// Eigenvalue with 1-based index `i`, from storage or the growth law.
    pub fn lambda(&self, i: usize) -> Option<f64> {
        if i == 0 {
            return None;
        }
        self.eigenvalues
            .get(i - 1)
            .copied()
            .or_else(|| self.growth_law.map(|g| g.eval(i as f64)))
    }

    /// The first `n` modes as a new spectrum (same growth law).
    pub fn truncated(&self, n: usize) -> Result<Self> {
        let eig = (1..=n)
            .map(|i| self.lambda(i).ok_or_else(|| Error::input(format!("spectrum has no mode {i}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(eig, self.growth_law, self.trace_exponent)
    }

    /// Stable hash of the stored eigenvalues, used to tie persisted fields to a spectrum.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for l in &self.eigenvalues {
            h.update(l.to_le_bytes());
        }
        h.update(self.trace_exponent.to_le_bytes());
        hex::encode(h.finalize())
    }
}

/// `(e^{−λ_i t} x_i)_i`.
pub fn semigroup_apply(spec: &Spectrum, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    if !(t >= 0.0) {
        return Err(Error::input(format!("semigroup time must be non-negative, got {t}")));
    }
    if x.len() > spec.n_modes() {
        return Err(Error::input(format!("vector has {} modes, spectrum stores {}", x.len(), spec.n_modes())));
    }
    Ok(x.iter().zip(spec.eigenvalues()).map(|(&xi, &l)| (-l * t).exp() * xi).collect())
}

/// `π_n`: zero every component with index above `n`.
pub fn galerkin_project(x: &[f64], n: usize) -> Vec<f64> {
    x.iter().enumerate().map(|(i, &v)| if i < n { v } else { 0.0 }).collect()
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
