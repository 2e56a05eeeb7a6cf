//! The coefficient triple `(b, B, Q)` and the built-in instances.
//!
//! Coefficients accumulate `scale · value` into a caller buffer so that
//! truncation and sums compose without per-step allocation.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::analysis::spectrum::norm;
use crate::analysis::ModulusFunction;
use crate::segment::SegmentView;

/// The Markovian drift `b(t, x)`.
pub trait Drift: Send + Sync {
    /// `out += scale · b(t, x)`
    fn accumulate(&self, t: f64, x: &[f64], scale: f64, out: &mut [f64]);
    /// Declared `sup |b|`, if bounded.
    fn sup_bound(&self) -> Option<f64> {
        None
    }
    /// Declared modulus of continuity.
    fn modulus(&self) -> Option<ModulusFunction> {
        None
    }
}

/// The delay drift `B(t, ξ)`.
pub trait DelayDrift: Send + Sync {
    /// `out += scale · B(t, ξ)`
    fn accumulate(&self, t: f64, seg: &SegmentView<'_>, scale: f64, out: &mut [f64]);
    /// Declared Lipschitz constant in `‖·‖_∞`.
    fn lipschitz(&self) -> f64;
    fn sup_bound(&self) -> Option<f64> {
        None
    }
}

/// Noise coefficient in the split form `Q(t,x) = σ(t,x)·diag(q) + R(t,x)`.
///
/// The diagonal part is integrated with the exact Ornstein–Uhlenbeck
/// variance, the remainder with the frozen exponential-Euler increment.
pub trait NoiseCoefficient: Send + Sync {
    fn diagonal(&self) -> &[f64];
    fn scale(&self, _t: f64, _x: &[f64]) -> f64 {
        1.0
    }
    /// `out += scale · R(t, x)`; returns `false` when `R` vanishes identically.
    fn remainder(&self, _t: f64, _x: &[f64], _scale: f64, _out: &mut DMatrix<f64>) -> bool {
        false
    }
    /// Declared `sup ‖Q‖`.
    fn sup_bound(&self) -> Option<f64> {
        Some(self.diagonal().iter().fold(0.0_f64, |m, q| m.max(q.abs())))
    }
}

pub struct ZeroDrift;

impl Drift for ZeroDrift {
    fn accumulate(&self, _: f64, _: &[f64], _: f64, _: &mut [f64]) {}
    fn sup_bound(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// `b(x) = v · φ(min(|P(x − x₀)|, 1))`, where `P` keeps the first `active` modes.
///
/// Its modulus is `|v|·φ` because `φ` is concave, hence subadditive.
pub struct DiniDrift {
    pub direction: Vec<f64>,
    pub center: Vec<f64>,
    pub active: usize,
    pub phi: ModulusFunction,
}

impl DiniDrift {
    pub fn distance(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.center).take(self.active).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt()
    }
}

impl Drift for DiniDrift {
    fn accumulate(&self, _: f64, x: &[f64], scale: f64, out: &mut [f64]) {
        let mag = scale * self.phi.eval(self.distance(x).min(1.0));
        for (o, v) in out.iter_mut().zip(&self.direction) {
            *o += mag * v;
        }
    }
    fn sup_bound(&self) -> Option<f64> {
        Some(norm(&self.direction) * self.phi.eval(1.0))
    }
    fn modulus(&self) -> Option<ModulusFunction> {
        Some(self.phi.scaled(norm(&self.direction)))
    }
}

/// `b ≡ v`
pub struct ConstantDrift {
    pub value: Vec<f64>,
}

impl Drift for ConstantDrift {
    fn accumulate(&self, _: f64, _: &[f64], scale: f64, out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(&self.value) {
            *o += scale * v;
        }
    }
    fn sup_bound(&self) -> Option<f64> {
        Some(norm(&self.value))
    }
}

/// `b(x) = −κx`
pub struct LinearDrift {
    pub kappa: f64,
}

impl Drift for LinearDrift {
    fn accumulate(&self, _: f64, x: &[f64], scale: f64, out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o -= scale * self.kappa * v;
        }
    }
}

/// `b(x) = c |x|² x`, superlinear and outward for `c > 0`.
pub struct CubicDrift {
    pub coefficient: f64,
}

impl Drift for CubicDrift {
    fn accumulate(&self, _: f64, x: &[f64], scale: f64, out: &mut [f64]) {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        for (o, v) in out.iter_mut().zip(x) {
            *o += scale * self.coefficient * r2 * v;
        }
    }
}

pub struct SumDrift(pub Vec<Arc<dyn Drift>>);

impl Drift for SumDrift {
    fn accumulate(&self, t: f64, x: &[f64], scale: f64, out: &mut [f64]) {
        for d in &self.0 {
            d.accumulate(t, x, scale, out);
        }
    }
    fn sup_bound(&self) -> Option<f64> {
        self.0.iter().map(|d| d.sup_bound()).sum()
    }
}

pub struct ZeroDelay;

impl DelayDrift for ZeroDelay {
    fn accumulate(&self, _: f64, _: &SegmentView<'_>, _: f64, _: &mut [f64]) {}
    fn lipschitz(&self) -> f64 {
        0.0
    }
    fn sup_bound(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// `B(ξ) = β·ξ(−r)`
pub struct LinearDelay {
    pub beta: f64,
}

impl DelayDrift for LinearDelay {
    fn accumulate(&self, _: f64, seg: &SegmentView<'_>, scale: f64, out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(seg.first()) {
            *o += scale * self.beta * v;
        }
    }
    fn lipschitz(&self) -> f64 {
        self.beta.abs()
    }
}

/// `B(ξ) = β·tanh(‖ξ‖_∞)·v`, bounded by `|β||v|`.
pub struct TanhDelay {
    pub beta: f64,
    pub direction: Vec<f64>,
}

impl DelayDrift for TanhDelay {
    fn accumulate(&self, _: f64, seg: &SegmentView<'_>, scale: f64, out: &mut [f64]) {
        let mag = scale * self.beta * seg.sup_norm().tanh();
        for (o, v) in out.iter_mut().zip(&self.direction) {
            *o += mag * v;
        }
    }
    fn lipschitz(&self) -> f64 {
        self.beta.abs() * norm(&self.direction)
    }
    fn sup_bound(&self) -> Option<f64> {
        Some(self.beta.abs() * norm(&self.direction))
    }
}

/// Constant diagonal noise `Q = diag(q)`.
pub struct DiagonalNoise {
    pub q: Vec<f64>,
}

impl NoiseCoefficient for DiagonalNoise {
    fn diagonal(&self) -> &[f64] {
        &self.q
    }
}

/// `Q(x) = diag(q_i (1 + κ sin x_{(i+1) mod n}))`, `|κ| < 1`.
///
/// Each mode is driven through a different coordinate, so the noise fields do
/// not commute and the scheme has strong order 1/2.
pub struct MultiplicativeNoise {
    pub q: Vec<f64>,
    pub kappa: f64,
}

impl NoiseCoefficient for MultiplicativeNoise {
    fn diagonal(&self) -> &[f64] {
        &self.q
    }
    fn remainder(&self, _: f64, x: &[f64], scale: f64, out: &mut DMatrix<f64>) -> bool {
        let n = self.q.len();
        for i in 0..n {
            out[(i, i)] += scale * self.q[i] * self.kappa * x[(i + 1) % n].sin();
        }
        true
    }
    fn sup_bound(&self) -> Option<f64> {
        Some(self.q.iter().fold(0.0_f64, |m, q| m.max(q.abs())) * (1.0 + self.kappa.abs()))
    }
}

/// Smooth cutoff: 1 on `[0,1]`, 0 on `[2,∞)`, `f(2−u)/(f(2−u)+f(u−1))` with `f(x) = e^{−1/x}`.
pub fn cutoff(u: f64) -> f64 {
    let f = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    if u <= 1.0 {
        1.0
    } else if u >= 2.0 {
        0.0
    } else {
        let a = f(2.0 - u);
        a / (a + f(u - 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationScheme {
    pub level: f64,
}

impl TruncationScheme {
    pub fn psi(&self, u: f64) -> f64 {
        cutoff(u)
    }
}

struct TruncatedDrift {
    inner: Arc<dyn Drift>,
    m: f64,
}

impl Drift for TruncatedDrift {
    fn accumulate(&self, t: f64, x: &[f64], scale: f64, out: &mut [f64]) {
        let w = cutoff(norm(x) / self.m);
        if w > 0.0 {
            self.inner.accumulate(t.min(self.m), x, scale * w, out);
        }
    }
    fn sup_bound(&self) -> Option<f64> {
        self.inner.sup_bound()
    }
    fn modulus(&self) -> Option<ModulusFunction> {
        self.inner.modulus()
    }
}

struct TruncatedDelay {
    inner: Arc<dyn DelayDrift>,
    m: f64,
}

impl DelayDrift for TruncatedDelay {
    fn accumulate(&self, t: f64, seg: &SegmentView<'_>, scale: f64, out: &mut [f64]) {
        let w = cutoff(seg.sup_norm() / self.m);
        if w > 0.0 {
            self.inner.accumulate(t.min(self.m), seg, scale * w, out);
        }
    }
    fn lipschitz(&self) -> f64 {
        self.inner.lipschitz()
    }
    fn sup_bound(&self) -> Option<f64> {
        self.inner.sup_bound()
    }
}

struct TruncatedNoise {
    inner: Arc<dyn NoiseCoefficient>,
    m: f64,
}

impl NoiseCoefficient for TruncatedNoise {
    fn diagonal(&self) -> &[f64] {
        self.inner.diagonal()
    }
    fn scale(&self, t: f64, x: &[f64]) -> f64 {
        cutoff(norm(x) / self.m) * self.inner.scale(t.min(self.m), x)
    }
    fn remainder(&self, t: f64, x: &[f64], scale: f64, out: &mut DMatrix<f64>) -> bool {
        let w = cutoff(norm(x) / self.m);
        w > 0.0 && self.inner.remainder(t.min(self.m), x, scale * w, out)
    }
    fn sup_bound(&self) -> Option<f64> {
        self.inner.sup_bound()
    }
}

/// `(b, B, Q)` on `n` modes with `m = n` noise components.
#[derive(Clone)]
pub struct CoefficientSet {
    pub dim: usize,
    pub b: Arc<dyn Drift>,
    pub delay: Arc<dyn DelayDrift>,
    pub q: Arc<dyn NoiseCoefficient>,
}

impl CoefficientSet {
    pub fn new(dim: usize, b: Arc<dyn Drift>, delay: Arc<dyn DelayDrift>, q: Arc<dyn NoiseCoefficient>) -> Self {
        Self { dim, b, delay, q }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(dim, Arc::new(ZeroDrift), Arc::new(ZeroDelay), Arc::new(DiagonalNoise { q: vec![0.0; dim] }))
    }

    pub fn noise_dim(&self) -> usize {
        self.dim
    }
}

/// `b^[m](t,z) = b(t∧m, z)ψ(|z|/m)`, `B^[m](t,ξ) = B(t∧m, ξ)ψ(‖ξ‖_∞/m)`, `Q^[m](t,z) = Q(t∧m, z)ψ(|z|/m)`.
pub fn truncate_coeffs(coeffs: &CoefficientSet, scheme: TruncationScheme) -> CoefficientSet {
    let m = scheme.level;
    CoefficientSet {
        dim: coeffs.dim,
        b: Arc::new(TruncatedDrift { inner: coeffs.b.clone(), m }),
        delay: Arc::new(TruncatedDelay { inner: coeffs.delay.clone(), m }),
        q: Arc::new(TruncatedNoise { inner: coeffs.q.clone(), m }),
    }
}
