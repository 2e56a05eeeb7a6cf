//! The reference Ornstein–Uhlenbeck semigroup `P⁰_{s,t}` of `dZ = AZ dt + diag(q) dW`.
//!
//! `P⁰_{s,t}f(x) = E f(e^{A(t−s)}x + σ ⊙ G)` with `σ_i² = q_i²(1 − e^{−2λ_i(t−s)})/(2λ_i)`.
//! Up to three coordinates use a tensor Gauss–Hermite rule; beyond that a
//! fixed-seed antithetic Monte Carlo rule. Derivatives differentiate the
//! Gaussian kernel: `∂_j P⁰f = e^{−λ_jτ} E[f·G_j]/σ_j` and
//! `∂_j∂_k P⁰f = e^{−(λ_j+λ_k)τ} E[f·(G_jG_k − δ_jk)]/(σ_jσ_k)`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::analysis::{GaussHermite, Spectrum};
use crate::error::{Error, Result};

/// Largest dimension handled by tensor quadrature.
pub const MAX_TENSOR_DIM: usize = 3;
/// Sample pairs of the Monte Carlo fallback.
pub const MC_PAIRS: usize = 20_000;
const MC_SEED: u64 = 0x5eed_0f00;

#[derive(Debug, Clone)]
pub struct ReferenceSemigroup {
    pub spec: Spectrum,
    pub q_diag: Vec<f64>,
    pub quadrature_order: usize,
}

/// Nodes (standard normal coordinates) and weights of the rule in use.
struct Rule {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl ReferenceSemigroup {
    pub fn new(spec: Spectrum, q_diag: Vec<f64>, quadrature_order: usize) -> Result<Self> {
        if q_diag.is_empty() || q_diag.len() > spec.n_modes() {
            return Err(Error::input("reference noise needs 1..=n_modes amplitudes"));
        }
        if q_diag.iter().any(|q| !(*q > 0.0)) {
            return Err(Error::input("reference noise amplitudes must be positive"));
        }
        if quadrature_order == 0 {
            return Err(Error::input("quadrature order must be positive"));
        }
        Ok(Self { spec, q_diag, quadrature_order })
    }

    pub fn dim(&self) -> usize {
        self.q_diag.len()
    }

    /// `(e^{−λ_iτ}, σ_i)` for each coordinate.
    pub fn transition(&self, tau: f64) -> Vec<(f64, f64)> {
        self.q_diag
            .iter()
            .zip(self.spec.eigenvalues())
            .map(|(q, l)| ((-l * tau).exp(), q * (-(-2.0 * l * tau).exp_m1() / (2.0 * l)).sqrt()))
            .collect()
    }

    fn rule(&self) -> Rule {
        let d = self.dim();
        if d <= MAX_TENSOR_DIM {
            let gh = GaussHermite::new(self.quadrature_order);
            let m = gh.nodes.len();
            let total = m.pow(d as u32);
            let mut points = Vec::with_capacity(total);
            let mut weights = Vec::with_capacity(total);
            for flat in 0..total {
                let mut rem = flat;
                let mut p = Vec::with_capacity(d);
                let mut w = 1.0;
                for _ in 0..d {
                    p.push(gh.nodes[rem % m]);
                    w *= gh.weights[rem % m];
                    rem /= m;
                }
                points.push(p);
                weights.push(w);
            }
            Rule { points, weights }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(MC_SEED);
            let mut points = Vec::with_capacity(2 * MC_PAIRS);
            for _ in 0..MC_PAIRS {
                let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                points.push(g.iter().map(|v| -v).collect());
                points.push(g);
            }
            let w = 1.0 / points.len() as f64;
            Rule { weights: vec![w; points.len()], points }
        }
    }

    fn check(&self, s: f64, t: f64, x: &[f64]) -> Result<f64> {
        if !(t > s) {
            return Err(Error::input(format!("P⁰_(s,t) needs t > s, got s = {s}, t = {t}")));
        }
        if x.len() != self.dim() {
            return Err(Error::input(format!("point has {} coordinates, semigroup has {}", x.len(), self.dim())));
        }
        Ok(t - s)
    }

    /// `P⁰_{s,t}f(x)` for vector-valued `f`.
    pub fn ou_apply(&self, f: impl Fn(&[f64]) -> Vec<f64>, s: f64, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let tau = self.check(s, t, x)?;
        let tr = self.transition(tau);
        let rule = self.rule();
        let mut acc: Vec<f64> = Vec::new();
        let mut y = vec![0.0; x.len()];
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            for i in 0..x.len() {
                y[i] = tr[i].0 * x[i] + tr[i].1 * p[i];
            }
            let v = f(&y);
            if acc.is_empty() {
                acc = vec![0.0; v.len()];
            }
            for (a, vi) in acc.iter_mut().zip(&v) {
                *a += w * vi;
            }
        }
        Ok(acc)
    }

    /// `∇^k P⁰_{s,t}f(x)` for `k ∈ {1, 2}`.
    ///
    /// Order 1 returns a `components × d` matrix; order 2 returns `components × d²`
    /// with column `j·d + k` holding `∂_j∂_k`.
    pub fn ou_gradient(&self, f: impl Fn(&[f64]) -> Vec<f64>, s: f64, t: f64, x: &[f64], order: usize) -> Result<DMatrix<f64>> {
        let tau = self.check(s, t, x)?;
        if !(1..=2).contains(&order) {
            return Err(Error::input("gradient order must be 1 or 2"));
        }
        let d = x.len();
        let tr = self.transition(tau);
        let rule = self.rule();
        let cols = if order == 1 { d } else { d * d };
        let mut acc: Option<DMatrix<f64>> = None;
        let mut y = vec![0.0; d];
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            for i in 0..d {
                y[i] = tr[i].0 * x[i] + tr[i].1 * p[i];
            }
            let v = f(&y);
            let m = acc.get_or_insert_with(|| DMatrix::zeros(v.len(), cols));
            for j in 0..d {
                let kj = tr[j].0 / tr[j].1;
                if order == 1 {
                    for (c, vc) in v.iter().enumerate() {
                        m[(c, j)] += w * vc * p[j] * kj;
                    }
                } else {
                    for k in 0..d {
                        let kk = tr[k].0 / tr[k].1;
                        let h = p[j] * p[k] - if j == k { 1.0 } else { 0.0 };
                        for (c, vc) in v.iter().enumerate() {
                            m[(c, j * d + k)] += w * vc * h * kj * kk;
                        }
                    }
                }
            }
        }
        Ok(acc.unwrap_or_else(|| DMatrix::zeros(0, cols)))
    }
}
