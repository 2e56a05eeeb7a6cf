//! Bihari comparison bound for `Y = X − M`.
//!
//! With `α_T = 2‖X_0‖²_∞ + 2∫_0^T h(‖M_s‖_∞) ds` and `Ψ(s) = ∫_1^s dr/(2Φ(r))`,
//! the running maximum `Z(t) = sup_{[−r,t]} |Y|²` stays below `Ψ^{-1}(Ψ(α_T) + t)`.

use std::sync::Arc;

use crate::analysis::quadrature::{half_line_integral, Convergence, GaussLegendre};
use crate::analysis::spectrum::norm;
use crate::analysis::classes::{U_MAX, WINDOW_TOL};
use crate::error::{Error, Result};
use crate::segment::{segment_norm, SegmentPath, Trajectory};

type Lyapunov = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Bisection tolerance on `log s` when inverting `Ψ`.
pub const INVERSION_TOL: f64 = 1e-10;

/// The pair `(Φ_t(s), h_t(s))` of the non-explosion condition.
#[derive(Clone)]
pub struct LyapunovSpec {
    phi: Lyapunov,
    h: Lyapunov,
    /// Set by [`LyapunovSpec::new`] once `∫_1^∞ ds/Φ_t(s)` was found divergent.
    pub divergent: bool,
}

impl LyapunovSpec {
    /// Builds the pair and checks the divergence of `∫_1^∞ ds/Φ_t(s)` at `t = 1`.
    pub fn new(phi: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, h: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        let phi: Lyapunov = Arc::new(phi);
        // s = e^u
        let test = half_line_integral(|u| u.exp() / phi(1.0, u.exp()), WINDOW_TOL, U_MAX);
        let divergent = test.outcome == Convergence::Divergent;
        Self { phi, h: Arc::new(h), divergent }
    }

    /// `Φ(s) = K s`, `h(s) = κ s²/2 + c²/2`: the pairing for `b = −κx + (bounded)`, `|b + κx| + |B| ≤ c`, with `K = 1/2`.
    pub fn linear(k: f64, kappa: f64, c: f64) -> Self {
        Self::new(move |_, s| k * s, move |_, s| 0.5 * kappa * s * s + 0.5 * c * c)
    }

    pub fn phi(&self, t: f64, s: f64) -> f64 {
        (self.phi)(t, s)
    }

    pub fn h(&self, t: f64, s: f64) -> f64 {
        (self.h)(t, s)
    }
}

#[derive(Debug, Clone)]
pub struct BihariCurve {
    pub alpha: f64,
    /// Grid times `0, Δt, …`.
    pub times: Vec<f64>,
    /// `Ψ^{-1}(Ψ(α_T) + t)` at each grid time.
    pub values: Vec<f64>,
}

/// `Ψ(s) = ∫_1^s dr / (2Φ(r))`, integrated in `v = log r`.
fn psi(lyap: &LyapunovSpec, t: f64, s: f64) -> f64 {
    let rule = GaussLegendre::new(16);
    let v = s.ln();
    let panels = (v.abs().ceil() as usize).clamp(1, 4096);
    rule.composite(0.0, v, panels, |w| {
        let r = w.exp();
        r / (2.0 * lyap.phi(t, r))
    })
}

fn psi_inverse(lyap: &LyapunovSpec, t: f64, target: f64) -> Result<f64> {
    let f = |v: f64| psi(lyap, t, v.exp()) - target;
    let (mut lo, mut hi) = (-1.0, 1.0);
    let mut guard = 0;
    while f(lo) > 0.0 {
        lo *= 2.0;
        guard += 1;
        if guard > 12 {
            return Err(Error::input("cannot bracket Ψ^{-1} from below"));
        }
    }
    while f(hi) < 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 24 || hi > 700.0 {
            // Ψ bounded above: the comparison curve blows up in finite time
            return Ok(f64::INFINITY);
        }
    }
    while hi - lo > INVERSION_TOL {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// Bound curve on `[0, T]` for one path with initial segment `xi` and convolution path `m`.
pub fn bihari_bound(lyap: &LyapunovSpec, xi: &SegmentPath, m: &Trajectory, horizon: f64) -> Result<BihariCurve> {
    if !lyap.divergent {
        return Err(Error::input("∫_1^∞ ds/Φ(s) is not divergent; the Bihari bound does not exclude explosion"));
    }
    let t_cap = m.end_time().min(horizon);
    let dt = m.grid_step;
    let d = m.delay_steps;
    let last = m.index_of(t_cap).ok_or_else(|| Error::input("horizon is not on the convolution grid"))?;
    // ‖M_s‖_∞ on the grid, then the trapezoidal rule
    let seg_sup: Vec<f64> = (d..=last).map(|k| m.window(k).sup_norm()).collect();
    let mut integral = 0.0;
    for w in seg_sup.windows(2) {
        integral += 0.5 * dt * (lyap.h(t_cap, w[0]) + lyap.h(t_cap, w[1]));
    }
    let x0 = segment_norm(xi)?;
    let alpha = 2.0 * x0 * x0 + 2.0 * integral;
    if !alpha.is_finite() {
        return Err(Error::input("α_T is not finite: the convolution part exploded"));
    }
    let base = psi(lyap, t_cap, alpha);
    let times: Vec<f64> = (0..seg_sup.len()).map(|k| k as f64 * dt).collect();
    let values = times.iter().map(|&t| psi_inverse(lyap, t_cap, base + t)).collect::<Result<Vec<_>>>()?;
    Ok(BihariCurve { alpha, times, values })
}

/// `Z(t_k) = sup_{[−r, t_k]} |X − M|²` at each grid time `t_k ≥ 0`.
pub fn running_sup_sq(x: &Trajectory, m: &Trajectory) -> Vec<f64> {
    let d = x.delay_steps;
    let rows = x.rows().min(m.rows());
    let mut z = 0.0_f64;
    let mut out = Vec::with_capacity(rows - d);
    for k in 0..rows {
        let y: Vec<f64> = x.row(k).iter().zip(m.row(k)).map(|(a, b)| a - b).collect();
        z = z.max(norm(&y).powi(2));
        if k >= d {
            out.push(z);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_conv(r: f64, dt: f64, horizon: f64, dim: usize) -> Trajectory {
        let z = SegmentPath::constant(r, dt, &vec![0.0; dim]).unwrap();
        let mut tr = Trajectory::new(&z, horizon);
        for _ in 0..(horizon / dt).round() as usize {
            tr.push(&vec![0.0; dim]);
        }
        tr
    }

    #[test]
    fn linear_phi_gives_exponential_curve() {
        let k = 0.75;
        let lyap = LyapunovSpec::new(move |_, s| k * s, |_, _| 0.3);
        assert!(lyap.divergent);
        let xi = SegmentPath::constant(0.5, 0.125, &[1.2, -0.4]).unwrap();
        let m = zero_conv(0.5, 0.125, 2.0, 2);
        let c = bihari_bound(&lyap, &xi, &m, 2.0).unwrap();
        let alpha = 2.0 * (1.44 + 0.16) + 2.0 * 0.3 * 2.0;
        assert!((c.alpha - alpha).abs() < 1e-12);
        for (t, v) in c.times.iter().zip(&c.values) {
            let exact = alpha * (2.0 * k * t).exp();
            assert!((v - exact).abs() < 1e-8 * exact, "{t}: {v} vs {exact}");
        }
    }

    #[test]
    fn zero_h_and_m_give_twice_the_initial_norm() {
        let lyap = LyapunovSpec::linear(0.5, 0.0, 0.0);
        let xi = SegmentPath::constant(0.5, 0.25, &[3.0]).unwrap();
        let c = bihari_bound(&lyap, &xi, &zero_conv(0.5, 0.25, 1.0, 1), 1.0).unwrap();
        assert_eq!(c.alpha, 18.0);
        assert!(c.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn superlinear_phi_is_rejected() {
        let lyap = LyapunovSpec::new(|_, s| s * s, |_, _| 1.0);
        assert!(!lyap.divergent);
        let xi = SegmentPath::constant(0.5, 0.25, &[1.0]).unwrap();
        assert!(bihari_bound(&lyap, &xi, &zero_conv(0.5, 0.25, 1.0, 1), 1.0).is_err());
    }

    #[test]
    fn nonlinear_phi_matches_fine_trapezoid() {
        // Φ(s) = s log(e + s) has no closed form for Ψ, so compare against Ψ(s) by a fine trapezoid rule
        let lyap = LyapunovSpec::new(|_, s| s * (std::f64::consts::E + s).ln(), |_, _| 0.0);
        assert!(lyap.divergent);
        let s = 37.0;
        let n = 200_000;
        let h = (s - 1.0) / n as f64;
        let g = |r: f64| 1.0 / (2.0 * lyap.phi(0.0, r));
        let trap: f64 = (0..n).map(|i| 0.5 * h * (g(1.0 + i as f64 * h) + g(1.0 + (i + 1) as f64 * h))).sum();
        assert!((psi(&lyap, 0.0, s) - trap).abs() < 1e-8);
        let back = psi_inverse(&lyap, 0.0, trap).unwrap();
        assert!((back - s).abs() < 1e-7 * s);
    }
}
