//! Quadrature primitives shared by the class checkers, the Bihari bound and
//! the resolvent solver.
//!
//! Improper integrals are reduced to a half-line `[0, ∞)` by the caller and
//! then integrated on doubling windows `[0,1], [1,2], [2,4], …`. The window
//! contributions drive a reproducible convergence/divergence decision.

use std::f64::consts::PI;

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Newton iteration on the Legendre recurrence; accurate to machine precision.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-15 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, z);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Integrate `f` over `[a, b]` with a single panel.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Composite rule on `panels` equal panels.
    pub fn composite(&self, a: f64, b: f64, panels: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|k| {
                let lo = a + k as f64 * h;
                self.integrate(lo, lo + h, &mut f)
            })
            .sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Hermite rule normalised for the standard Gaussian: `E g(G) ≈ Σ w_k g(z_k)`,
/// `G ~ N(0,1)`. Weights sum to one.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        // Physicists' nodes via Newton on orthonormal Hermite functions, then
        // rescale x -> sqrt(2) x and w -> w / sqrt(pi).
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let pim4 = PI.powf(-0.25);
        let nf = n as f64;
        let m = n.div_ceil(2);
        let mut z = 0.0;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..200 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        let sqrt_pi = PI.sqrt();
        let mut nodes: Vec<f64> = x.iter().map(|v| v * std::f64::consts::SQRT_2).collect();
        let mut weights: Vec<f64> = w.iter().map(|v| v / sqrt_pi).collect();
        // Ascending order, and exact zero for the middle node of odd rules.
        nodes.reverse();
        weights.reverse();
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn expectation(&self, mut g: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&z, &w)| w * g(z)).sum()
    }
}

/// Outcome of the windowed half-line integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Convergence {
    Converged,
    Divergent,
    Indeterminate,
}

#[derive(Debug, Clone)]
pub struct HalfLineIntegral {
    pub value: f64,
    pub tail_bound: f64,
    pub outcome: Convergence,
    /// Contribution of each doubling window, in order.
    pub windows: Vec<f64>,
    /// Sum over windows of |fine − coarse| panel estimates.
    pub quadrature_error: f64,
}

/// Windows whose contribution ratio stays at or above this value are "not decaying".
pub const DECAY_RATIO: f64 = 0.9;
/// Consecutive windows needed to call a trend.
pub const TREND_WINDOWS: usize = 5;

/// Integrate `f` over `[0, ∞)` on doubling windows.
///
/// Stops with `Converged` once a window contributes less than `tol · |sum|`,
/// or once `u_max` is reached after [`TREND_WINDOWS`] consecutive decaying
/// windows (geometric tail estimate). Stops with `Divergent` once
/// [`TREND_WINDOWS`] consecutive window ratios are `≥` [`DECAY_RATIO`]. Sign
/// oscillation of the contributions, a non-finite sample or running out of
/// range without a trend gives `Indeterminate`.
pub fn half_line_integral(mut f: impl FnMut(f64) -> f64, tol: f64, u_max: f64) -> HalfLineIntegral {
    let rule = GaussLegendre::new(10);
    let mut windows = Vec::new();
    let mut ratios: Vec<f64> = Vec::new();
    let mut sum = 0.0;
    let mut qerr = 0.0;
    let mut sign_changes = 0usize;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    loop {
        let fine = rule.composite(lo, hi, 8, &mut f);
        let coarse = rule.composite(lo, hi, 4, &mut f);
        if !fine.is_finite() {
            return HalfLineIntegral {
                value: sum,
                tail_bound: f64::INFINITY,
                outcome: Convergence::Indeterminate,
                windows,
                quadrature_error: f64::INFINITY,
            };
        }
        qerr += (fine - coarse).abs();
        if let Some(&prev) = windows.last() {
            let prev: f64 = prev;
            let ratio = if prev == 0.0 {
                if fine == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                (fine / prev).abs()
            };
            ratios.push(ratio);
            if prev != 0.0 && fine != 0.0 && prev.signum() != fine.signum() {
                sign_changes += 1;
            }
        }
        windows.push(fine);
        sum += fine;

        let recent = |pred: &dyn Fn(f64) -> bool| {
            ratios.len() >= TREND_WINDOWS && ratios[ratios.len() - TREND_WINDOWS..].iter().all(|&r| pred(r))
        };
        let tail_from = |c: f64, ratios: &[f64]| {
            let rho = ratios
                .iter()
                .rev()
                .take(TREND_WINDOWS)
                .fold(0.0_f64, |m, &r| m.max(r))
                .min(DECAY_RATIO);
            c.abs() * rho / (1.0 - rho)
        };

        if sign_changes >= TREND_WINDOWS {
            return HalfLineIntegral {
                value: sum,
                tail_bound: f64::INFINITY,
                outcome: Convergence::Indeterminate,
                windows,
                quadrature_error: qerr,
            };
        }
        if recent(&|r| r >= DECAY_RATIO) {
            return HalfLineIntegral {
                value: sum,
                tail_bound: f64::INFINITY,
                outcome: Convergence::Divergent,
                windows,
                quadrature_error: qerr,
            };
        }
        if windows.len() >= 3 && fine.abs() <= tol * sum.abs() {
            let tail_bound = tail_from(fine, &ratios);
            return HalfLineIntegral { value: sum, tail_bound, outcome: Convergence::Converged, windows, quadrature_error: qerr };
        }
        if hi >= u_max {
            let outcome = if recent(&|r| r < DECAY_RATIO) { Convergence::Converged } else { Convergence::Indeterminate };
            let tail_bound = if outcome == Convergence::Converged { tail_from(fine, &ratios) } else { f64::INFINITY };
            return HalfLineIntegral { value: sum, tail_bound, outcome, windows, quadrature_error: qerr };
        }
        lo = hi;
        hi = (2.0 * hi).min(u_max);
    }
}

/// `∫_0^L f(d) dd` on a geometric mesh accumulating at `d = 0`.
///
/// `f` receives the distance to the singular endpoint, so callers never form
/// `b − d` in floating point where it would round onto the singularity.
pub fn graded_from_singularity(
    rule: &GaussLegendre,
    length: f64,
    levels: usize,
    ratio: f64,
    mut f: impl FnMut(f64) -> f64,
) -> f64 {
    let mut total = 0.0;
    let mut outer = length;
    for _ in 0..levels {
        let inner = outer * ratio;
        total += rule.integrate(inner, outer, &mut f);
        outer = inner;
    }
    total + rule.integrate(0.0, outer, &mut f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(6);
        // degree 11 is exact for 6 nodes
        let v = rule.integrate(0.0, 2.0, |x| x.powi(11));
        assert_relative_eq!(v, 2f64.powi(12) / 12.0, max_relative = 1e-13);
        assert_relative_eq!(rule.weights.iter().sum::<f64>(), 2.0, max_relative = 1e-14);
    }

    #[test]
    fn hermite_moments_match_standard_gaussian() {
        let rule = GaussHermite::new(8);
        assert_relative_eq!(rule.expectation(|_| 1.0), 1.0, max_relative = 1e-13);
        assert!(rule.expectation(|z| z).abs() < 1e-14);
        assert_relative_eq!(rule.expectation(|z| z * z), 1.0, max_relative = 1e-12);
        assert_relative_eq!(rule.expectation(|z| z.powi(4)), 3.0, max_relative = 1e-12);
        assert_relative_eq!(rule.expectation(|z| z.powi(14)), 135135.0, max_relative = 1e-10);
        let odd = GaussHermite::new(5);
        assert_eq!(odd.nodes[2], 0.0);
    }

    #[test]
    fn exponential_tail_converges() {
        let r = half_line_integral(|u| (-0.5 * u).exp(), 1e-12, 700.0);
        assert_eq!(r.outcome, Convergence::Converged);
        assert_relative_eq!(r.value, 2.0, max_relative = 1e-9);
    }

    #[test]
    fn harmonic_tail_diverges() {
        let r = half_line_integral(|u| 1.0 / (1.0 + u), 1e-10, 700.0);
        assert_eq!(r.outcome, Convergence::Divergent);
    }

    #[test]
    fn inverse_square_tail_converges_at_range_limit() {
        let r = half_line_integral(|u| 1.0 / (1.0 + u).powi(2), 1e-10, 512.0);
        assert_eq!(r.outcome, Convergence::Converged);
        // exact value 1, truncated at 512 -> 1 - 1/513
        assert!((r.value - (1.0 - 1.0 / 513.0)).abs() < 1e-8);
        assert!(r.value + r.tail_bound >= 1.0 - 1e-9);
    }

    #[test]
    fn graded_mesh_handles_inverse_sqrt_endpoint() {
        let rule = GaussLegendre::new(8);
        let v = graded_from_singularity(&rule, 1.0, 30, 0.25, |d| 1.0 / d.sqrt());
        assert_relative_eq!(v, 2.0, max_relative = 1e-7);
    }
}
