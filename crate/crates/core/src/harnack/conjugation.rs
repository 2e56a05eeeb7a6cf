//! `P_T f(ξ) = P̄_T(f ∘ θ_T^{-1})(θ_0(ξ))`, checked by simulating both sides on
//! common noise.

use serde::{Deserialize, Serialize};

use super::{check_horizon, TestFunction};
use crate::analysis::Spectrum;
use crate::error::{Error, Result};
use crate::segment::{grid_steps, SegmentPath};
use crate::simulator::{mean_stderr, monte_carlo, simulate, CoefficientSet, NoisePath, SimOptions};
use crate::zvonkin::TransformedSystem;

/// One grid step of a conjugation sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugationPoint {
    pub grid_step: f64,
    pub direct: f64,
    pub direct_stderr: f64,
    pub transformed: f64,
    pub transformed_stderr: f64,
    /// Mean of `f(X_T) − f(θ_T^{-1}(Ȳ_T))`.
    pub residual: f64,
    /// Paired standard error of `residual`.
    pub paired_stderr: f64,
    /// Root mean square of the pathwise difference.
    pub pathwise_rms: f64,
}

impl ConjugationPoint {
    pub fn combined_stderr(&self) -> f64 {
        self.direct_stderr.hypot(self.transformed_stderr)
    }
}

/// Direct and transformed estimates from `samples` shared noise paths at the grid of `xi`.
pub fn conjugation_check(
    coeffs: &CoefficientSet,
    sys: &TransformedSystem,
    spec: &Spectrum,
    xi: &SegmentPath,
    f: &TestFunction,
    horizon: f64,
    samples: usize,
    seed: u64,
) -> Result<ConjugationPoint> {
    let steps = grid_steps(horizon, xi.grid_step, "horizon")?;
    let noise = |j| NoisePath::generate(seed, j, coeffs.dim, steps, xi.grid_step);
    run(coeffs, sys, spec, xi, f, horizon, samples, &noise)
}

#[allow(clippy::too_many_arguments)]
fn run(
    coeffs: &CoefficientSet,
    sys: &TransformedSystem,
    spec: &Spectrum,
    xi: &SegmentPath,
    f: &TestFunction,
    horizon: f64,
    samples: usize,
    noise: &(dyn Fn(u64) -> NoisePath + Sync),
) -> Result<ConjugationPoint> {
    check_horizon(xi, horizon)?;
    let zeta = sys.theta_segment(0.0, xi)?;
    let pairs = monte_carlo(samples, |j| {
        let w = noise(j);
        let x = simulate(coeffs, xi, horizon, spec, &w, SimOptions::default())?;
        let y = simulate(sys, &zeta, horizon, spec, &w, SimOptions::default())?;
        for tr in [&x.trajectory, &y.trajectory] {
            if let Some(t) = tr.life_time {
                return Err(Error::Explosion { time: t });
            }
        }
        let last = x.trajectory.rows() - 1;
        Ok((f.eval(&x.trajectory.window(last)), f.eval(&y.aux_window(last))))
    })?;
    let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let d: Vec<f64> = pairs.iter().map(|p| p.0 - p.1).collect();
    let (direct, direct_stderr) = mean_stderr(&a);
    let (transformed, transformed_stderr) = mean_stderr(&b);
    let (residual, paired_stderr) = mean_stderr(&d);
    let pathwise_rms = (d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64).sqrt();
    Ok(ConjugationPoint {
        grid_step: xi.grid_step,
        direct,
        direct_stderr,
        transformed,
        transformed_stderr,
        residual,
        paired_stderr,
        pathwise_rms,
    })
}

/// Conjugation residuals over a range of grid steps, all driven by the same
/// Brownian paths (sampled on the finest grid and coarsened).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugationSweep {
    pub points: Vec<ConjugationPoint>,
    /// Least-squares fit `pathwise_rms ≈ constant·Δt^order`.
    pub order: f64,
    pub constant: f64,
}

impl ConjugationSweep {
    /// Discretization allowance at the grid step of point `i`.
    pub fn allowance(&self, i: usize) -> f64 {
        self.constant * self.points[i].grid_step.powf(self.order)
    }

    /// Every point agrees within `3·combined stderr + allowance`.
    pub fn agrees(&self) -> bool {
        (0..self.points.len()).all(|i| {
            let p = &self.points[i];
            p.residual.abs() <= 3.0 * p.combined_stderr() + self.allowance(i)
        })
    }
}

/// Runs [`conjugation_check`] at each step of `grid_steps`, rebuilding the
/// initial segment from `initial` on each grid.
#[allow(clippy::too_many_arguments)]
pub fn conjugation_sweep(
    coeffs: &CoefficientSet,
    sys: &TransformedSystem,
    spec: &Spectrum,
    r: f64,
    initial: &(dyn Fn(f64) -> Vec<f64> + Sync),
    f: &TestFunction,
    horizon: f64,
    grid_steps_list: &[f64],
    samples: usize,
    seed: u64,
) -> Result<ConjugationSweep> {
    let finest = grid_steps_list.iter().copied().fold(f64::INFINITY, f64::min);
    let fine_steps = grid_steps(horizon, finest, "horizon")?;
    let mut points = Vec::new();
    for &dt in grid_steps_list {
        let ratio = dt / finest;
        let factor = ratio.round() as usize;
        if (ratio - factor as f64).abs() > 1e-9 {
            return Err(Error::config("grid_steps", format!("{dt} is not a multiple of the finest step {finest}")));
        }
        let xi = SegmentPath::from_fn(r, dt, coeffs.dim, initial)?;
        let noise = |j| {
            let w = NoisePath::generate(seed, j, coeffs.dim, fine_steps, finest);
            if factor == 1 {
                w
            } else {
                w.coarsen(factor).expect("factor divides the fine grid")
            }
        };
        points.push(run(coeffs, sys, spec, &xi, f, horizon, samples, &noise)?);
    }
    let (order, constant) = fit_power(&points);
    Ok(ConjugationSweep { points, order, constant })
}

fn fit_power(points: &[ConjugationPoint]) -> (f64, f64) {
    let xy: Vec<(f64, f64)> =
        points.iter().filter(|p| p.pathwise_rms > 0.0).map(|p| (p.grid_step.ln(), p.pathwise_rms.ln())).collect();
    if xy.len() < 2 {
        return (f64::INFINITY, 0.0);
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let order = sxy / sxx;
    (order, (my - order * mx).exp())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::simulator::{DiagonalNoise, ZeroDelay, ZeroDrift};
    use crate::zvonkin::RegularizingField;

    #[test]
    fn power_fit_recovers_exponent() {
        let pts: Vec<_> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&h: &f64| ConjugationPoint {
                grid_step: h,
                direct: 0.0,
                direct_stderr: 0.0,
                transformed: 0.0,
                transformed_stderr: 0.0,
                residual: 0.0,
                paired_stderr: 0.0,
                pathwise_rms: 3.0 * h.powf(0.7),
            })
            .collect();
        let (o, c) = fit_power(&pts);
        assert!((o - 0.7).abs() < 1e-12 && (c - 3.0).abs() < 1e-10);
    }

    #[test]
    fn zero_field_gives_identical_estimates() {
        let spec = Spectrum::power_law(1.0, 2.0, 2, 0.4).unwrap();
        let coeffs = CoefficientSet::new(2, Arc::new(ZeroDrift), Arc::new(ZeroDelay), Arc::new(DiagonalNoise { q: vec![1.0, 0.5] }));
        let field = RegularizingField::zero(2, vec![0, 1], vec![1.0, 4.0], 50.0, 1.0);
        let sys = TransformedSystem::new(Arc::new(field), coeffs.clone(), &spec).unwrap();
        let xi = SegmentPath::constant(0.25, 0.0625, &[0.3, -0.2]).unwrap();
        let f = TestFunction::ExpLinear { v: vec![1.0, 1.0], cap: 1.0 };
        let p = conjugation_check(&coeffs, &sys, &spec, &xi, &f, 1.0, 64, 3).unwrap();
        assert_eq!(p.residual, 0.0);
        assert_eq!(p.direct, p.transformed);
        let one = conjugation_check(&coeffs, &sys, &spec, &xi, &TestFunction::Constant { c: 1.0 }, 1.0, 16, 3).unwrap();
        assert_eq!((one.direct, one.transformed), (1.0, 1.0));
    }
}
