//! Mild-solution integrator on the truncated eigenbasis, Girsanov weights,
//! the truncation scheme, the Bihari non-explosion bound and the maximal
//! inequality for the stochastic convolution.

pub mod bihari;
pub mod coefficients;
pub mod girsanov;
pub mod integrator;
pub mod maximal;
pub mod noise;

pub use bihari::{bihari_bound, running_sup_sq, BihariCurve, LyapunovSpec};
pub use coefficients::{
    cutoff, truncate_coeffs, CoefficientSet, ConstantDrift, CubicDrift, DelayDrift, DiagonalNoise, DiniDrift, Drift, LinearDelay,
    LinearDrift, MultiplicativeNoise, NoiseCoefficient, SumDrift, TanhDelay, TruncationScheme, ZeroDelay, ZeroDrift,
};
pub use girsanov::girsanov_weight;
pub use integrator::{simulate, simulate_mild, SimOptions, Simulation, StepContext, StepFactors, System, EXPLOSION_THRESHOLD};
pub use maximal::{maximal_inequality_check, MaximalInequalityReport};
pub use noise::NoisePath;

use rayon::prelude::*;

use crate::error::Result;

/// Run `task(j)` for `j = 0..samples` in parallel; results come back in index order.
pub fn monte_carlo<T: Send>(samples: usize, task: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..samples as u64).into_par_iter().map(task).collect()
}

/// Sample mean and its standard error `s/√n`.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
