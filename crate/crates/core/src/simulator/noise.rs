use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Increments `ΔW_k` of the `m`-dimensional truncated cylindrical Wiener process.
///
/// Path `j` of a Monte Carlo run with seed `s` is ChaCha8 seeded by `s` on
/// stream `j`, so paths are independent of how work is scheduled.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub seed: u64,
    pub stream: u64,
    pub grid_step: f64,
    pub dim: usize,
    increments: Vec<f64>,
}

impl NoisePath {
    pub fn generate(seed: u64, stream: u64, dim: usize, steps: usize, grid_step: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let sd = grid_step.sqrt();
        let increments = (0..steps * dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sd * z
            })
            .collect();
        Self { seed, stream, grid_step, dim, increments }
    }

    pub fn zeros(dim: usize, steps: usize, grid_step: f64) -> Self {
        Self { seed: 0, stream: 0, grid_step, dim, increments: vec![0.0; steps * dim] }
    }

    pub fn from_increments(dim: usize, grid_step: f64, increments: Vec<f64>) -> Result<Self> {
        if dim == 0 || increments.len() % dim != 0 {
            return Err(Error::input("increment count is not a multiple of the noise dimension"));
        }
        Ok(Self { seed: 0, stream: 0, grid_step, dim, increments })
    }

    pub fn steps(&self) -> usize {
        self.increments.len() / self.dim
    }

    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.dim..(k + 1) * self.dim]
    }

    pub fn raw(&self) -> &[f64] {
        &self.increments
    }

    /// Sum consecutive blocks of `factor` increments: the same Brownian path on a grid `factor·Δt`.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.steps() % factor != 0 {
            return Err(Error::input(format!("cannot coarsen {} steps by {factor}", self.steps())));
        }
        let mut out = vec![0.0; self.increments.len() / factor];
        for k in 0..self.steps() {
            let dst = k / factor;
            for i in 0..self.dim {
                out[dst * self.dim + i] += self.increments[k * self.dim + i];
            }
        }
        Ok(Self { grid_step: self.grid_step * factor as f64, increments: out, ..self.clone() })
    }

    /// Antithetic copy `−ΔW`.
    pub fn negated(&self) -> Self {
        Self { increments: self.increments.iter().map(|v| -v).collect(), ..self.clone() }
    }

    /// The first `n` components, for Galerkin runs sharing one noise source.
    pub fn restrict(&self, n: usize) -> Self {
        let n = n.min(self.dim);
        let mut inc = Vec::with_capacity(self.steps() * n);
        for k in 0..self.steps() {
            inc.extend_from_slice(&self.increment(k)[..n]);
        }
        Self { dim: n, increments: inc, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream_is_identical() {
        let a = NoisePath::generate(42, 3, 2, 100, 0.01);
        let b = NoisePath::generate(42, 3, 2, 100, 0.01);
        assert_eq!(a, b);
        let c = NoisePath::generate(42, 4, 2, 100, 0.01);
        assert_ne!(a.raw(), c.raw());
    }

    #[test]
    fn increments_have_variance_dt() {
        let dt = 0.01;
        let p = NoisePath::generate(1, 0, 4, 50_000, dt);
        let n = p.raw().len() as f64;
        let mean = p.raw().iter().sum::<f64>() / n;
        let var = p.raw().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // stderr of the sample variance is dt·sqrt(2/n)
        assert!((var - dt).abs() < 4.0 * dt * (2.0 / n).sqrt(), "{var}");
        assert!(mean.abs() < 4.0 * (dt / n).sqrt());
    }

    #[test]
    fn coarsening_sums_blocks() {
        let p = NoisePath::generate(9, 0, 2, 8, 0.125);
        let c = p.coarsen(4).unwrap();
        assert_eq!(c.steps(), 2);
        assert_eq!(c.grid_step, 0.5);
        let s: f64 = (0..4).map(|k| p.increment(k)[1]).sum();
        assert!((c.increment(0)[1] - s).abs() < 1e-15);
        assert!(p.coarsen(3).is_err());
        assert_eq!(p.negated().increment(2)[0], -p.increment(2)[0]);
        assert_eq!(p.restrict(1).increment(5), &p.increment(5)[..1]);
    }
}
