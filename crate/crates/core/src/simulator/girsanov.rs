use nalgebra::{DMatrix, DVector};

use super::integrator::{StepContext, System};
use super::noise::NoisePath;
use crate::error::{Error, Result};
use crate::segment::{grid_steps, SegmentView, Trajectory};

/// Relative size of the smallest singular value of `Q` below which `QQ*` counts as singular.
const SINGULAR_TOL: f64 = 1e-12;

/// `R = exp[Σ_k ⟨ψ_k, ΔW_k⟩ − ½ Σ_k |ψ_k|² Δt]` with `ψ = Q*(QQ*)^{-1}(b + B)` along the path.
pub fn girsanov_weight(sys: &(impl System + ?Sized), tr: &Trajectory, noise: &NoisePath, horizon: f64) -> Result<f64> {
    if sys.aux_dim() > 0 {
        return Err(Error::input("Girsanov weights need a system without auxiliary state"));
    }
    let n = sys.dim();
    let dt = tr.grid_step;
    let steps = grid_steps(horizon, dt, "horizon")?;
    if tr.exploded() && tr.end_time() < horizon {
        return Err(Error::Explosion { time: tr.life_time.unwrap_or(horizon) });
    }
    if noise.steps() < steps || noise.dim != n {
        return Err(Error::input("noise path does not cover the horizon"));
    }
    let d = tr.delay_steps;
    let mut drift = vec![0.0; n];
    let mut q = DMatrix::<f64>::zeros(n, n);
    let mut log_r = 0.0;
    for k in 0..steps {
        let t = k as f64 * dt;
        let ctx = StepContext { t, segment: tr.window(d + k), aux: SegmentView { dim: 0, grid_step: dt, data: &[] } };
        sys.drift(&ctx, &mut drift);
        if drift.iter().all(|v| *v == 0.0) {
            continue;
        }
        sys.noise_matrix(&ctx, &mut q);
        let qqt = &q * q.transpose();
        let eig = qqt.clone().symmetric_eigen();
        let max = eig.eigenvalues.max().max(0.0).sqrt();
        let min = eig.eigenvalues.min().max(0.0).sqrt();
        if !(min > SINGULAR_TOL * max.max(1.0)) {
            return Err(Error::SingularDiffusion { time: t, sigma_min: min });
        }
        let chol = qqt.cholesky().ok_or(Error::SingularDiffusion { time: t, sigma_min: min })?;
        let psi = q.transpose() * chol.solve(&DVector::from_column_slice(&drift));
        let dw = noise.increment(k);
        log_r += psi.iter().zip(dw).map(|(p, w)| p * w).sum::<f64>() - 0.5 * psi.norm_squared() * dt;
    }
    Ok(log_r.exp())
}
