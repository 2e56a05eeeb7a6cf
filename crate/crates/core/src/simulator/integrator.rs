//! Exponential-Euler integration of the mild form
//!
//! ```text
//! X_{k+1} = e^{AΔt} X_k + A^{-1}(e^{AΔt} − 1)·[b + B](t_k, X_{t_k}) + G_k
//! ```
//!
//! with `A = diag(−λ_i)`. For `Q = σ·diag(q) + R` the noise increment is
//! `G_k = σ q_i √((1 − e^{−2λ_iΔt})/(2λ_i Δt)) ΔW_{k,i} + (e^{AΔt} R ΔW_k)_i`:
//! the diagonal part carries the exact stochastic-convolution variance.

use nalgebra::DMatrix;

use super::coefficients::CoefficientSet;
use super::noise::NoisePath;
use crate::analysis::spectrum::norm;
use crate::analysis::Spectrum;
use crate::error::{Error, Result};
use crate::segment::{grid_steps, SegmentPath, SegmentView, Trajectory};

/// `|X| > 10¹²` or a non-finite value marks the life time.
pub const EXPLOSION_THRESHOLD: f64 = 1e12;

/// Current grid time together with the segment `X_t` and any auxiliary rows.
pub struct StepContext<'a> {
    pub t: f64,
    pub segment: SegmentView<'a>,
    /// Auxiliary rows over the same window (empty when `aux_dim = 0`).
    pub aux: SegmentView<'a>,
}

impl StepContext<'_> {
    pub fn state(&self) -> &[f64] {
        self.segment.last()
    }

    pub fn aux_state(&self) -> &[f64] {
        if self.aux.dim == 0 {
            &[]
        } else {
            self.aux.last()
        }
    }
}

/// Anything the integrator can drive. Auxiliary per-state data lets a
/// transformed system cache pulled-back states along the path.
pub trait System: Sync {
    fn dim(&self) -> usize;

    fn aux_dim(&self) -> usize {
        0
    }

    /// Auxiliary row for a freshly computed state.
    fn aux(&self, _t: f64, _x: &[f64], _out: &mut [f64]) -> Result<()> {
        Ok(())
    }

    /// Auxiliary rows for the initial segment (rows at times `−r..=0`).
    fn initial_aux(&self, xi: &SegmentPath) -> Result<Vec<f64>> {
        let d = self.aux_dim();
        let mut out = vec![0.0; xi.len() * d];
        for k in 0..xi.len() {
            let t = -xi.r + k as f64 * xi.grid_step;
            self.aux(t, xi.at(k), &mut out[k * d..(k + 1) * d])?;
        }
        Ok(out)
    }

    /// `out = b(t, X(t)) + B(t, X_t)`.
    fn drift(&self, ctx: &StepContext<'_>, out: &mut [f64]);

    fn noise_diagonal(&self) -> &[f64];

    fn noise_scale(&self, _ctx: &StepContext<'_>) -> f64 {
        1.0
    }

    /// `out += R(t, X(t))`; `false` when there is no remainder.
    fn noise_remainder(&self, _ctx: &StepContext<'_>, _out: &mut DMatrix<f64>) -> bool {
        false
    }

    /// Full `Q(t, X(t))`.
    fn noise_matrix(&self, ctx: &StepContext<'_>, out: &mut DMatrix<f64>) {
        out.fill(0.0);
        let s = self.noise_scale(ctx);
        for (i, q) in self.noise_diagonal().iter().enumerate() {
            out[(i, i)] = s * q;
        }
        self.noise_remainder(ctx, out);
    }
}

impl System for CoefficientSet {
    fn dim(&self) -> usize {
        self.dim
    }

    fn drift(&self, ctx: &StepContext<'_>, out: &mut [f64]) {
        out.fill(0.0);
        self.b.accumulate(ctx.t, ctx.state(), 1.0, out);
        self.delay.accumulate(ctx.t, &ctx.segment, 1.0, out);
    }

    fn noise_diagonal(&self) -> &[f64] {
        self.q.diagonal()
    }

    fn noise_scale(&self, ctx: &StepContext<'_>) -> f64 {
        self.q.scale(ctx.t, ctx.state())
    }

    fn noise_remainder(&self, ctx: &StepContext<'_>, out: &mut DMatrix<f64>) -> bool {
        self.q.remainder(ctx.t, ctx.state(), 1.0, out)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    /// Also record `M(t) = ∫_0^t e^{A(t−s)} Q dW(s)` (zero on `[−r, 0]`).
    pub record_convolution: bool,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub trajectory: Trajectory,
    /// Auxiliary rows aligned with the trajectory rows.
    pub aux: Vec<f64>,
    pub aux_dim: usize,
    pub convolution: Option<Trajectory>,
}

impl Simulation {
    pub fn aux_row(&self, k: usize) -> &[f64] {
        &self.aux[k * self.aux_dim..(k + 1) * self.aux_dim]
    }

    /// Auxiliary segment ending at row `k`.
    pub fn aux_window(&self, k: usize) -> SegmentView<'_> {
        let d = self.trajectory.delay_steps;
        SegmentView { dim: self.aux_dim, grid_step: self.trajectory.grid_step, data: &self.aux[(k - d) * self.aux_dim..(k + 1) * self.aux_dim] }
    }
}

/// Per-mode constants of one exponential-Euler step.
#[derive(Debug, Clone)]
pub struct StepFactors {
    pub decay: Vec<f64>,
    pub drift: Vec<f64>,
    /// `√((1 − e^{−2λΔt})/(2λΔt))`
    pub ou: Vec<f64>,
}

impl StepFactors {
    pub fn new(spec: &Spectrum, dim: usize, dt: f64) -> Result<Self> {
        if spec.n_modes() < dim {
            return Err(Error::input(format!("spectrum stores {} modes, system needs {dim}", spec.n_modes())));
        }
        let lam = &spec.eigenvalues()[..dim];
        Ok(Self {
            decay: lam.iter().map(|l| (-l * dt).exp()).collect(),
            drift: lam.iter().map(|l| -(-l * dt).exp_m1() / l).collect(),
            ou: lam.iter().map(|l| (-(-2.0 * l * dt).exp_m1() / (2.0 * l * dt)).sqrt()).collect(),
        })
    }
}

pub fn simulate_mild(
    sys: &(impl System + ?Sized),
    xi: &SegmentPath,
    horizon: f64,
    spec: &Spectrum,
    noise: &NoisePath,
) -> Result<Trajectory> {
    Ok(simulate(sys, xi, horizon, spec, noise, SimOptions::default())?.trajectory)
}

pub fn simulate(
    sys: &(impl System + ?Sized),
    xi: &SegmentPath,
    horizon: f64,
    spec: &Spectrum,
    noise: &NoisePath,
    opts: SimOptions,
) -> Result<Simulation> {
    let n = sys.dim();
    let dt = xi.grid_step;
    if xi.dim() != n {
        return Err(Error::input(format!("initial segment has {} modes, system has {n}", xi.dim())));
    }
    if (noise.grid_step - dt).abs() > 1e-12 * dt {
        return Err(Error::input(format!("noise grid {} does not match Δt = {dt}", noise.grid_step)));
    }
    if noise.dim != n {
        return Err(Error::input(format!("noise has {} components, system needs {n}", noise.dim)));
    }
    let steps = grid_steps(horizon, dt, "horizon")?;
    if noise.steps() < steps {
        return Err(Error::input(format!("noise has {} steps, horizon needs {steps}", noise.steps())));
    }
    let f = StepFactors::new(spec, n, dt)?;
    let q = sys.noise_diagonal().to_vec();
    let aux_dim = sys.aux_dim();

    let mut tr = Trajectory::new(xi, horizon);
    let mut aux = sys.initial_aux(xi)?;
    let mut conv = opts.record_convolution.then(|| {
        let zero = SegmentPath::constant(xi.r, dt, &vec![0.0; n]).expect("grid already validated");
        Trajectory::new(&zero, horizon)
    });
    let mut m_state = vec![0.0; n];
    let mut drift = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut next_aux = vec![0.0; aux_dim];
    let mut rem = DMatrix::<f64>::zeros(n, n);
    let d = tr.delay_steps;

    for k in 0..steps {
        let row = d + k;
        let t = k as f64 * dt;
        let ctx = StepContext {
            t,
            segment: tr.window(row),
            aux: SegmentView { dim: aux_dim, grid_step: dt, data: &aux[(row - d) * aux_dim..(row + 1) * aux_dim] },
        };
        sys.drift(&ctx, &mut drift);
        let dw = noise.increment(k);
        let s = sys.noise_scale(&ctx);
        for i in 0..n {
            g[i] = s * q[i] * f.ou[i] * dw[i];
        }
        rem.fill(0.0);
        if sys.noise_remainder(&ctx, &mut rem) {
            let rdw = &rem * nalgebra::DVectorView::from_slice(dw, n);
            for i in 0..n {
                g[i] += f.decay[i] * rdw[i];
            }
        }
        let x = ctx.state();
        for i in 0..n {
            next[i] = f.decay[i] * x[i] + f.drift[i] * drift[i] + g[i];
        }
        let t_next = (k + 1) as f64 * dt;
        let r = norm(&next);
        if !r.is_finite() || r > EXPLOSION_THRESHOLD {
            tr.life_time = Some(t_next);
            break;
        }
        if aux_dim > 0 {
            sys.aux(t_next, &next, &mut next_aux)?;
            aux.extend_from_slice(&next_aux);
        }
        tr.push(&next);
        if let Some(c) = conv.as_mut() {
            for i in 0..n {
                m_state[i] = f.decay[i] * m_state[i] + g[i];
            }
            c.push(&m_state);
        }
    }
    tr.record_stopping_levels();
    Ok(Simulation { trajectory: tr, aux, aux_dim, convolution: conv })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::simulator::coefficients::*;

    fn spec(n: usize) -> Spectrum {
        Spectrum::power_law(1.0, 2.0, n, 0.4).unwrap()
    }

    #[test]
    fn deterministic_heat_flow_is_exact() {
        let sp = spec(3);
        let sys = CoefficientSet::zero(3);
        let xi = SegmentPath::constant(0.5, 0.125, &[1.0, -2.0, 0.5]).unwrap();
        let noise = NoisePath::generate(3, 0, 3, 16, 0.125);
        let tr = simulate_mild(&sys, &xi, 2.0, &sp, &noise).unwrap();
        let x = tr.state(2.0).unwrap();
        for (i, (&xi0, &l)) in [1.0, -2.0, 0.5].iter().zip(sp.eigenvalues()).enumerate() {
            let exact = (-l * 2.0f64).exp() * xi0;
            assert!((x[i] - exact).abs() <= 1e-14 * exact.abs().max(1e-300), "{i}: {} vs {exact}", x[i]);
        }
    }

    #[test]
    fn ou_stationary_variance() {
        // one mode, λ = 4, q = 1.5: Var → q²/(2λ); the exact-variance step makes it exact at every t
        let sp = Spectrum::new(vec![4.0], None, 0.4).unwrap();
        let sys = CoefficientSet::new(1, Arc::new(ZeroDrift), Arc::new(ZeroDelay), Arc::new(DiagonalNoise { q: vec![1.5] }));
        let xi = SegmentPath::constant(0.25, 0.25, &[0.0]).unwrap();
        let n = 20_000;
        let vals: Vec<f64> = (0..n)
            .map(|j| {
                let noise = NoisePath::generate(11, j, 1, 12, 0.25);
                simulate_mild(&sys, &xi, 3.0, &sp, &noise).unwrap().state(3.0).unwrap()[0]
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let target = 1.5f64.powi(2) / 8.0 * (1.0 - (-24.0f64).exp());
        let se = target * (2.0 / n as f64).sqrt();
        assert!((var - target).abs() < 3.0 * se, "{var} vs {target}");
    }

    #[test]
    fn linear_delay_matches_method_of_steps() {
        // ẋ = −λx + βx(t−r), x ≡ 1 on [−r,0]; reference by RK4 with a fine step over the delayed history
        let (lam, beta, r) = (1.0_f64, 0.8_f64, 0.5_f64);
        let sp = Spectrum::new(vec![lam], None, 0.4).unwrap();
        let sys = CoefficientSet::new(1, Arc::new(ZeroDrift), Arc::new(LinearDelay { beta }), Arc::new(DiagonalNoise { q: vec![0.0] }));
        let reference = |t_end: f64| {
            let h = 1.0 / 4096.0;
            let lag = (r / h).round() as usize;
            let steps = (t_end / h).round() as usize;
            let mut xs = vec![1.0; lag + 1];
            for k in 0..steps {
                let x = xs[lag + k];
                let d0 = xs[k];
                let d1 = xs[k + 1];
                let dm = 0.5 * (d0 + d1);
                let f = |x: f64, d: f64| -lam * x + beta * d;
                let k1 = f(x, d0);
                let k2 = f(x + 0.5 * h * k1, dm);
                let k3 = f(x + 0.5 * h * k2, dm);
                let k4 = f(x + h * k3, d1);
                xs.push(x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
            }
            xs
        };
        let exact = reference(2.0);
        let mut errs = Vec::new();
        for dt in [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0] {
            let xi = SegmentPath::constant(r, dt, &[1.0]).unwrap();
            let noise = NoisePath::zeros(1, (2.0 / dt) as usize, dt);
            let tr = simulate_mild(&sys, &xi, 2.0, &sp, &noise).unwrap();
            let stride = (dt * 4096.0) as usize;
            let lag = (r * 4096.0) as usize;
            let err = (0..=(2.0 / dt) as usize)
                .map(|k| (tr.state(k as f64 * dt).unwrap()[0] - exact[lag + k * stride]).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        // first order: halving Δt roughly halves the sup error
        assert!(errs[0] < 0.05);
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!(ratio > 1.7 && ratio < 2.3, "{errs:?}");
        }
    }

    #[test]
    fn explosion_truncates_the_path() {
        let sp = Spectrum::new(vec![1.0], None, 0.4).unwrap();
        let sys = CoefficientSet::new(1, Arc::new(CubicDrift { coefficient: 1.0 }), Arc::new(ZeroDelay), Arc::new(DiagonalNoise { q: vec![0.0] }));
        let xi = SegmentPath::constant(0.25, 0.0625, &[2.0]).unwrap();
        let noise = NoisePath::zeros(1, 64, 0.0625);
        let tr = simulate_mild(&sys, &xi, 4.0, &sp, &noise).unwrap();
        let z = tr.life_time.expect("x' = −x + x³ from 2 blows up");
        assert!(z < 1.0);
        assert!(tr.end_time() < z);
        assert!(tr.raw().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rejects_mismatched_grids() {
        let sp = spec(2);
        let sys = CoefficientSet::zero(2);
        let xi = SegmentPath::constant(0.5, 0.125, &[0.0, 0.0]).unwrap();
        assert!(simulate_mild(&sys, &xi, 1.0, &sp, &NoisePath::zeros(2, 8, 0.0625)).is_err());
        assert!(simulate_mild(&sys, &xi, 1.0, &sp, &NoisePath::zeros(2, 4, 0.125)).is_err());
        assert!(simulate_mild(&sys, &xi, 1.1, &sp, &NoisePath::zeros(2, 9, 0.125)).is_err());
    }

    #[test]
    fn truncation_levels_agree_up_to_tau_m() {
        let sp = spec(2);
        let b = DiniDrift { direction: vec![1.0, 0.0], center: vec![0.0, 0.0], active: 2, phi: crate::analysis::ModulusFunction::power(2.0, 0.5) };
        let base = CoefficientSet::new(2, Arc::new(b), Arc::new(LinearDelay { beta: 0.5 }), Arc::new(MultiplicativeNoise { q: vec![2.0, 2.0], kappa: 0.4 }));
        let dt = 1.0 / 64.0;
        let xi = SegmentPath::constant(0.25, dt, &[0.5, -0.5]).unwrap();
        for j in 0..20 {
            let noise = NoisePath::generate(23, j, 2, 192, dt);
            let m = 1.0;
            let a = simulate_mild(&truncate_coeffs(&base, TruncationScheme { level: m }), &xi, 3.0, &sp, &noise).unwrap();
            let b = simulate_mild(&truncate_coeffs(&base, TruncationScheme { level: m + 1.0 }), &xi, 3.0, &sp, &noise).unwrap();
            let tau = a.stopping_levels[&1];
            let last = a.index_of(tau).unwrap();
            for k in 0..=last {
                assert_eq!(a.row(k), b.row(k), "path {j} row {k}");
            }
        }
    }

    #[test]
    fn stopping_levels_are_monotone() {
        let sp = spec(2);
        let sys = CoefficientSet::new(2, Arc::new(ZeroDrift), Arc::new(ZeroDelay), Arc::new(DiagonalNoise { q: vec![3.0, 3.0] }));
        let xi = SegmentPath::constant(0.5, 0.0625, &[0.0, 0.0]).unwrap();
        for j in 0..100 {
            let noise = NoisePath::generate(5, j, 2, 64, 0.0625);
            let tr = simulate_mild(&sys, &xi, 4.0, &sp, &noise).unwrap();
            let taus: Vec<f64> = tr.stopping_levels.values().copied().collect();
            assert!(taus.windows(2).all(|w| w[0] <= w[1]));
            // oracle: direct scan for level 1
            let direct = (tr.delay_steps..tr.rows())
                .find(|&k| norm(tr.row(k)) >= 1.0)
                .map(|k| tr.time_of(k).min(1.0))
                .unwrap_or(1.0);
            assert_eq!(tr.stopping_levels[&1], direct);
        }
    }
}
