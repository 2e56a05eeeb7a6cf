//! Monte Carlo semigroup estimates and the log- and power-Harnack checks.
//!
//! All estimates for a pair `(ξ, η)` share noise paths, so residuals are
//! computed per path and their standard errors come from the paired samples
//! (delta method for the nonlinear pieces).

use serde::{Deserialize, Serialize};

use crate::analysis::Spectrum;
use crate::error::{Error, Result};
use crate::segment::{segment_norm, SegmentPath, SegmentView};
use crate::simulator::{mean_stderr, monte_carlo, simulate, NoisePath, SimOptions, System};

mod conjugation;

pub use conjugation::{conjugation_check, conjugation_sweep, ConjugationPoint, ConjugationSweep};

/// Bounded functionals on segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    /// `exp(⟨v, ξ(0)⟩ ∧ c)`
    ExpLinear { v: Vec<f64>, cap: f64 },
    /// `1 + tanh(‖ξ‖_∞)`
    TanhNorm,
    /// `floor + exp(−|ξ(0) − center|²/(2 width²))`, a smoothed indicator of a ball.
    Bump { center: Vec<f64>, width: f64, floor: f64 },
    /// `⟨v, ξ(0)⟩ + c`; affine, not necessarily positive, for mean checks.
    Affine { v: Vec<f64>, c: f64 },
    Constant { c: f64 },
}

impl TestFunction {
    pub fn eval(&self, seg: &SegmentView<'_>) -> f64 {
        let x0 = seg.last();
        let dot = |v: &[f64]| v.iter().zip(x0).map(|(a, b)| a * b).sum::<f64>();
        match self {
            Self::ExpLinear { v, cap } => dot(v).min(*cap).exp(),
            Self::TanhNorm => 1.0 + seg.sup_norm().tanh(),
            Self::Bump { center, width, floor } => {
                let d2: f64 = x0.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum();
                floor + (-d2 / (2.0 * width * width)).exp()
            }
            Self::Affine { v, c } => dot(v) + c,
            Self::Constant { c } => *c,
        }
    }

    /// Whether the function is strictly positive everywhere.
    pub fn positive(&self) -> bool {
        match self {
            Self::ExpLinear { .. } | Self::TanhNorm => true,
            Self::Bump { floor, .. } => *floor > 0.0,
            Self::Affine { v, c } => v.iter().all(|x| *x == 0.0) && *c > 0.0,
            Self::Constant { c } => *c > 0.0,
        }
    }

    /// Declared upper bound.
    pub fn cap(&self) -> f64 {
        match self {
            Self::ExpLinear { cap, .. } => cap.exp(),
            Self::TanhNorm => 2.0,
            Self::Bump { floor, .. } => floor + 1.0,
            Self::Affine { v, c } if v.iter().all(|x| *x == 0.0) => *c,
            Self::Affine { .. } => f64::INFINITY,
            Self::Constant { c } => *c,
        }
    }
}

/// The built-in battery of positive bounded test functions on `n` modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionSet {
    pub functions: Vec<TestFunction>,
}

impl TestFunctionSet {
    pub fn builtin(n: usize) -> Self {
        let mut v = vec![0.0; n];
        v[0] = 1.0;
        if n > 1 {
            v[1] = -0.5;
        }
        Self {
            functions: vec![
                TestFunction::ExpLinear { v, cap: 1.0 },
                TestFunction::TanhNorm,
                TestFunction::Bump { center: vec![0.0; n], width: 0.5, floor: 0.1 },
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Final segments `X_T^ξ` of `samples` paths from streams `0..samples` of `seed`.
fn final_segments(
    sys: &(impl System + ?Sized),
    spec: &Spectrum,
    xi: &SegmentPath,
    horizon: f64,
    samples: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let n = sys.dim();
    let dt = xi.grid_step;
    let steps = crate::segment::grid_steps(horizon, dt, "horizon")?;
    monte_carlo(samples, |j| {
        let noise = NoisePath::generate(seed, j, n, steps, dt);
        let sim = simulate(sys, xi, horizon, spec, &noise, SimOptions::default())?;
        let tr = &sim.trajectory;
        if let Some(t) = tr.life_time {
            return Err(Error::Explosion { time: t });
        }
        let last = tr.rows() - 1;
        Ok(tr.window(last).data.to_vec())
    })
}

fn view(data: &[f64], n: usize, dt: f64) -> SegmentView<'_> {
    SegmentView { dim: n, grid_step: dt, data }
}

fn check_horizon(xi: &SegmentPath, horizon: f64) -> Result<()> {
    if !(horizon > xi.r) {
        return Err(Error::input(format!("Harnack estimates need T > r, got T = {horizon}, r = {}", xi.r)));
    }
    Ok(())
}

/// `P_T f(ξ) = E f(X_T^ξ)` by Monte Carlo; any exploding path is an error.
pub fn estimate_semigroup(
    sys: &(impl System + ?Sized),
    spec: &Spectrum,
    xi: &SegmentPath,
    f: &TestFunction,
    horizon: f64,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    check_horizon(xi, horizon)?;
    let segs = final_segments(sys, spec, xi, horizon, samples, seed)?;
    let vals: Vec<f64> = segs.iter().map(|s| f.eval(&view(s, xi.dim(), xi.grid_step))).collect();
    let (mean, stderr) = mean_stderr(&vals);
    Ok(Estimate { mean, stderr })
}

/// `|ξ(0) − η(0)|²/(T − r) + ‖ξ − η‖²_∞`.
pub fn pair_distance(xi: &SegmentPath, eta: &SegmentPath, horizon: f64) -> Result<f64> {
    check_horizon(xi, horizon)?;
    let diff = xi.sub(eta)?;
    let d0: f64 = diff.last().iter().map(|v| v * v).sum();
    Ok(d0 / (horizon - xi.r) + segment_norm(&diff)?.powi(2))
}

/// Per-path values `f(X_T^ξ)` and `f(X_T^η)` on common noise.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSamples {
    pub f_xi: Vec<f64>,
    pub f_eta: Vec<f64>,
    /// `|ξ(0) − η(0)|²/(T − r) + ‖ξ − η‖²_∞`
    pub distance: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn pair_samples(
    sys: &(impl System + ?Sized),
    spec: &Spectrum,
    xi: &SegmentPath,
    eta: &SegmentPath,
    f: &TestFunction,
    horizon: f64,
    samples: usize,
    seed: u64,
) -> Result<PairSamples> {
    if !f.positive() {
        return Err(Error::input("Harnack residuals need a strictly positive test function"));
    }
    let distance = pair_distance(xi, eta, horizon)?;
    let (n, dt) = (xi.dim(), xi.grid_step);
    let eval = |segs: Vec<Vec<f64>>| segs.iter().map(|s| f.eval(&view(s, n, dt))).collect::<Vec<_>>();
    let f_xi = eval(final_segments(sys, spec, xi, horizon, samples, seed)?);
    let f_eta = eval(final_segments(sys, spec, eta, horizon, samples, seed)?);
    Ok(PairSamples { f_xi, f_eta, distance })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// `log P_T f(ξ) + C·D − P_T log f(η)` with its paired standard error.
pub fn log_harnack_residual(s: &PairSamples, c: f64) -> Estimate {
    let m = mean(&s.f_xi);
    let z: Vec<f64> = s.f_xi.iter().zip(&s.f_eta).map(|(a, b)| a / m - b.ln()).collect();
    let (_, stderr) = mean_stderr(&z);
    let lhs: f64 = mean(&s.f_eta.iter().map(|v| v.ln()).collect::<Vec<_>>());
    Estimate { mean: m.ln() + c * s.distance - lhs, stderr }
}

/// Smallest `C ≥ 0` closing the log-Harnack inequality on these samples.
pub fn log_harnack_required(s: &PairSamples) -> f64 {
    let gap = -log_harnack_residual(s, 0.0).mean;
    if s.distance > 0.0 {
        (gap / s.distance).max(0.0)
    } else {
        0.0
    }
}

/// `(P_T f^p(ξ))^{1/p} exp(C(p)(1 + D)) − P_T f(η)` with its paired standard error.
pub fn power_harnack_residual(s: &PairSamples, p: f64, c: f64, k: f64) -> Result<Estimate> {
    if !(p > (1.0 + k).powi(2)) {
        return Err(Error::input(format!(
            "the power-Harnack inequality needs p > (1 + K)² = {}, got p = {p}",
            (1.0 + k).powi(2)
        )));
    }
    let fp: Vec<f64> = s.f_xi.iter().map(|v| v.powf(p)).collect();
    let m = mean(&fp);
    let e = (c * (1.0 + s.distance)).exp();
    let slope = m.powf(1.0 / p - 1.0) / p * e;
    let z: Vec<f64> = fp.iter().zip(&s.f_eta).map(|(a, b)| slope * a - b).collect();
    let (_, stderr) = mean_stderr(&z);
    Ok(Estimate { mean: m.powf(1.0 / p) * e - mean(&s.f_eta), stderr })
}

/// Smallest `C(p) ≥ 0` closing the power-Harnack inequality on these samples.
pub fn power_harnack_required(s: &PairSamples, p: f64) -> f64 {
    let m = mean(&s.f_xi.iter().map(|v| v.powf(p)).collect::<Vec<_>>());
    ((mean(&s.f_eta) / m.powf(1.0 / p)).ln() / (1.0 + s.distance)).max(0.0)
}

/// One pair's residuals at the fitted constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResidual {
    pub pair: usize,
    pub function: usize,
    pub holdout: bool,
    pub distance: f64,
    pub log_residual: Estimate,
    /// One entry per `p` of the grid.
    pub power_residuals: Vec<Estimate>,
}

impl PairResidual {
    pub fn log_ok(&self) -> bool {
        self.log_residual.mean >= -3.0 * self.log_residual.stderr
    }

    pub fn power_ok(&self) -> bool {
        self.power_residuals.iter().all(|e| e.mean >= -3.0 * e.stderr)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackReport {
    pub horizon: f64,
    pub r: f64,
    pub samples: usize,
    pub seed: u64,
    /// `K = K₂K₃` of the transformed system.
    pub k: f64,
    pub p_grid: Vec<f64>,
    pub c_log: f64,
    pub c_power: Vec<f64>,
    pub residuals: Vec<PairResidual>,
    /// Jensen sanity `P log f(ξ) ≤ log P f(ξ) + 3 stderr` held for every estimate.
    pub jensen_ok: bool,
    pub log_holdout_ok: bool,
    pub power_holdout_ok: bool,
    /// Fitted `C(p)` is non-increasing along the grid.
    pub power_monotone: bool,
}

impl HarnackReport {
    pub fn write_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        write!(w, "pair,function,holdout,distance,log_residual,log_stderr")?;
        for p in &self.p_grid {
            write!(w, ",power_residual_p{p},power_stderr_p{p}")?;
        }
        writeln!(w)?;
        for r in &self.residuals {
            write!(w, "{},{},{},{},{},{}", r.pair, r.function, r.holdout, r.distance, r.log_residual.mean, r.log_residual.stderr)?;
            for e in &r.power_residuals {
                write!(w, ",{},{}", e.mean, e.stderr)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// `{1.1, 1.5, 2.0}·(1 + K)²`.
pub fn p_grid(k: f64) -> Vec<f64> {
    [1.1, 1.5, 2.0].iter().map(|m| m * (1.0 + k).powi(2)).collect()
}

/// Fit `C` and `C(p)` on the training pairs, then evaluate residuals on every pair.
///
/// `pairs` are `(ξ, η, holdout)`; all estimates use `samples` paths from `seed`.
#[allow(clippy::too_many_arguments)]
pub fn harnack_campaign(
    sys: &(impl System + ?Sized),
    spec: &Spectrum,
    pairs: &[(SegmentPath, SegmentPath, bool)],
    functions: &TestFunctionSet,
    horizon: f64,
    k: f64,
    samples: usize,
    seed: u64,
) -> Result<HarnackReport> {
    let r = pairs.first().map_or(0.0, |p| p.0.r);
    let ps = p_grid(k);
    if let Some(f) = functions.functions.iter().find(|f| !f.positive()) {
        return Err(Error::input(format!("Harnack residuals need strictly positive test functions, got {f:?}")));
    }
    let mut table = Vec::new();
    for (i, (xi, eta, hold)) in pairs.iter().enumerate() {
        let distance = pair_distance(xi, eta, horizon)?;
        let (n, dt) = (xi.dim(), xi.grid_step);
        let sx = final_segments(sys, spec, xi, horizon, samples, seed)?;
        let se = final_segments(sys, spec, eta, horizon, samples, seed)?;
        for (fi, f) in functions.functions.iter().enumerate() {
            let eval = |segs: &[Vec<f64>]| segs.iter().map(|s| f.eval(&view(s, n, dt))).collect::<Vec<_>>();
            table.push((i, fi, *hold, PairSamples { f_xi: eval(&sx), f_eta: eval(&se), distance }));
        }
    }
    let train = || table.iter().filter(|t| !t.2);
    let c_log = train().map(|t| log_harnack_required(&t.3)).fold(0.0, f64::max);
    let c_power: Vec<f64> = ps.iter().map(|&p| train().map(|t| power_harnack_required(&t.3, p)).fold(0.0, f64::max)).collect();
    let mut residuals = Vec::new();
    let mut jensen_ok = true;
    for (pair, function, holdout, s) in &table {
        // ξ against itself on the same paths: P log f ≤ log P f
        let own = PairSamples { f_xi: s.f_xi.clone(), f_eta: s.f_xi.clone(), distance: 0.0 };
        let j = log_harnack_residual(&own, 0.0);
        jensen_ok &= j.mean >= -3.0 * j.stderr;
        let power_residuals = ps.iter().zip(&c_power).map(|(&p, &c)| power_harnack_residual(s, p, c, k)).collect::<Result<_>>()?;
        residuals.push(PairResidual {
            pair: *pair,
            function: *function,
            holdout: *holdout,
            distance: s.distance,
            log_residual: log_harnack_residual(s, c_log),
            power_residuals,
        });
    }
    let held = || residuals.iter().filter(|r| r.holdout);
    Ok(HarnackReport {
        horizon,
        r,
        samples,
        seed,
        k,
        log_holdout_ok: held().all(|r| r.log_ok()),
        power_holdout_ok: held().all(|r| r.power_ok()),
        power_monotone: c_power.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-15),
        p_grid: ps,
        c_log,
        c_power,
        residuals,
        jensen_ok,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;
    use crate::simulator::{CoefficientSet, DiagonalNoise, TanhDelay, ZeroDelay, ZeroDrift};

    fn spec() -> Spectrum {
        Spectrum::power_law(1.0, 2.0, 2, 0.4).unwrap()
    }

    fn ou() -> CoefficientSet {
        CoefficientSet::new(2, Arc::new(ZeroDrift), Arc::new(ZeroDelay), Arc::new(DiagonalNoise { q: vec![1.0, 0.5] }))
    }

    fn seg(x: &[f64]) -> SegmentPath {
        SegmentPath::constant(0.25, 0.0625, x).unwrap()
    }

    #[test]
    fn constant_function_has_no_error() {
        let e = estimate_semigroup(&ou(), &spec(), &seg(&[0.1, 0.2]), &TestFunction::Constant { c: 1.0 }, 1.0, 50, 1).unwrap();
        assert_eq!((e.mean, e.stderr), (1.0, 0.0));
    }

    #[test]
    fn affine_mean_matches_gaussian_closed_form() {
        // b = B = 0: E X_T = e^{AT} ξ(0)
        let (v, c, t) = ([1.0, -2.0], 0.5, 1.0);
        let x0 = [0.8, 0.3];
        let f = TestFunction::Affine { v: v.to_vec(), c };
        let e = estimate_semigroup(&ou(), &spec(), &seg(&x0), &f, t, 4000, 7).unwrap();
        let lam = spec().eigenvalues().to_vec();
        let exact = c + (0..2).map(|i| v[i] * (-lam[i] * t).exp() * x0[i]).sum::<f64>();
        assert!((e.mean - exact).abs() < 3.0 * e.stderr, "{} vs {exact} ± {}", e.mean, e.stderr);
    }

    #[test]
    fn disjoint_seeds_agree() {
        let f = TestFunction::TanhNorm;
        let a = estimate_semigroup(&ou(), &spec(), &seg(&[0.5, 0.0]), &f, 1.0, 2000, 11).unwrap();
        let b = estimate_semigroup(&ou(), &spec(), &seg(&[0.5, 0.0]), &f, 1.0, 2000, 12).unwrap();
        assert!((a.mean - b.mean).abs() < 3.0 * a.stderr.hypot(b.stderr));
        assert_ne!(a.mean, b.mean);
    }

    #[test]
    fn horizon_must_exceed_delay() {
        let e = estimate_semigroup(&ou(), &spec(), &seg(&[0.0, 0.0]), &TestFunction::TanhNorm, 0.25, 10, 1);
        assert!(matches!(e, Err(Error::Input(_))));
    }

    #[test]
    fn power_residual_enforces_exponent_bound() {
        let s = PairSamples { f_xi: vec![1.0, 2.0], f_eta: vec![1.0, 2.0], distance: 0.0 };
        assert!(power_harnack_residual(&s, 4.0, 0.0, 1.0).is_err());
        assert!(power_harnack_residual(&s, 4.01, 0.0, 1.0).is_ok());
    }

    #[test]
    fn unit_function_residuals_are_exact() {
        let s = PairSamples { f_xi: vec![1.0; 8], f_eta: vec![1.0; 8], distance: 0.7 };
        let l = log_harnack_residual(&s, 2.0);
        assert_eq!((l.mean, l.stderr), (1.4, 0.0));
        let p = power_harnack_residual(&s, 5.0, 0.3, 1.0).unwrap();
        assert!((p.mean - (0.3_f64 * 1.7).exp_m1()).abs() < 1e-15);
    }

    #[test]
    fn jensen_case_on_simulated_paths() {
        let sys = CoefficientSet::new(
            2,
            Arc::new(ZeroDrift),
            Arc::new(TanhDelay { beta: 0.5, direction: vec![1.0, 0.0] }),
            Arc::new(DiagonalNoise { q: vec![1.0, 1.0] }),
        );
        let xi = seg(&[0.4, -0.1]);
        for f in TestFunctionSet::builtin(2).functions {
            let s = pair_samples(&sys, &spec(), &xi, &xi, &f, 1.0, 500, 5).unwrap();
            let l = log_harnack_residual(&s, 0.0);
            assert!(l.mean >= -3.0 * l.stderr);
            let p = power_harnack_residual(&s, 2.0, 0.0, 0.0).unwrap();
            assert!(p.mean >= -3.0 * p.stderr);
        }
    }

    #[test]
    fn log_residual_bound_is_monotone_in_horizon() {
        let (xi, eta) = (seg(&[0.4, 0.0]), seg(&[0.1, 0.2]));
        let ds: Vec<f64> = [0.5, 1.0, 2.0, 4.0].iter().map(|t| pair_distance(&xi, &eta, *t).unwrap()).collect();
        assert!(ds.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn required_constant_closes_training_pairs() {
        let eta = seg(&[0.0, 0.0]);
        let f = TestFunction::ExpLinear { v: vec![1.0, 0.0], cap: 1.0 };
        for d in [0.2, 0.6] {
            let s = pair_samples(&ou(), &spec(), &seg(&[d, 0.0]), &eta, &f, 1.0, 400, 9).unwrap();
            let c = log_harnack_required(&s);
            assert!(log_harnack_residual(&s, c).mean >= -1e-12);
            let cp = power_harnack_required(&s, 3.0);
            assert!(power_harnack_residual(&s, 3.0, cp, 0.5).unwrap().mean >= -1e-12);
        }
    }

    #[test]
    fn residual_gap_grows_with_pair_distance() {
        // Holding f and C fixed, the uncorrected gap log P f(ξ) − P log f(η) moves away
        // from the Jensen value as η moves away from ξ.
        let xi = seg(&[0.0, 0.0]);
        let f = TestFunction::ExpLinear { v: vec![1.0, 0.0], cap: 3.0 };
        let gaps: Vec<f64> = [0.05, 0.2, 0.8]
            .iter()
            .map(|d| {
                let s = pair_samples(&ou(), &spec(), &xi, &seg(&[*d, 0.0]), &f, 1.0, 400, 2).unwrap();
                -log_harnack_residual(&s, 0.0).mean
            })
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] > w[0]), "{gaps:?}");
    }

    #[test]
    fn report_csv_has_a_row_per_pair_and_function() {
        let pairs: Vec<_> = [(0.1, false), (0.3, true)].iter().map(|(d, h)| (seg(&[*d, 0.0]), seg(&[0.0, 0.0]), *h)).collect();
        let rep = harnack_campaign(&ou(), &spec(), &pairs, &TestFunctionSet::builtin(2), 1.0, 0.1, 200, 4).unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 2 * 3);
        assert!(rep.jensen_ok);
        let back: HarnackReport = serde_json::from_str(&serde_json::to_string(&rep).unwrap()).unwrap();
        assert_eq!(back, rep);
    }

    proptest! {
        #[test]
        fn builtins_are_positive_and_capped(x in prop::collection::vec(-50.0..50.0f64, 8)) {
            let v = SegmentView { dim: 2, grid_step: 0.25, data: &x };
            for f in TestFunctionSet::builtin(2).functions {
                let y = f.eval(&v);
                prop_assert!(f.positive() && y > 0.0 && y <= f.cap() * (1.0 + 1e-12));
            }
        }

        #[test]
        fn log_residual_is_affine_in_constant(c in 0.0..5.0f64, d in 0.0..3.0f64) {
            let s = PairSamples { f_xi: vec![1.5, 0.5, 2.0], f_eta: vec![1.0, 0.7, 1.1], distance: d };
            let r0 = log_harnack_residual(&s, 0.0).mean;
            prop_assert!((log_harnack_residual(&s, c).mean - r0 - c * d).abs() < 1e-12);
        }
    }
}
