//! Membership checks for the modulus class 𝒟, the weight classes 𝒜 and 𝒜′,
//! and the trace-class condition on the spectrum.
//!
//! Every check reduces its improper integral to a half-line and hands it to
//! [`half_line_integral`], so verdicts are reproducible bit for bit.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::quadrature::{graded_from_singularity, half_line_integral, Convergence, GaussLegendre};
use super::spectrum::{GrowthLaw, Spectrum};
use crate::error::{Error, Result};

/// Range limit of the half-line variable. `e^{512}` is still a finite double.
pub const U_MAX: f64 = 512.0;
/// Relative truncation tolerance for the window engine.
pub const WINDOW_TOL: f64 = 1e-10;
/// Grid size and range used for the shape tests on φ.
pub const SHAPE_GRID_POINTS: usize = 200;
pub const SHAPE_GRID_MIN: f64 = 1e-8;
/// Concavity/monotonicity slack, relative to the largest sampled value.
pub const SHAPE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Indeterminate,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub grid: String,
    pub quadrature_error: f64,
    pub windows: usize,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassReport {
    /// `None` when the integral was judged divergent.
    pub integral_value: Option<f64>,
    pub tail_bound: f64,
    pub verdict: Verdict,
    /// Set when the verdict rests on sampled data without a closed-form tail law.
    pub empirical: bool,
    pub diagnostics: Diagnostics,
}

impl ClassReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulusClass {
    Dini,
    Generic,
}

/// A modulus of continuity `φ: [0, ∞) → [0, ∞)`.
#[derive(Clone)]
pub struct ModulusFunction {
    name: String,
    f: ScalarFn,
    pub declared_class: ModulusClass,
}

impl fmt::Debug for ModulusFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ModulusFunction({})", self.name)
    }
}

impl ModulusFunction {
    pub fn new(name: impl Into<String>, declared_class: ModulusClass, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), f: Arc::new(f), declared_class }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, s: f64) -> f64 {
        (self.f)(s)
    }

    /// `k·s^α`
    pub fn power(k: f64, alpha: f64) -> Self {
        Self::new(format!("{k}*s^{alpha}"), ModulusClass::Dini, move |s| k * s.max(0.0).powf(alpha))
    }

    /// `K / log^{1+δ}(c + 1/s)`, with `φ(0) = 0`.
    pub fn log_dini(k: f64, delta: f64, c: f64) -> Self {
        Self::new(format!("{k}/log^(1+{delta})({c}+1/s)"), ModulusClass::Dini, move |s| {
            if s <= 0.0 {
                0.0
            } else {
                k / (c + 1.0 / s).ln().powf(1.0 + delta)
            }
        })
    }

    /// `1 / log(e + 1/s)`: continuous but not Dini.
    pub fn log_harmonic() -> Self {
        Self::new("1/log(e+1/s)", ModulusClass::Generic, |s| {
            if s <= 0.0 {
                0.0
            } else {
                1.0 / (std::f64::consts::E + 1.0 / s).ln()
            }
        })
    }

    pub fn scaled(&self, kappa: f64) -> Self {
        let inner = self.f.clone();
        Self::new(format!("{kappa}*({})", self.name), self.declared_class, move |s| kappa * inner(s))
    }
}

#[derive(Clone, Debug)]
pub enum WeightClass {
    A,
    APrime,
    /// `a ≥ a₁` for large arguments with `a₁ ∈ 𝒜′`.
    DominatedBy(Box<WeightFunction>),
}

/// A weight `a: (0, ∞) → (0, ∞)`.
#[derive(Clone)]
pub struct WeightFunction {
    name: String,
    f: ScalarFn,
    pub declared_class: WeightClass,
}

impl fmt::Debug for WeightFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WeightFunction({})", self.name)
    }
}

impl WeightFunction {
    pub fn new(name: impl Into<String>, declared_class: WeightClass, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), f: Arc::new(f), declared_class }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    /// `x^δ`
    pub fn power(delta: f64) -> Self {
        Self::new(format!("x^{delta}"), WeightClass::APrime, move |x| x.powf(delta))
    }

    /// `log^{1+δ}(c + x)`
    pub fn log_power(delta: f64, c: f64) -> Self {
        Self::new(format!("log^(1+{delta})({c}+x)"), WeightClass::APrime, move |x| (c + x).ln().powf(1.0 + delta))
    }

    /// `x^δ (sin x + 2)`, declared in 𝒜 through domination by `x^δ`.
    pub fn oscillating_power(delta: f64) -> Self {
        Self::new(
            format!("x^{delta}(sin x+2)"),
            WeightClass::DominatedBy(Box::new(Self::power(delta))),
            move |x| x.powf(delta) * (x.sin() + 2.0),
        )
    }

    /// `x^δ log(e + x)`, a faster-growing member of 𝒜′ for `δ ≥ 1/2`.
    pub fn power_log(delta: f64) -> Self {
        Self::new(format!("x^{delta}log(e+x)"), WeightClass::APrime, move |x| {
            x.powf(delta) * (std::f64::consts::E + x).ln()
        })
    }

    /// `(1 + x)^δ`
    pub fn shifted_power(delta: f64) -> Self {
        Self::new(format!("(1+x)^{delta}"), WeightClass::APrime, move |x| (1.0 + x).powf(delta))
    }

    /// Weights shipped with the library, all declared in 𝒜′ or dominated by a member of it.
    pub fn library() -> Vec<WeightFunction> {
        let e2 = std::f64::consts::E.powi(2);
        vec![
            Self::power(1.0),
            Self::power(0.5),
            Self::power(0.25),
            Self::log_power(1.0, e2),
            Self::log_power(0.5, std::f64::consts::E.powf(1.5)),
            Self::power_log(0.5),
            Self::shifted_power(0.75),
            Self::oscillating_power(0.5),
        ]
    }
}

fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let r = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|k| if k + 1 == n { hi } else { lo * (r * k as f64).exp() }).collect()
}

fn integral_report(r: &super::quadrature::HalfLineIntegral, grid: String, mut notes: Vec<String>, shape_ok: bool) -> ClassReport {
    let (integral_value, verdict) = match r.outcome {
        Convergence::Converged if shape_ok => (Some(r.value), Verdict::Pass),
        Convergence::Converged => (Some(r.value), Verdict::Fail),
        Convergence::Divergent => (None, Verdict::Fail),
        Convergence::Indeterminate => {
            notes.push("window contributions neither decayed nor stalled".into());
            (None, Verdict::Indeterminate)
        }
    };
    ClassReport {
        integral_value,
        tail_bound: r.tail_bound,
        verdict,
        empirical: false,
        diagnostics: Diagnostics { grid, quadrature_error: r.quadrature_error, windows: r.windows.len(), notes },
    }
}

/// Check `φ ∈ 𝒟`: non-decreasing, `φ²` concave, `∫_0^1 φ(s)/s ds < ∞`.
pub fn dini_check(phi: &ModulusFunction, tol: f64) -> Result<ClassReport> {
    let grid = geometric_grid(SHAPE_GRID_MIN, 1.0, SHAPE_GRID_POINTS);
    let vals: Vec<f64> = grid.iter().map(|&s| phi.eval(s)).collect();
    if let Some(k) = vals.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::input(format!("φ({}) = {} is not a finite non-negative value", grid[k], vals[k])));
    }
    let sq: Vec<f64> = vals.iter().map(|v| v * v).collect();
    let scale_v = vals.iter().fold(0.0_f64, |m, &v| m.max(v));
    let scale_sq = scale_v * scale_v;
    let mut notes = Vec::new();
    let monotone = vals.windows(2).all(|w| w[1] >= w[0] - SHAPE_TOL * scale_v);
    if !monotone {
        notes.push("φ decreases on the sampled grid".into());
    }
    // Chord test on consecutive triples: the middle value must lie on or above the chord.
    let concave = (1..grid.len() - 1).all(|k| {
        let (a, m, b) = (grid[k - 1], grid[k], grid[k + 1]);
        let w = (m - a) / (b - a);
        let chord = (1.0 - w) * sq[k - 1] + w * sq[k + 1];
        sq[k] >= chord - SHAPE_TOL * scale_sq
    });
    if !concave {
        notes.push("φ² fails the chord test on the sampled grid".into());
    }
    let integrand = |u: f64| phi.eval((-u).exp());
    let r = half_line_integral(integrand, tol, U_MAX);
    let grid_desc = format!("geometric {SHAPE_GRID_POINTS} points on [{SHAPE_GRID_MIN:e}, 1]; s = e^-u, u ≤ {U_MAX}");
    Ok(integral_report(&r, grid_desc, notes, monotone && concave))
}

/// `sup_i λ_i e^{−λ_i s} / a(λ_i)` over the whole spectrum.
///
/// Stored modes are scanned while `λ_i ≤ 10/s`. Beyond storage the growth
/// law is sampled on a geometric index grid up to `λ > 10/s`, and the best
/// sample is refined locally.
pub fn spectral_envelope(spec: &Spectrum, a: &WeightFunction, s: f64) -> Result<(f64, bool)> {
    let cutoff = 10.0 / s;
    let term = |l: f64| l * (-l * s).exp() / a.eval(l);
    let mut best = 0.0_f64;
    for &l in spec.eigenvalues() {
        best = best.max(term(l));
        if l > cutoff {
            return Ok((best, false));
        }
    }
    let Some(law) = spec.growth_law() else {
        return Ok((best, true));
    };
    let i0 = spec.n_modes() as f64 + 1.0;
    let i1 = law.inverse(cutoff).max(i0) * 1.01 + 1.0;
    let samples = 160;
    let ratio = (i1 / i0).ln() / samples as f64;
    let snap = |i: f64| if i < 1e15 { i.round().max(i0) } else { i };
    let mut best_i = i0;
    for k in 0..=samples {
        let i = snap(i0 * (ratio * k as f64).exp());
        let v = term(law.eval(i));
        if v > best {
            best = v;
            best_i = i;
        }
    }
    // local refinement around the best geometric sample
    let span = (ratio.exp() - 1.0) * best_i;
    for k in -40..=40 {
        let i = snap((best_i + span * k as f64 / 40.0).max(i0));
        let v = term(law.eval(i));
        best = best.max(v);
    }
    Ok((best, false))
}

fn weight_positive_on(a: &WeightFunction, grid: &[f64]) -> Result<()> {
    for &x in grid {
        let v = a.eval(x);
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::input(format!("weight {} is not positive at x = {x} (value {v})", a.name())));
        }
    }
    Ok(())
}

/// The 𝒜′ conditions: `a` and `x/a(x)` non-decreasing, `∫_1^∞ ds/(s a(s)) < ∞`.
pub fn a_prime_check(a: &WeightFunction, lo: f64) -> Result<ClassReport> {
    let grid = geometric_grid(lo.min(1.0), 1e12, 400);
    weight_positive_on(a, &grid)?;
    let vals: Vec<f64> = grid.iter().map(|&x| a.eval(x)).collect();
    let ratio: Vec<f64> = grid.iter().zip(&vals).map(|(&x, &v)| x / v).collect();
    let rel = |w: &[f64]| w[1] >= w[0] * (1.0 - SHAPE_TOL);
    let mut notes = Vec::new();
    let mono_a = vals.windows(2).all(rel);
    let mono_r = ratio.windows(2).all(rel);
    if !mono_a {
        notes.push("a decreases on the log grid".into());
    }
    if !mono_r {
        notes.push("x/a(x) decreases on the log grid".into());
    }
    let r = half_line_integral(|u| 1.0 / a.eval(u.exp()), WINDOW_TOL, U_MAX);
    let desc = format!("log grid 400 points on [{}, 1e12]; s = e^u, u ≤ {U_MAX}", lo.min(1.0));
    Ok(integral_report(&r, desc, notes, mono_a && mono_r))
}

/// The 𝒜 integral `∫_0^1 sup_i λ_i e^{−λ_i s}/a(λ_i) ds`.
pub fn a_integral_check(a: &WeightFunction, spec: &Spectrum) -> Result<ClassReport> {
    let lambda_1 = spec.eigenvalues().first().copied().ok_or_else(|| Error::input("empty spectrum"))?;
    weight_positive_on(a, &geometric_grid(lambda_1, 1e12, 100))?;
    let mut empirical = false;
    let mut err = None;
    let r = half_line_integral(
        |u| {
            let s = (-u).exp();
            match spectral_envelope(spec, a, s) {
                Ok((v, emp)) => {
                    empirical |= emp;
                    s * v
                }
                Err(e) => {
                    err.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        WINDOW_TOL,
        U_MAX,
    );
    if let Some(e) = err {
        return Err(e);
    }
    let mut rep = integral_report(&r, format!("s = e^-u, u ≤ {U_MAX}; spectral scan to λ > 10/s"), Vec::new(), true);
    if empirical {
        rep.empirical = true;
        rep.verdict = Verdict::Indeterminate;
        rep.diagnostics.notes.push("spectrum has no growth law; sup truncated at the stored modes".into());
    }
    Ok(rep)
}

/// Class membership according to the declared class of `a`.
///
/// * 𝒜′: the 𝒜′ conditions, with the 𝒜 integral reported alongside.
/// * 𝒜: the 𝒜 integral.
/// * dominated: `a ≥ a₁` on `[R₀, ∞)` sampled on a log grid, and `a₁ ∈ 𝒜′`.
pub fn weight_class_check(a: &WeightFunction, spec: &Spectrum) -> Result<ClassReport> {
    let lambda_1 = spec.eigenvalues().first().copied().ok_or_else(|| Error::input("empty spectrum"))?;
    match &a.declared_class {
        WeightClass::APrime => {
            let mut rep = a_prime_check(a, lambda_1)?;
            let direct = a_integral_check(a, spec)?;
            rep.diagnostics.notes.push(format!("A integral: {:?}", direct.integral_value));
            Ok(rep)
        }
        WeightClass::A => a_integral_check(a, spec),
        WeightClass::DominatedBy(a1) => {
            let dominating = a_prime_check(a1, lambda_1)?;
            let r0 = 1.0;
            let grid = geometric_grid(r0, 1e12, 2000);
            weight_positive_on(a, &grid)?;
            let dominated = grid.iter().all(|&x| a.eval(x) >= a1.eval(x) * (1.0 - SHAPE_TOL));
            let mut rep = a_integral_check(a, spec)?;
            rep.diagnostics.notes.push(format!("dominating weight {}: {:?}", a1.name(), dominating.verdict));
            if !dominated {
                rep.diagnostics.notes.push(format!("{} < {} somewhere on [1, 1e12]", a.name(), a1.name()));
            }
            rep.verdict = if dominated && dominating.passed() { Verdict::Pass } else { Verdict::Fail };
            Ok(rep)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceReport {
    pub class: ClassReport,
    /// `γ(1−ε)` for power laws.
    pub tail_exponent: Option<f64>,
    /// `Σ_{i≤n} λ_i^{ε−1}` over stored modes.
    pub partial_sum: f64,
    /// `∫_0^s t^{−ε}‖S(t)‖²_HS dt` (α = ε/2), stored modes plus power-law tail.
    pub hs_integral: f64,
    /// `Σ_i λ_i^{ε−1}·∫_0^∞ u^{−ε}e^{−2u}du`, the closed-form upper bound.
    pub hs_bound: f64,
}

/// `∫_0^s t^{−2α} e^{−2λt} dt = (2λ)^{2α−1} γ(1−2α, 2λs)`.
pub fn hs_mode_integral(lambda: f64, alpha: f64, s: f64) -> f64 {
    let a = 1.0 - 2.0 * alpha;
    (2.0 * lambda).powf(-a) * statrs::function::gamma::gamma(a) * statrs::function::gamma::gamma_lr(a, 2.0 * lambda * s)
}

/// `∫_0^s t^{−2α} Σ_{i≤n} e^{−2λ_i t} dt` over the stored modes only.
pub fn hs_integral_stored(spec: &Spectrum, alpha: f64, s: f64) -> f64 {
    spec.eigenvalues().iter().map(|&l| hs_mode_integral(l, alpha, s)).sum()
}

/// Trace-class condition `Σ λ_i^{ε−1} < ∞` and the HS integral of the semigroup at `s`.
pub fn trace_class_check(spec: &Spectrum, s: f64) -> Result<TraceReport> {
    if !(s > 0.0) {
        return Err(Error::input("HS integral needs s > 0"));
    }
    let eps = spec.trace_exponent();
    let alpha = eps / 2.0;
    let n = spec.n_modes();
    let partial_sum: f64 = spec.eigenvalues().iter().map(|l| l.powf(eps - 1.0)).sum();
    let stored = hs_integral_stored(spec, alpha, s);
    let g = statrs::function::gamma::gamma(1.0 - eps) * 2f64.powf(eps - 1.0);
    match spec.growth_law() {
        Some(GrowthLaw::PowerLaw { c, gamma }) => {
            let tail_exponent = gamma * (1.0 - eps);
            let pass = tail_exponent > 1.0;
            // Σ_{i>n} λ_i^{ε−1} ≤ ∫_n^∞ (c x^γ)^{ε−1} dx
            let tail_sum = if pass {
                c.powf(eps - 1.0) * (n as f64).powf(1.0 - tail_exponent) / (tail_exponent - 1.0)
            } else {
                f64::INFINITY
            };
            let hs_integral = stored + g * tail_sum;
            let hs_bound = g * (partial_sum + tail_sum);
            let class = ClassReport {
                integral_value: pass.then_some(hs_integral),
                tail_bound: g * tail_sum,
                verdict: if pass { Verdict::Pass } else { Verdict::Fail },
                empirical: false,
                diagnostics: Diagnostics {
                    grid: format!("{n} stored modes + power-law tail"),
                    quadrature_error: 0.0,
                    windows: 0,
                    notes: vec![format!("γ(1−ε) = {tail_exponent}")],
                },
            };
            Ok(TraceReport { class, tail_exponent: Some(tail_exponent), partial_sum, hs_integral, hs_bound })
        }
        None => {
            let class = ClassReport {
                integral_value: Some(stored),
                tail_bound: f64::INFINITY,
                verdict: Verdict::Indeterminate,
                empirical: true,
                diagnostics: Diagnostics {
                    grid: format!("{n} stored modes"),
                    quadrature_error: 0.0,
                    windows: 0,
                    notes: vec!["no growth law; partial sums only".into()],
                },
            };
            Ok(TraceReport { class, tail_exponent: None, partial_sum, hs_integral: stored, hs_bound: g * partial_sum })
        }
    }
}

/// `∫_0^T sup_i w(λ_i) e^{−λ_i s} ds` for a weight `w`; used by the resolvent certification.
pub fn weighted_semigroup_integral(spec: &Spectrum, t_end: f64, w: impl Fn(f64) -> f64) -> f64 {
    let rule = GaussLegendre::new(12);
    let sup = |s: f64| {
        let mut best = 0.0_f64;
        let cutoff = 10.0 / s;
        let mut i = 1usize;
        while let Some(l) = spec.lambda(i) {
            best = best.max(w(l) * (-l * s).exp());
            if l > cutoff || i > 10_000_000 {
                break;
            }
            i += 1;
        }
        best
    };
    // singular like s^{-1/2} at s = 0
    graded_from_singularity(&rule, t_end, 30, 0.5, sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn e2() -> f64 {
        std::f64::consts::E.powi(2)
    }

    #[test]
    fn sqrt_modulus_integrates_to_two() {
        let r = dini_check(&ModulusFunction::power(1.0, 0.5), WINDOW_TOL).unwrap();
        assert!(r.passed());
        assert_relative_eq!(r.integral_value.unwrap(), 2.0, max_relative = 1e-8);
    }

    #[test]
    fn log_dini_example_passes() {
        let r = dini_check(&ModulusFunction::log_dini(1.0, 1.0, e2()), WINDOW_TOL).unwrap();
        assert!(r.passed(), "{r:?}");
        // ∫_0^1 φ(s)/s ds = ∫_0^∞ du / log²(e²+e^u) is bounded by ∫_0^∞ du / max(2,u)² = 1/2 + 1/2
        let v = r.integral_value.unwrap();
        assert!(v > 0.0 && v + r.tail_bound <= 1.0, "{v}");
    }

    #[test]
    fn log_harmonic_modulus_diverges() {
        let r = dini_check(&ModulusFunction::log_harmonic(), WINDOW_TOL).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert!(r.integral_value.is_none());
        // oracle: ∫_{e^{-N}}^1 φ(s)/s ds = ∫_0^N du/log(e+e^u) keeps growing like log N
        let rule = GaussLegendre::new(10);
        // log(e + e^u) written without overflow for large u
        let partial = |n: f64| rule.composite(0.0, n, 200, |u| 1.0 / (u + (1.0 + (1.0 - u).exp()).ln()));
        let (p10, p100, p1000) = (partial(10.0), partial(100.0), partial(1000.0));
        assert!(p100 - p10 > 1.5 && p1000 - p100 > 1.5, "{p10} {p100} {p1000}");
        assert!(((p1000 - p100) - 10f64.ln()).abs() < 0.2);
    }

    #[test]
    fn non_concave_square_is_rejected() {
        // s^{3/4} is monotone and Dini, but its square s^{3/2} is convex
        let r = dini_check(&ModulusFunction::power(1.0, 0.75), WINDOW_TOL).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert!(r.integral_value.is_some());
    }

    #[test]
    fn power_weight_a_integral_matches_first_mode_bound() {
        let spec = Spectrum::power_law(1.0, 2.0, 64, 0.4).unwrap();
        let r = a_integral_check(&WeightFunction::power(1.0), &spec).unwrap();
        assert!(r.passed());
        let l1 = 1.0;
        assert!(r.integral_value.unwrap() <= (1.0 - (-l1 as f64).exp()) / l1 + 1e-8);
        assert_relative_eq!(r.integral_value.unwrap(), 1.0 - (-1.0f64).exp(), max_relative = 1e-6);
    }

    #[test]
    fn paper_weights_pass() {
        let spec = Spectrum::power_law(1.0, 2.0, 64, 0.4).unwrap();
        assert!(weight_class_check(&WeightFunction::power(1.0), &spec).unwrap().passed());
        assert!(weight_class_check(&WeightFunction::log_power(1.0, e2()), &spec).unwrap().passed());
        let osc = weight_class_check(&WeightFunction::oscillating_power(0.5), &spec).unwrap();
        assert!(osc.passed(), "{osc:?}");
    }

    #[test]
    fn bounded_weight_fails_a_prime() {
        let spec = Spectrum::power_law(1.0, 2.0, 16, 0.4).unwrap();
        let a = WeightFunction::new("2-1/(1+x)", WeightClass::APrime, |x| 2.0 - 1.0 / (1.0 + x));
        assert_eq!(weight_class_check(&a, &spec).unwrap().verdict, Verdict::Fail);
    }

    #[test]
    fn a_prime_library_is_inside_a() {
        let spec = Spectrum::power_law(1.0, 2.0, 64, 0.4).unwrap();
        let lib = WeightFunction::library();
        assert!(lib.len() >= 5);
        for a in &lib {
            if matches!(a.declared_class, WeightClass::APrime) {
                assert!(a_prime_check(a, 1.0).unwrap().passed(), "{}", a.name());
                assert!(a_integral_check(a, &spec).unwrap().passed(), "{}", a.name());
            }
        }
    }

    #[test]
    fn trace_examples() {
        let s = Spectrum::power_law(1.0, 2.0, 200, 0.4).unwrap();
        let r = trace_class_check(&s, 1.0).unwrap();
        assert!(r.class.passed());
        assert_relative_eq!(r.tail_exponent.unwrap(), 1.2, max_relative = 1e-12);
        // oracle: direct partial sums of Σ i^{-1.2} stay below ζ(1.2) ≈ 5.5916
        let direct: f64 = (1..=200).map(|i| (i as f64).powf(-1.2)).sum();
        assert_relative_eq!(r.partial_sum, direct, max_relative = 1e-12);
        assert!(direct < 5.5916);
        assert!(r.hs_integral.is_finite() && r.hs_integral <= r.hs_bound * (1.0 + 1e-12));

        let lin = Spectrum::power_law(1.0, 1.0, 50, 0.5).unwrap();
        assert_eq!(trace_class_check(&lin, 1.0).unwrap().class.verdict, Verdict::Fail);
    }

    #[test]
    fn hs_mode_integral_matches_quadrature() {
        let rule = GaussLegendre::new(16);
        let (l, a, s) = (3.0, 0.2, 0.7);
        let q = graded_from_singularity(&rule, s, 60, 0.5, |t| t.powf(-2.0 * a) * (-2.0 * l * t).exp());
        assert_relative_eq!(hs_mode_integral(l, a, s), q, max_relative = 1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn dini_verdict_is_scale_invariant(kappa in 1e-3..1e3f64) {
            for phi in [ModulusFunction::power(1.0, 0.5), ModulusFunction::log_dini(1.0, 1.0, e2()), ModulusFunction::log_harmonic(), ModulusFunction::power(1.0, 0.75)] {
                let base = dini_check(&phi, WINDOW_TOL).unwrap();
                let scaled = dini_check(&phi.scaled(kappa), WINDOW_TOL).unwrap();
                prop_assert_eq!(base.verdict, scaled.verdict);
                if let (Some(a), Some(b)) = (base.integral_value, scaled.integral_value) {
                    prop_assert!((b - kappa * a).abs() <= 1e-9 * kappa * a);
                }
            }
        }
    }
}
