//! One function per experiment; each returns an [`ExperimentResult`] whose
//! verdicts name the acceptance criterion they decide.

use std::sync::Arc;
use std::time::Instant;

use log::info;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, NoiseConfig};
use super::report::{ExperimentResult, Table};
use crate::analysis::{
    a_integral_check, a_prime_check, dini_check, trace_class_check, weight_class_check, ModulusFunction, Spectrum, WeightClass,
    WeightFunction,
};
use crate::analysis::classes::WINDOW_TOL;
use crate::error::{Error, Result};
use crate::harnack::{conjugation_sweep, harnack_campaign, HarnackReport, TestFunction, TestFunctionSet};
use crate::segment::{segment_norm, stopping_time, SegmentPath};
use crate::simulator::{
    bihari_bound, maximal_inequality_check, mean_stderr, monte_carlo, running_sup_sq, simulate, truncate_coeffs, CoefficientSet,
    CubicDrift, DiagonalNoise, LyapunovSpec, NoisePath, SimOptions, TruncationScheme, ZeroDelay,
};
use crate::zvonkin::{
    bounds_monotone, lambda_threshold, sandwich_check, solve_u, transform_coeffs, Battery, ReferenceSemigroup, RegularizingField,
    SolverOptions, SpatialGrid, TransformedSystem,
};

/// Slack on the monotonicity of certified bounds in λ.
pub const BOUNDS_REL_TOL: f64 = 1e-9;
/// Accepted band for the contraction exponent.
pub const CONTRACTION_SLOPE: (f64, f64) = (-0.65, -0.35);
/// Accepted band for the uniqueness convergence order.
pub const UNIQUENESS_ORDER: (f64, f64) = (0.3, 0.7);
/// Largest `max/min` ratio of `c_q` across horizons.
pub const CQ_SPREAD: f64 = 2.0;
/// Horizons of the maximal-inequality stability check.
pub const CQ_HORIZONS: [f64; 3] = [0.5, 1.0, 2.0];
/// Exponent of the maximal inequality; must lie in `(1, 1/ε)`.
pub const MAXIMAL_Q: f64 = 1.5;

fn timed(mut r: ExperimentResult, start: Instant) -> ExperimentResult {
    r.wall_clock = start.elapsed().as_secs_f64();
    info!(
        "experiment={} passed={} wall_clock_s={:.3} config_hash={}",
        r.experiment,
        r.passed(),
        r.wall_clock,
        r.config_hash
    );
    r
}

/// Least-squares slope and intercept of `y` on `x`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Textbook examples of the modulus and weight classes, plus `𝒜′ ⊂ 𝒜` on the library.
pub fn run_classcheck(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let start = Instant::now();
    let mut res = ExperimentResult::new("classcheck", &cfg.hash(), cfg.seed);
    let spec = cfg.spectrum()?;
    let e2 = std::f64::consts::E.powi(2);
    let mut failures = Vec::new();
    let mut table = Table::new("classes", &["case", "integral", "tail_bound", "passed"]);
    let mut record = |name: &str, idx: f64, rep: &crate::analysis::ClassReport, want: bool| {
        table.push(vec![idx, rep.integral_value.unwrap_or(f64::NAN), rep.tail_bound, f64::from(u8::from(rep.passed()))]);
        if rep.passed() != want {
            failures.push(name.to_string());
        }
    };
    record("log_dini", 0.0, &dini_check(&ModulusFunction::log_dini(1.0, 0.5, e2), WINDOW_TOL)?, true);
    // control: 1/log(e + 1/s) is not Dini
    record("log_harmonic", 1.0, &dini_check(&ModulusFunction::log_harmonic(), WINDOW_TOL)?, false);
    record("power", 2.0, &weight_class_check(&WeightFunction::power(1.0), &spec)?, true);
    record("log_power", 3.0, &weight_class_check(&WeightFunction::log_power(1.0, e2), &spec)?, true);
    record("oscillating_power", 4.0, &weight_class_check(&WeightFunction::oscillating_power(0.5), &spec)?, true);
    let lambda_1 = spec.eigenvalues()[0];
    for (i, a) in WeightFunction::library().iter().enumerate() {
        if matches!(a.declared_class, WeightClass::APrime) {
            record(&format!("{} in A'", a.name()), 10.0 + i as f64, &a_prime_check(a, lambda_1)?, true);
            record(&format!("{} in A", a.name()), 100.0 + i as f64, &a_integral_check(a, &spec)?, true);
        }
    }
    res.tables.push(table);
    res.metric("failures", failures.len() as f64);
    let detail = if failures.is_empty() { "every library example lands in its class".to_string() } else { format!("misclassified: {}", failures.join(", ")) };
    res.verdict("class_library", failures.is_empty(), detail);
    Ok(timed(res, start))
}

/// Trace-class check and stability of the fitted maximal-inequality constant across horizons.
pub fn run_trace(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let start = Instant::now();
    let mut res = ExperimentResult::new("trace", &cfg.hash(), cfg.seed);
    let spec = cfg.spectrum()?;
    let n = spec.n_modes();
    let trace = trace_class_check(&spec, 1.0)?;
    res.metric("trace_partial_sum", trace.partial_sum);
    res.metric("trace_hs_integral", trace.hs_integral);
    let mut table = Table::new("maximal", &["horizon", "lhs", "lhs_stderr", "hs_integral", "c_q"]);
    let mut cs = Vec::new();
    for t in CQ_HORIZONS {
        let rep = maximal_inequality_check(&spec, &|_| DMatrix::identity(n, n), MAXIMAL_Q, t, cfg.time.dt, cfg.samples, cfg.seed)?;
        info!("experiment=trace horizon={t} c_q={}", rep.c_q);
        table.push(vec![t, rep.lhs, rep.lhs_stderr, rep.hs_integral, rep.c_q]);
        cs.push(rep.c_q);
    }
    res.tables.push(table);
    let (lo, hi) = cs.iter().fold((f64::INFINITY, 0.0_f64), |(l, h), &c| (l.min(c), h.max(c)));
    let spread = hi / lo;
    res.metric("c_q_spread", spread);
    let ok = trace.class.passed() && lo > 0.0 && spread < CQ_SPREAD;
    res.verdict("trace_maximal", ok, format!("trace class {:?}, c_q max/min = {spread:.4}", trace.class.verdict));
    Ok(timed(res, start))
}

/// One path of the configured system; the trajectory is the result's table.
pub fn run_simulate(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let start = Instant::now();
    let mut res = ExperimentResult::new("simulate", &cfg.hash(), cfg.seed);
    let spec = cfg.spectrum()?;
    let coeffs = cfg.coeffs();
    let xi = cfg.initial_segment()?;
    let steps = crate::segment::grid_steps(cfg.time.horizon, cfg.time.dt, "horizon")?;
    let noise = NoisePath::generate(cfg.seed, 0, coeffs.dim, steps, cfg.time.dt);
    let tr = simulate(&coeffs, &xi, cfg.time.horizon, &spec, &noise, SimOptions::default())?.trajectory;
    let cols: Vec<String> = std::iter::once("t".to_string()).chain((1..=tr.dim).map(|i| format!("mode_{i}"))).collect();
    let mut table = Table { name: "trajectory".into(), columns: cols, rows: Vec::new() };
    for k in 0..tr.rows() {
        table.push(std::iter::once(tr.time_of(k)).chain(tr.row(k).iter().copied()).collect());
    }
    res.tables.push(table);
    res.metric("end_time", tr.end_time());
    res.metric("sup_norm", tr.sup_norm());
    res.verdict("simulation", !tr.exploded(), format!("life time {:?}", tr.life_time));
    Ok(timed(res, start))
}

fn reference(cfg: &ExperimentConfig, spec: &Spectrum) -> Result<ReferenceSemigroup> {
    let solver = cfg.solver.as_ref().ok_or_else(|| Error::config("solver", "missing solver section"))?;
    let NoiseConfig::Diagonal { .. } = cfg.coefficients.noise else {
        return Err(Error::config("coefficients.noise", "the resolvent solver needs diagonal noise"));
    };
    let q = cfg.coefficients.noise.amplitudes(spec.n_modes());
    ReferenceSemigroup::new(spec.clone(), q, solver.quadrature_order)
}

/// Solves the resolvent equation at every configured λ.
pub fn solve_fields(cfg: &ExperimentConfig) -> Result<Vec<RegularizingField>> {
    let spec = cfg.spectrum()?;
    let solver = cfg.solver.as_ref().ok_or_else(|| Error::config("solver", "missing solver section"))?;
    let r = reference(cfg, &spec)?;
    let x0 = cfg.initial.point(0.0, spec.n_modes());
    let grid = SpatialGrid::auto(&r, &x0, solver.nodes);
    let coeffs = cfg.coeffs();
    solver
        .lambdas
        .iter()
        .map(|&l| {
            let f = solve_u(&r, coeffs.b.as_ref(), l, cfg.time.horizon, &grid, &SolverOptions::default())?;
            info!("experiment=solve_u lambda={l} factor={} iterations={} hess={}", f.header.contraction_factor, f.header.iterations, f.bounds().hess);
            Ok(f)
        })
        .collect()
}

/// The lowest certified field of the λ grid.
pub fn certified_field(cfg: &ExperimentConfig) -> Result<RegularizingField> {
    let mut fields = solve_fields(cfg)?;
    let (i, _) = lambda_threshold(&fields)?;
    Ok(fields.swap_remove(i))
}

/// Contraction rate and certified bounds over the λ grid, then the θ sandwich
/// at the threshold λ.
pub fn run_solver(cfg: &ExperimentConfig) -> Result<(ExperimentResult, Vec<RegularizingField>)> {
    let start = Instant::now();
    let mut res = ExperimentResult::new("solve_u", &cfg.hash(), cfg.seed);
    let fields = solve_fields(cfg)?;
    let mut table = Table::new("fields", &["lambda", "contraction_factor", "iterations", "u_a", "grad_a", "grad", "hess", "composite", "certified"]);
    for f in &fields {
        let b = f.bounds();
        table.push(vec![
            f.lambda(),
            f.header.contraction_factor,
            f.header.iterations as f64,
            b.u_a,
            b.grad_a,
            b.grad,
            b.hess,
            b.composite,
            f64::from(u8::from(b.certified())),
        ]);
    }
    res.tables.push(table);
    let x: Vec<f64> = fields.iter().map(|f| f.lambda().ln()).collect();
    let y: Vec<f64> = fields.iter().map(|f| f.header.contraction_factor.ln()).collect();
    let (slope, _) = if fields.len() >= 2 { fit_line(&x, &y) } else { (f64::NAN, f64::NAN) };
    let monotone = bounds_monotone(&fields, BOUNDS_REL_TOL);
    res.metric("contraction_slope", slope);
    res.metric("bounds_monotone", f64::from(u8::from(monotone)));
    let slope_ok = slope >= CONTRACTION_SLOPE.0 && slope <= CONTRACTION_SLOPE.1;
    res.verdict("resolvent_solver", slope_ok && monotone, format!("slope {slope:.4}, bounds monotone: {monotone}"));
    match lambda_threshold(&fields) {
        Ok((i, lambda)) => {
            let pairs = cfg.solver.as_ref().map_or(1000, |s| s.sandwich_pairs);
            let rep = sandwich_check(&fields[i], pairs, cfg.seed)?;
            res.metric("lambda_threshold", lambda);
            res.metric("theta_min", rep.theta_min);
            res.metric("theta_max", rep.theta_max);
            res.metric("inverse_min", rep.inverse_min);
            res.metric("inverse_max", rep.inverse_max);
            res.metric("sandwich_violations", rep.violations as f64);
            res.verdict(
                "diffeomorphism_bounds",
                rep.violations == 0,
                format!("{} pairs at λ = {lambda}: θ in [{:.4}, {:.4}], θ⁻¹ in [{:.4}, {:.4}]", rep.pairs, rep.theta_min, rep.theta_max, rep.inverse_min, rep.inverse_max),
            );
        }
        Err(e) => res.verdict("diffeomorphism_bounds", false, format!("stage=threshold: {e}")),
    }
    Ok((timed(res, start), fields))
}

fn exp_linear(n: usize) -> TestFunction {
    TestFunctionSet::builtin(n).functions.swap_remove(0)
}

/// Direct vs transformed semigroup estimates over a Δt sweep.
pub fn run_conjugation(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let start = Instant::now();
    let mut res = ExperimentResult::new("conjugation", &cfg.hash(), cfg.seed);
    let c = cfg.conjugation.as_ref().ok_or_else(|| Error::config("conjugation", "missing conjugation section"))?;
    let spec = cfg.spectrum()?;
    let n = spec.n_modes();
    let field = match certified_field(cfg) {
        Ok(f) => f,
        Err(e) => {
            res.verdict("conjugation", false, format!("stage=threshold: {e}"));
            return Ok(timed(res, start));
        }
    };
    res.metric("lambda", field.lambda());
    let coeffs = cfg.coeffs();
    let sys = TransformedSystem::new(Arc::new(field), coeffs.clone(), &spec)?;
    let init = |s: f64| cfg.initial.point(s, n);
    let sweep = conjugation_sweep(&coeffs, &sys, &spec, cfg.time.r, &init, &exp_linear(n), cfg.time.horizon, &c.dts, c.samples.unwrap_or(cfg.samples), cfg.seed)?;
    let mut table = Table::new(
        "sweep",
        &["dt", "direct", "direct_stderr", "transformed", "transformed_stderr", "residual", "paired_stderr", "pathwise_rms", "allowance"],
    );
    for (i, p) in sweep.points.iter().enumerate() {
        info!("experiment=conjugation dt={} residual={} pathwise_rms={}", p.grid_step, p.residual, p.pathwise_rms);
        table.push(vec![
            p.grid_step,
            p.direct,
            p.direct_stderr,
            p.transformed,
            p.transformed_stderr,
            p.residual,
            p.paired_stderr,
            p.pathwise_rms,
            sweep.allowance(i),
        ]);
    }
    res.tables.push(table);
    res.metric("order", sweep.order);
    res.metric("allowance_constant", sweep.constant);
    let ok = sweep.agrees() && sweep.order >= c.min_order;
    res.verdict("conjugation", ok, format!("agreement {} with fitted order {:.4}", sweep.agrees(), sweep.order));
    Ok(timed(res, start))
}

/// Truncation levels `m` and `2m` on shared noise, then a Δt sweep against a fine reference.
pub fn run_uniqueness(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let start = Instant::now();
    let mut res = ExperimentResult::new("uniqueness", &cfg.hash(), cfg.seed);
    let u = cfg.uniqueness.as_ref().ok_or_else(|| Error::config("uniqueness", "missing uniqueness section"))?;
    let spec = cfg.spectrum()?;
    let base = cfg.coeffs();
    let n = base.dim;
    let m = u.level;
    let (low, high) = (truncate_coeffs(&base, TruncationScheme { level: m }), truncate_coeffs(&base, TruncationScheme { level: 2.0 * m }));
    let horizon = cfg.time.horizon;
    let fine_steps = crate::segment::grid_steps(horizon, u.reference_dt, "horizon")?;
    let xi_ref = cfg.initial.segment(cfg.time.r, u.reference_dt, n)?;
    if segment_norm(&xi_ref)? >= m {
        return Err(Error::config("uniqueness.level", "the initial segment must lie inside the truncation ball"));
    }
    // per path: (max level disagreement, distance per dt)
    let per_path = monte_carlo(cfg.samples, |j| {
        let fine = NoisePath::generate(cfg.seed, j, n, fine_steps, u.reference_dt);
        let reference = simulate(&high, &xi_ref, horizon, &spec, &fine, SimOptions::default())?.trajectory;
        let mut gap = 0.0_f64;
        let mut dist = Vec::with_capacity(u.dts.len());
        for &dt in &u.dts {
            let factor = (dt / u.reference_dt).round() as usize;
            let noise = if factor == 1 { fine.clone() } else { fine.coarsen(factor)? };
            let xi = cfg.initial.segment(cfg.time.r, dt, n)?;
            let a = simulate(&low, &xi, horizon, &spec, &noise, SimOptions::default())?.trajectory;
            let b = simulate(&high, &xi, horizon, &spec, &noise, SimOptions::default())?.trajectory;
            let tau = stopping_time(&a, m);
            let last = a.index_of(tau).unwrap_or(a.rows() - 1).min(b.rows() - 1);
            let mut d = 0.0_f64;
            for k in a.delay_steps..=last {
                let diff = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                gap = gap.max(diff(a.row(k), b.row(k)));
                let kr = reference.delay_steps + (k - a.delay_steps) * factor;
                if kr < reference.rows() {
                    d = d.max(diff(a.row(k), reference.row(kr)));
                }
            }
            dist.push(d);
        }
        Ok((gap, dist))
    })?;
    let gap = per_path.iter().map(|p| p.0).fold(0.0, f64::max);
    let mut table = Table::new("distance", &["dt", "mean_sup_distance", "stderr"]);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (i, &dt) in u.dts.iter().enumerate() {
        let ds: Vec<f64> = per_path.iter().map(|p| p.1[i]).collect();
        let (mean, se) = mean_stderr(&ds);
        info!("experiment=uniqueness dt={dt} distance={mean} stderr={se}");
        table.push(vec![dt, mean, se]);
        x.push(dt.ln());
        y.push(mean.ln());
    }
    res.tables.push(table);
    let (order, _) = fit_line(&x, &y);
    res.metric("level_gap", gap);
    res.metric("order", order);
    let ok = gap <= 1e-12 && order >= UNIQUENESS_ORDER.0 && order <= UNIQUENESS_ORDER.1;
    res.verdict("uniqueness", ok, format!("levels m and 2m differ by {gap:e} on [0, τ_m]; fitted order {order:.4}"));
    Ok(timed(res, start))
}

/// `E‖X_T − X_T^{(n)}‖²_∞` against the `reference`-mode solution on shared noise.
pub fn run_galerkin(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let start = Instant::now();
    let mut res = ExperimentResult::new("galerkin", &cfg.hash(), cfg.seed);
    let g = cfg.galerkin.as_ref().ok_or_else(|| Error::config("galerkin", "missing galerkin section"))?;
    let nr = g.reference;
    let spec_ref = cfg.spectrum.build(nr)?;
    let coeffs_ref = cfg.coefficients.build(nr);
    let xi_ref = cfg.initial.segment(cfg.time.r, cfg.time.dt, nr)?;
    let systems: Vec<(Spectrum, CoefficientSet, SegmentPath)> = g
        .modes
        .iter()
        .map(|&n| Ok((cfg.spectrum.build(n)?, cfg.coefficients.build(n), xi_ref.resized(n))))
        .collect::<Result<_>>()?;
    let steps = crate::segment::grid_steps(cfg.time.horizon, cfg.time.dt, "horizon")?;
    let errors = monte_carlo(cfg.samples, |j| {
        let noise = NoisePath::generate(cfg.seed, j, nr, steps, cfg.time.dt);
        let full = simulate(&coeffs_ref, &xi_ref, cfg.time.horizon, &spec_ref, &noise, SimOptions::default())?.trajectory;
        let kf = full.rows() - 1;
        let wf = full.window(kf);
        systems
            .iter()
            .map(|(spec, coeffs, xi)| {
                let n = coeffs.dim;
                let tr = simulate(coeffs, xi, cfg.time.horizon, spec, &noise.restrict(n), SimOptions::default())?.trajectory;
                let w = tr.window(tr.rows() - 1);
                let mut sup = 0.0_f64;
                for k in 0..wf.len() {
                    let (a, b) = (wf.at(k), w.at(k));
                    let d2: f64 = (0..nr).map(|i| (a[i] - b.get(i).copied().unwrap_or(0.0)).powi(2)).sum();
                    sup = sup.max(d2);
                }
                Ok(sup)
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let mut table = Table::new("errors", &["modes", "mean_sq_error", "stderr"]);
    let mut means = Vec::new();
    for (i, &n) in g.modes.iter().enumerate() {
        let e: Vec<f64> = errors.iter().map(|p| p[i]).collect();
        let (mean, se) = mean_stderr(&e);
        info!("experiment=galerkin modes={n} error={mean} stderr={se}");
        table.push(vec![n as f64, mean, se]);
        means.push(mean);
    }
    res.tables.push(table);
    let decreasing = means.windows(2).all(|w| w[1] < w[0]);
    res.metric("strictly_decreasing", f64::from(u8::from(decreasing)));
    res.verdict("galerkin", decreasing, format!("mean squared errors {means:?} against {nr} modes"));
    Ok(timed(res, start))
}

/// Blow-up time of `ẋ = −λx + c x³` from `x0 > √(λ/c)`.
pub fn cubic_blowup_time(lambda: f64, c: f64, x0: f64) -> Option<f64> {
    let a = c - lambda / (x0 * x0);
    (c > 0.0 && a > 0.0).then(|| (c / a).ln() / (2.0 * lambda))
}

/// Zero explosions and per-path Bihari dominance for the configured system,
/// and explosions for the superlinear control.
pub fn run_nonexplosion(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let start = Instant::now();
    let mut res = ExperimentResult::new("nonexplosion", &cfg.hash(), cfg.seed);
    let nx = cfg.nonexplosion.as_ref().ok_or_else(|| Error::config("nonexplosion", "missing nonexplosion section"))?;
    let spec = cfg.spectrum()?;
    let coeffs = cfg.coeffs();
    let beta = match (coeffs.b.sup_bound(), coeffs.delay.sup_bound()) {
        (Some(a), Some(b)) => a + b,
        _ => return Err(Error::config("coefficients", "the Bihari pairing needs bounded drifts")),
    };
    // 2⟨y, b + B⟩ ≤ |y|² + β²: Φ(s) = s/2, h ≡ β²/2
    let lyap = LyapunovSpec::linear(0.5, 0.0, beta);
    let xi = cfg.initial_segment()?;
    let steps = crate::segment::grid_steps(cfg.time.horizon, cfg.time.dt, "horizon")?;
    let outcomes = monte_carlo(cfg.samples, |j| {
        let noise = NoisePath::generate(cfg.seed, j, coeffs.dim, steps, cfg.time.dt);
        let sim = simulate(&coeffs, &xi, cfg.time.horizon, &spec, &noise, SimOptions { record_convolution: true })?;
        let conv = sim.convolution.as_ref().expect("convolution recorded");
        if sim.trajectory.exploded() {
            return Ok((true, false, 0.0));
        }
        let curve = bihari_bound(&lyap, &xi, conv, cfg.time.horizon)?;
        let z = running_sup_sq(&sim.trajectory, conv);
        let margin = z.iter().zip(&curve.values).map(|(a, b)| a / b).fold(0.0, f64::max);
        Ok((false, margin <= 1.0, margin))
    })?;
    let exploded: Vec<usize> = (0..outcomes.len()).filter(|&j| outcomes[j].0).collect();
    let violated: Vec<usize> = (0..outcomes.len()).filter(|&j| !outcomes[j].0 && !outcomes[j].1).collect();
    let worst = outcomes.iter().map(|o| o.2).fold(0.0, f64::max);
    res.metric("explosions", exploded.len() as f64);
    res.metric("bihari_violations", violated.len() as f64);
    res.metric("worst_bihari_ratio", worst);
    let offending = exploded.first().or(violated.first()).map_or(String::new(), |j| format!(", first offending stream {j} of seed {}", cfg.seed));

    let nc = &nx.negative_control;
    let lambda_1 = spec.eigenvalues()[0];
    let t_star = cubic_blowup_time(lambda_1, nc.coefficient, nc.x0)
        .ok_or_else(|| Error::config("nonexplosion.negative_control", "x0 must lie above the unstable equilibrium √(λ₁/c)"))?;
    let spec1 = Spectrum::new(vec![lambda_1], None, spec.trace_exponent())?;
    let control = CoefficientSet::new(1, Arc::new(CubicDrift { coefficient: nc.coefficient }), Arc::new(ZeroDelay), Arc::new(DiagonalNoise { q: vec![nc.q] }));
    let xi1 = SegmentPath::constant(cfg.time.r, cfg.time.dt, &[nc.x0])?;
    let control_blowups = monte_carlo(nc.samples, |j| {
        let noise = NoisePath::generate(cfg.seed ^ 0xc0_1d, j, 1, steps, cfg.time.dt);
        Ok(simulate(&control, &xi1, cfg.time.horizon, &spec1, &noise, SimOptions::default())?.trajectory.life_time)
    })?;
    let flagged = control_blowups.iter().filter(|l| l.is_some()).count();
    res.metric("control_blowup_time", t_star);
    res.metric("control_explosions", flagged as f64);
    let ok = exploded.is_empty() && violated.is_empty() && flagged > 0;
    res.verdict(
        "non_explosion",
        ok,
        format!(
            "{} explosions and {} Bihari violations in {} paths{offending}; control exploded on {flagged}/{} paths (deterministic blow-up at t = {t_star:.4})",
            exploded.len(),
            violated.len(),
            cfg.samples,
            nc.samples
        ),
    );
    Ok(timed(res, start))
}

/// Random pairs `(ξ, η)` of affine segments; the first `train` are training pairs.
pub fn harnack_pairs(cfg: &ExperimentConfig) -> Result<Vec<(SegmentPath, SegmentPath, bool)>> {
    let h = cfg.harnack.as_ref().ok_or_else(|| Error::config("harnack", "missing harnack section"))?;
    let n = cfg.spectrum.modes;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9a12);
    (0..h.train_pairs + h.holdout_pairs)
        .map(|i| {
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-h.spread..h.spread)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let len = rng.gen_range(0.1 * h.max_offset..h.max_offset) / crate::analysis::spectrum::norm(&dir).max(1e-12);
            let xi = SegmentPath::from_fn(cfg.time.r, cfg.time.dt, n, |s| (0..n).map(|k| a[k] + b[k] * s).collect())?;
            let eta = xi.map_points(|_, x| x.iter().zip(&dir).map(|(v, d)| v + len * d).collect())?;
            Ok((xi, eta, i >= h.train_pairs))
        })
        .collect()
}

/// The full pipeline: solve, threshold, transform, fit on training pairs, validate on held-out pairs.
pub fn harnack_stage(cfg: &ExperimentConfig) -> Result<(HarnackReport, f64)> {
    let spec = cfg.spectrum()?;
    let field = certified_field(cfg)?;
    let lambda = field.lambda();
    let battery = Battery { r: cfg.time.r, grid_step: cfg.time.dt, seed: cfg.seed ^ 0xba77, ..Battery::default() };
    let coeffs = cfg.coeffs();
    let sys = transform_coeffs(Arc::new(field), &coeffs, &spec, &battery)?;
    let k = sys.constants.as_ref().map(|c| c.k).ok_or_else(|| Error::input("transformed system carries no constants"))?;
    let pairs = harnack_pairs(cfg)?;
    let rep = harnack_campaign(&coeffs, &spec, &pairs, &TestFunctionSet::builtin(spec.n_modes()), cfg.time.horizon, k, cfg.samples, cfg.seed)?;
    Ok((rep, lambda))
}

pub fn run_harnack_campaign(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let start = Instant::now();
    let mut res = ExperimentResult::new("harnack", &cfg.hash(), cfg.seed);
    let (rep, lambda) = match harnack_stage(cfg) {
        Ok(v) => v,
        Err(e @ (Error::ThresholdNotMet(_) | Error::NotContractive { .. })) => {
            res.verdict("harnack", false, format!("stage=threshold: {e}"));
            return Ok(timed(res, start));
        }
        Err(e @ Error::Explosion { .. }) => {
            res.verdict("harnack", false, format!("stage=simulation: {e}"));
            return Ok(timed(res, start));
        }
        Err(e) => return Err(e),
    };
    res.metric("lambda", lambda);
    res.metric("k", rep.k);
    res.metric("c_log", rep.c_log);
    for (p, c) in rep.p_grid.iter().zip(&rep.c_power) {
        res.metric(&format!("c_power_p{p:.6}"), *c);
    }
    res.metric("jensen_ok", f64::from(u8::from(rep.jensen_ok)));
    let mut cols = vec!["pair".to_string(), "function".into(), "holdout".into(), "distance".into(), "log_residual".into(), "log_stderr".into()];
    for i in 0..rep.p_grid.len() {
        cols.push(format!("power_residual_{i}"));
        cols.push(format!("power_stderr_{i}"));
    }
    let mut table = Table { name: "residuals".into(), columns: cols, rows: Vec::new() };
    for r in &rep.residuals {
        let mut row = vec![r.pair as f64, r.function as f64, f64::from(u8::from(r.holdout)), r.distance, r.log_residual.mean, r.log_residual.stderr];
        for e in &r.power_residuals {
            row.extend([e.mean, e.stderr]);
        }
        table.push(row);
    }
    res.tables.push(table);
    let worst = |f: &dyn Fn(&crate::harnack::PairResidual) -> f64| rep.residuals.iter().filter(|r| r.holdout).map(f).fold(f64::INFINITY, f64::min);
    let log_z = worst(&|r| r.log_residual.mean / r.log_residual.stderr.max(1e-300));
    res.verdict("log_harnack", rep.log_holdout_ok, format!("C = {:.6}, worst held-out residual/stderr = {log_z:.3}", rep.c_log));
    let p_ok = rep.p_grid.first().is_some_and(|p| *p > (1.0 + rep.k).powi(2));
    res.verdict(
        "power_harnack",
        rep.power_holdout_ok && rep.power_monotone && p_ok,
        format!("K = {:.6}, p grid {:?}, C(p) = {:?}, non-increasing: {}", rep.k, rep.p_grid, rep.c_power, rep.power_monotone),
    );
    Ok(timed(res, start))
}
