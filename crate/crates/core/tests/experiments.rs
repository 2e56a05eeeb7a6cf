use fspde::harness::config::{CoefficientConfig, DelayConfig, DriftConfig, GalerkinConfig, NoiseConfig, UniquenessConfig};
use fspde::harness::{self, ExperimentConfig};
use fspde::simulator::NoisePath;
use fspde::Error;

const BASE: &str = r#"
    seed = 9
    samples = 100
    [spectrum]
    c = 1.0
    gamma = 2.0
    modes = 2
    trace_exponent = 0.4
    [time]
    r = 0.25
    horizon = 1.0
    dt = 0.0625
"#;

fn base() -> ExperimentConfig {
    ExperimentConfig::from_toml(BASE).unwrap()
}

fn metric(r: &harness::ExperimentResult, key: &str) -> f64 {
    r.metrics[key]
}

#[test]
fn uniqueness_without_noise_or_drift_has_no_distance() {
    let mut cfg = base();
    cfg.coefficients.noise = NoiseConfig::Diagonal { q: 0.0, decay: 0.0 };
    cfg.uniqueness = Some(UniquenessConfig { level: 2.0, dts: vec![0.0625, 0.03125], reference_dt: 0.0078125 });
    let r = harness::run_uniqueness(&cfg).unwrap();
    assert_eq!(metric(&r, "level_gap"), 0.0);
    // the heat flow is exact on every grid, so only rounding separates the grids
    for row in &r.tables[0].rows {
        assert!(row[1] < 1e-14, "{row:?}");
    }
}

#[test]
fn uniqueness_levels_agree_for_linear_coefficients() {
    let mut cfg = base();
    cfg.coefficients = CoefficientConfig {
        drift: DriftConfig::Linear { kappa: 0.5 },
        delay: DelayConfig::Linear { beta: 0.3 },
        noise: NoiseConfig::Diagonal { q: 1.0, decay: 0.0 },
    };
    cfg.uniqueness = Some(UniquenessConfig { level: 4.0, dts: vec![0.0625, 0.03125], reference_dt: 0.015625 });
    let r = harness::run_uniqueness(&cfg).unwrap();
    assert_eq!(metric(&r, "level_gap"), 0.0);
}

#[test]
fn galerkin_error_vanishes_at_the_reference_size() {
    let mut cfg = base();
    cfg.coefficients.drift = DriftConfig::Linear { kappa: 0.2 };
    cfg.galerkin = Some(GalerkinConfig { modes: vec![1, 2, 4], reference: 4 });
    let r = harness::run_galerkin(&cfg).unwrap();
    let errors: Vec<f64> = r.tables[0].rows.iter().map(|row| row[1]).collect();
    assert_eq!(errors[2], 0.0);
    assert!(r.passed(), "{errors:?}");
}

#[test]
fn galerkin_error_of_decoupled_modes_matches_per_mode_recursion() {
    // b = B = 0 with diagonal noise: each mode is an independent OU process, and the
    // error of the n-mode system is the tail Σ_{i>n} X_i² of the reference
    let mut cfg = base();
    cfg.coefficients.noise = NoiseConfig::Diagonal { q: 1.0, decay: 1.0 };
    cfg.initial.amplitude = 0.7;
    cfg.galerkin = Some(GalerkinConfig { modes: vec![2, 4], reference: 6 });
    let r = harness::run_galerkin(&cfg).unwrap();

    let (nr, dt, steps, window) = (6, cfg.time.dt, 16, 4);
    let oracle = |n: usize| -> f64 {
        let mut total = 0.0;
        for j in 0..cfg.samples as u64 {
            let noise = NoisePath::generate(cfg.seed, j, nr, steps, dt);
            let mut rows = Vec::new();
            let mut x: Vec<f64> = (1..=nr).map(|i| 0.7 / i as f64).collect();
            for _ in 0..=window {
                rows.push(x.clone());
            }
            for k in 0..steps {
                for (i, xi) in x.iter_mut().enumerate() {
                    let l = ((i + 1) * (i + 1)) as f64;
                    let q = 1.0 / (i + 1) as f64;
                    let ou = (-(-2.0 * l * dt).exp_m1() / (2.0 * l * dt)).sqrt();
                    *xi = (-l * dt).exp() * *xi + ou * q * noise.increment(k)[i];
                }
                rows.push(x.clone());
            }
            let tail = rows[rows.len() - window - 1..].iter().map(|row| row[n..].iter().map(|v| v * v).sum::<f64>()).fold(0.0, f64::max);
            total += tail;
        }
        total / cfg.samples as f64
    };
    for (row, n) in r.tables[0].rows.iter().zip([2, 4]) {
        let exact = oracle(n);
        assert!((row[1] - exact).abs() <= 1e-10 * exact, "n = {n}: {} vs {exact}", row[1]);
    }
}

#[test]
fn nonexplosion_needs_bounded_drifts() {
    let mut cfg = ExperimentConfig::from_toml(
        &(BASE.to_string() + "[nonexplosion.negative_control]\ncoefficient = 1.0\nx0 = 2.0\nq = 0.1\nsamples = 5\n"),
    )
    .unwrap();
    let zero = harness::run_nonexplosion(&cfg).unwrap();
    assert!(zero.passed(), "{:?}", zero.verdicts);
    assert_eq!(metric(&zero, "bihari_violations"), 0.0);
    cfg.coefficients.drift = DriftConfig::Linear { kappa: 1.0 };
    assert!(matches!(harness::run_nonexplosion(&cfg), Err(Error::Config { .. })));
}

#[test]
fn negative_control_must_start_above_the_unstable_equilibrium() {
    let cfg = ExperimentConfig::from_toml(
        &(BASE.to_string() + "[nonexplosion.negative_control]\ncoefficient = 1.0\nx0 = 0.5\nq = 0.1\nsamples = 5\n"),
    )
    .unwrap();
    assert!(matches!(harness::run_nonexplosion(&cfg), Err(Error::Config { field, .. }) if field.contains("negative_control")));
}

#[test]
fn cubic_blowup_time_solves_the_ode() {
    // integrate ẋ = −λx + cx³ with RK4 until it passes 1e6 and compare
    let (l, c, x0) = (1.0, 1.0, 2.0);
    let t_star = harness::experiments::cubic_blowup_time(l, c, x0).unwrap();
    let f = |x: f64| -l * x + c * x * x * x;
    let (mut x, mut t, h) = (x0, 0.0, 1e-6);
    while x < 1e6 {
        let k1 = f(x);
        let k2 = f(x + 0.5 * h * k1);
        let k3 = f(x + 0.5 * h * k2);
        let k4 = f(x + h * k3);
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += h;
    }
    assert!((t - t_star).abs() < 1e-4, "{t} vs {t_star}");
    assert!(harness::experiments::cubic_blowup_time(l, c, 0.9).is_none());
}

#[test]
fn harnack_campaign_on_a_driftless_system() {
    let cfg = ExperimentConfig::from_toml(
        r#"
        seed = 4
        samples = 1000
        [spectrum]
        c = 16.0
        gamma = 2.0
        modes = 2
        trace_exponent = 0.4
        [coefficients.noise]
        kind = "diagonal"
        q = 4.0
        [time]
        r = 0.25
        horizon = 0.375
        dt = 0.03125
        [solver]
        lambdas = [100.0]
        nodes = 9
        [harnack]
        train_pairs = 3
        holdout_pairs = 3
        spread = 1.0
        max_offset = 1.0
        "#,
    )
    .unwrap();
    let r = harness::run_harnack_campaign(&cfg).unwrap();
    assert!(r.passed(), "{:?}", r.verdicts);
    // u ≡ 0, so the transformed system is the original one
    assert_eq!(metric(&r, "k"), 0.0);
    assert_eq!(metric(&r, "jensen_ok"), 1.0);
}

#[test]
fn solver_stage_failure_is_reported_not_raised() {
    let mut cfg = ExperimentConfig::from_toml(&(BASE.to_string() + "[solver]\nlambdas = [1.0]\nnodes = 9\n[harnack]\ntrain_pairs = 1\nholdout_pairs = 1\nspread = 1.0\nmax_offset = 0.5\n")).unwrap();
    cfg.coefficients = CoefficientConfig {
        drift: DriftConfig::Dini {
            direction: vec![40.0, 0.0],
            center: vec![0.0, 0.0],
            active: 2,
            modulus: fspde::harness::config::ModulusConfig::Power { k: 1.0, alpha: 0.5 },
        },
        delay: DelayConfig::Zero,
        noise: NoiseConfig::Diagonal { q: 1.0, decay: 0.0 },
    };
    let r = harness::run_harnack_campaign(&cfg).unwrap();
    assert!(!r.passed());
    assert!(r.verdicts[0].detail.starts_with("stage=threshold"), "{:?}", r.verdicts);
}
