//! TOML experiment configuration.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{ModulusFunction, Spectrum};
use crate::error::{Error, Result};
use crate::segment::SegmentPath;
use crate::simulator::{
    CoefficientSet, CubicDrift, DelayDrift, DiagonalNoise, DiniDrift, Drift, LinearDelay, LinearDrift, MultiplicativeNoise,
    NoiseCoefficient, TanhDelay, ZeroDelay, ZeroDrift,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Monte Carlo paths per estimate.
    pub samples: usize,
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub coefficients: CoefficientConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    pub solver: Option<SolverConfig>,
    pub uniqueness: Option<UniquenessConfig>,
    pub galerkin: Option<GalerkinConfig>,
    pub nonexplosion: Option<NonExplosionConfig>,
    pub harnack: Option<HarnackConfig>,
    pub conjugation: Option<ConjugationConfig>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// `λ_i = c·i^γ` on `modes` modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub c: f64,
    pub gamma: f64,
    pub modes: usize,
    pub trace_exponent: f64,
}

impl SpectrumConfig {
    pub fn build(&self, modes: usize) -> Result<Spectrum> {
        Spectrum::power_law(self.c, self.gamma, modes, self.trace_exponent)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConfig {
    #[serde(default)]
    pub drift: DriftConfig,
    #[serde(default)]
    pub delay: DelayConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftConfig {
    #[default]
    Zero,
    Dini { direction: Vec<f64>, center: Vec<f64>, active: usize, modulus: ModulusConfig },
    Linear { kappa: f64 },
    Cubic { coefficient: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModulusConfig {
    /// `K / log^{1+δ}(c + 1/s)`
    LogDini { k: f64, delta: f64, c: f64 },
    /// `K s^α`
    Power { k: f64, alpha: f64 },
}

impl ModulusConfig {
    pub fn build(&self) -> ModulusFunction {
        match *self {
            Self::LogDini { k, delta, c } => ModulusFunction::log_dini(k, delta, c),
            Self::Power { k, alpha } => ModulusFunction::power(k, alpha),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DelayConfig {
    #[default]
    Zero,
    Tanh { beta: f64, direction: Vec<f64> },
    Linear { beta: f64 },
}

/// Mode `i` (1-based) gets amplitude `q·i^{−decay}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseConfig {
    Diagonal {
        q: f64,
        #[serde(default)]
        decay: f64,
    },
    Multiplicative {
        q: f64,
        #[serde(default)]
        decay: f64,
        kappa: f64,
    },
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::Diagonal { q: 1.0, decay: 0.0 }
    }
}

impl NoiseConfig {
    pub fn amplitudes(&self, n: usize) -> Vec<f64> {
        let (Self::Diagonal { q, decay } | Self::Multiplicative { q, decay, .. }) = *self;
        (1..=n).map(|i| q * (i as f64).powf(-decay)).collect()
    }
}

/// `v` cut or zero-padded to length `n`.
fn fit(v: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|i| v.get(i).copied().unwrap_or(0.0)).collect()
}

impl CoefficientConfig {
    /// The coefficients restricted to the first `n` modes.
    pub fn build(&self, n: usize) -> CoefficientSet {
        let b: Arc<dyn Drift> = match &self.drift {
            DriftConfig::Zero => Arc::new(ZeroDrift),
            DriftConfig::Dini { direction, center, active, modulus } => Arc::new(DiniDrift {
                direction: fit(direction, n),
                center: fit(center, n),
                active: (*active).min(n),
                phi: modulus.build(),
            }),
            DriftConfig::Linear { kappa } => Arc::new(LinearDrift { kappa: *kappa }),
            DriftConfig::Cubic { coefficient } => Arc::new(CubicDrift { coefficient: *coefficient }),
        };
        let delay: Arc<dyn DelayDrift> = match &self.delay {
            DelayConfig::Zero => Arc::new(ZeroDelay),
            DelayConfig::Tanh { beta, direction } => Arc::new(TanhDelay { beta: *beta, direction: fit(direction, n) }),
            DelayConfig::Linear { beta } => Arc::new(LinearDelay { beta: *beta }),
        };
        let q = self.noise.amplitudes(n);
        let noise: Arc<dyn NoiseCoefficient> = match self.noise {
            NoiseConfig::Diagonal { .. } => Arc::new(DiagonalNoise { q }),
            NoiseConfig::Multiplicative { kappa, .. } => Arc::new(MultiplicativeNoise { q, kappa }),
        };
        CoefficientSet::new(n, b, delay, noise)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    /// Delay length.
    pub r: f64,
    pub horizon: f64,
    pub dt: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self { r: 0.25, horizon: 1.0, dt: 1.0 / 64.0 }
    }
}

/// `ξ_i(s) = amplitude·i^{−decay}·(1 + slope·s)`, plus `offset_i` on the listed modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub amplitude: f64,
    #[serde(default = "one")]
    pub decay: f64,
    #[serde(default)]
    pub slope: f64,
    #[serde(default)]
    pub offset: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self { amplitude: 0.5, decay: 1.0, slope: 0.0, offset: Vec::new() }
    }
}

impl InitialConfig {
    pub fn point(&self, s: f64, n: usize) -> Vec<f64> {
        (1..=n)
            .map(|i| self.amplitude * (i as f64).powf(-self.decay) * (1.0 + self.slope * s) + self.offset.get(i - 1).copied().unwrap_or(0.0))
            .collect()
    }

    pub fn segment(&self, r: f64, dt: f64, n: usize) -> Result<SegmentPath> {
        SegmentPath::from_fn(r, dt, n, |s| self.point(s, n))
    }
}

/// Resolvent solver sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub lambdas: Vec<f64>,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    /// Gauss-Hermite order of the reference semigroup.
    #[serde(default = "default_gh")]
    pub quadrature_order: usize,
    /// Random pairs for the difference-quotient check.
    #[serde(default = "default_pairs")]
    pub sandwich_pairs: usize,
}

fn default_nodes() -> usize {
    31
}
fn default_gh() -> usize {
    12
}
fn default_pairs() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniquenessConfig {
    /// Truncation level `m`; the comparison run uses `2m`.
    pub level: f64,
    pub dts: Vec<f64>,
    pub reference_dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GalerkinConfig {
    pub modes: Vec<usize>,
    pub reference: usize,
}

/// Superlinear one-mode control `ẋ = −λ₁x + c x³` started above its unstable equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NegativeControl {
    pub coefficient: f64,
    pub x0: f64,
    pub q: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonExplosionConfig {
    pub negative_control: NegativeControl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnackConfig {
    pub train_pairs: usize,
    pub holdout_pairs: usize,
    /// Half-width of the box the segments `ξ` are drawn from.
    pub spread: f64,
    /// Largest `|η(0) − ξ(0)|`.
    pub max_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConjugationConfig {
    pub dts: Vec<f64>,
    /// Paths per grid step; defaults to the top-level count.
    pub samples: Option<usize>,
    /// The identity must shrink at least at this fitted order.
    #[serde(default = "default_order")]
    pub min_order: f64,
}

fn default_order() -> f64 {
    0.4
}

fn divides(step: f64, length: f64) -> bool {
    let k = length / step;
    k >= 1.0 - 1e-9 && (k - k.round()).abs() < 1e-9
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.time;
        if !(t.dt > 0.0 && t.r > 0.0 && t.horizon > 0.0) {
            return Err(Error::config("time", "r, horizon and dt must be positive"));
        }
        if !divides(t.dt, t.r) {
            return Err(Error::config("time.dt", format!("Δt = {} does not divide r = {}", t.dt, t.r)));
        }
        if !divides(t.dt, t.horizon) {
            return Err(Error::config("time.dt", format!("Δt = {} does not divide T = {}", t.dt, t.horizon)));
        }
        if self.samples < 100 {
            return Err(Error::config("samples", format!("need at least 100 paths, got {}", self.samples)));
        }
        if self.spectrum.modes == 0 {
            return Err(Error::config("spectrum.modes", "need at least one mode"));
        }
        self.spectrum.build(self.spectrum.modes).map_err(|e| Error::config("spectrum", e.to_string()))?;
        if let Some(u) = &self.uniqueness {
            if !(u.level > 0.0) {
                return Err(Error::config("uniqueness.level", "truncation level must be positive"));
            }
            if u.dts.len() < 2 {
                return Err(Error::config("uniqueness.dts", "need at least two grid steps for an order fit"));
            }
            for &dt in u.dts.iter().chain([&u.reference_dt]) {
                if !divides(dt, t.r) || !divides(dt, t.horizon) || !divides(u.reference_dt, dt) {
                    return Err(Error::config("uniqueness.dts", format!("{dt} must divide r and T and be a multiple of the reference step")));
                }
            }
        }
        if let Some(g) = &self.galerkin {
            if g.modes.is_empty() || g.modes.iter().any(|&n| n == 0 || n > g.reference) {
                return Err(Error::config("galerkin.modes", "mode counts must lie in 1..=reference"));
            }
        }
        if let Some(nx) = &self.nonexplosion {
            if nx.negative_control.samples == 0 {
                return Err(Error::config("nonexplosion.negative_control.samples", "need at least one path"));
            }
        }
        if let Some(h) = &self.harnack {
            if !(t.horizon > t.r) {
                return Err(Error::config("time.horizon", format!("Harnack experiments need T > r, got T = {}, r = {}", t.horizon, t.r)));
            }
            if h.train_pairs == 0 || h.holdout_pairs == 0 {
                return Err(Error::config("harnack", "need training and held-out pairs"));
            }
            if self.solver.is_none() {
                return Err(Error::config("solver", "Harnack experiments need a solver section"));
            }
        }
        if let Some(c) = &self.conjugation {
            if !(t.horizon > t.r) {
                return Err(Error::config("time.horizon", "conjugation needs T > r"));
            }
            if c.samples.is_some_and(|n| n < 100) {
                return Err(Error::config("conjugation.samples", "need at least 100 paths"));
            }
            if c.dts.len() < 2 {
                return Err(Error::config("conjugation.dts", "need at least two grid steps for an order fit"));
            }
            for &dt in &c.dts {
                if !divides(dt, t.r) || !divides(dt, t.horizon) {
                    return Err(Error::config("conjugation.dts", format!("{dt} must divide r and T")));
                }
            }
            if self.solver.is_none() {
                return Err(Error::config("solver", "conjugation needs a solver section"));
            }
        }
        if let Some(s) = &self.solver {
            if s.lambdas.is_empty() || s.lambdas.iter().any(|l| !(*l > 0.0)) {
                return Err(Error::config("solver.lambdas", "need positive λ values"));
            }
            if s.nodes < 2 {
                return Err(Error::config("solver.nodes", "need at least two nodes per axis"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    /// Digest of everything that determines the results; the output directory is left out.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v.as_object_mut().expect("config is a table").remove("out");
        let json = serde_json::to_string(&v).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        self.spectrum.build(self.spectrum.modes)
    }

    pub fn coeffs(&self) -> CoefficientSet {
        self.coefficients.build(self.spectrum.modes)
    }

    pub fn initial_segment(&self) -> Result<SegmentPath> {
        self.initial.segment(self.time.r, self.time.dt, self.spectrum.modes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
        seed = 1
        samples = 200
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

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!(c.coefficients.drift, DriftConfig::Zero);
        assert_eq!(c.out, PathBuf::from("out"));
        assert_eq!(c.coeffs().dim, 2);
    }

    #[test]
    fn grid_must_divide_delay_and_horizon() {
        let bad = BASE.replace("dt = 0.0625", "dt = 0.1");
        match ExperimentConfig::from_toml(&bad) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "time.dt"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn too_few_samples_is_a_config_error() {
        let bad = BASE.replace("samples = 200", "samples = 99");
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(Error::Config { field, .. }) if field == "samples"));
    }

    #[test]
    fn harnack_needs_horizon_past_delay() {
        let bad = BASE.replace("horizon = 1.0", "horizon = 0.25")
            + "[solver]\nlambdas = [100.0]\n[harnack]\ntrain_pairs = 1\nholdout_pairs = 1\nspread = 1.0\nmax_offset = 0.5\n";
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(Error::Config { field, .. }) if field == "time.horizon"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml(&(BASE.to_string() + "bogus = 3\n")).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::from_toml(BASE).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.out = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn coefficients_are_cut_and_padded() {
        let cfg = CoefficientConfig {
            drift: DriftConfig::Dini {
                direction: vec![1.0, 2.0, 3.0],
                center: vec![0.0],
                active: 2,
                modulus: ModulusConfig::Power { k: 1.0, alpha: 0.5 },
            },
            delay: DelayConfig::Zero,
            noise: NoiseConfig::Diagonal { q: 2.0, decay: 1.0 },
        };
        let c = cfg.build(4);
        assert_eq!(c.q.diagonal(), &[2.0, 1.0, 2.0 / 3.0, 0.5]);
        let mut out = vec![0.0; 4];
        c.b.accumulate(0.0, &[1.0, 0.0, 0.0, 0.0], 1.0, &mut out);
        assert_eq!(out, vec![1.0, 2.0, 3.0, 0.0]);
    }
}
