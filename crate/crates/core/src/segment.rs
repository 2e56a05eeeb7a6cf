//! Delay segments `ξ ∈ C([−r,0]; H)` on a uniform grid, and simulated trajectories.
//!
//! States are stored flat and row-major: row `k` is the mode vector at grid
//! time `−r + kΔt`.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::analysis::spectrum::norm;
use crate::error::{Error, Result};

/// Steps per delay horizon, requiring `Δt` to divide `r` exactly (up to roundoff).
pub fn grid_steps(length: f64, dt: f64, what: &str) -> Result<usize> {
    if !(dt > 0.0) {
        return Err(Error::config("dt", format!("time step must be positive, got {dt}")));
    }
    let k = (length / dt).round();
    if (k * dt - length).abs() > 1e-9 * length.max(dt) || k < 0.0 {
        return Err(Error::config(what, format!("Δt = {dt} does not divide {what} = {length}")));
    }
    Ok(k as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPath {
    pub r: f64,
    pub grid_step: f64,
    dim: usize,
    values: Vec<f64>,
    /// Use the `e^{−s}`-weighted norm (the infinite-delay variant).
    pub weighted: bool,
}

impl SegmentPath {
    pub fn new(r: f64, grid_step: f64, dim: usize, values: Vec<f64>) -> Result<Self> {
        let steps = grid_steps(r, grid_step, "r")?;
        if dim == 0 || values.len() != (steps + 1) * dim {
            return Err(Error::input(format!(
                "segment needs {} values ({} grid points × {dim} modes), got {}",
                (steps + 1) * dim,
                steps + 1,
                values.len()
            )));
        }
        Ok(Self { r, grid_step, dim, values, weighted: false })
    }

    /// `ξ(s) = g(s)` sampled on the grid.
    pub fn from_fn(r: f64, grid_step: f64, dim: usize, mut g: impl FnMut(f64) -> Vec<f64>) -> Result<Self> {
        let steps = grid_steps(r, grid_step, "r")?;
        let mut values = Vec::with_capacity((steps + 1) * dim);
        for k in 0..=steps {
            let v = g(-r + k as f64 * grid_step);
            if v.len() != dim {
                return Err(Error::input("segment generator returned a vector of the wrong dimension"));
            }
            values.extend(v);
        }
        Self::new(r, grid_step, dim, values)
    }

    pub fn constant(r: f64, grid_step: f64, v: &[f64]) -> Result<Self> {
        Self::from_fn(r, grid_step, v.len(), |_| v.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn view(&self) -> SegmentView<'_> {
        SegmentView { dim: self.dim, grid_step: self.grid_step, data: &self.values }
    }

    /// Value at grid index `k` (0 is `−r`).
    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.at(self.len() - 1)
    }

    pub fn map_points(&self, mut f: impl FnMut(f64, &[f64]) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(self.values.len());
        for k in 0..self.len() {
            values.extend(f(-self.r + k as f64 * self.grid_step, self.at(k)));
        }
        let mut s = Self::new(self.r, self.grid_step, self.dim, values)?;
        s.weighted = self.weighted;
        Ok(s)
    }

    /// `π_n` applied pointwise.
    pub fn project(&self, n: usize) -> Self {
        let mut s = self.clone();
        for row in s.values.chunks_mut(self.dim) {
            row.iter_mut().skip(n).for_each(|v| *v = 0.0);
        }
        s
    }

    /// Zero-pad or truncate every point to `dim` modes.
    pub fn resized(&self, dim: usize) -> Self {
        let mut values = Vec::with_capacity(self.len() * dim);
        for k in 0..self.len() {
            let row = self.at(k);
            values.extend((0..dim).map(|i| row.get(i).copied().unwrap_or(0.0)));
        }
        Self { r: self.r, grid_step: self.grid_step, dim, values, weighted: self.weighted }
    }

    pub fn sub(&self, other: &SegmentPath) -> Result<SegmentPath> {
        if self.dim != other.dim || self.values.len() != other.values.len() {
            return Err(Error::input("segments have different shapes"));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Self { values, ..self.clone() })
    }
}

/// Borrowed segment over `[t−r, t]`, as handed to delay drifts.
#[derive(Debug, Clone, Copy)]
pub struct SegmentView<'a> {
    pub dim: usize,
    pub grid_step: f64,
    pub data: &'a [f64],
}

impl<'a> SegmentView<'a> {
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn at(&self, k: usize) -> &'a [f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    /// `ξ(0)`
    pub fn last(&self) -> &'a [f64] {
        self.at(self.len() - 1)
    }

    /// `ξ(−r)`
    pub fn first(&self) -> &'a [f64] {
        self.at(0)
    }

    /// `sup_s |ξ(s)|` over the grid.
    pub fn sup_norm(&self) -> f64 {
        self.data.chunks(self.dim).map(norm).fold(0.0, f64::max)
    }

    pub fn to_path(&self) -> Result<SegmentPath> {
        let r = (self.len() - 1) as f64 * self.grid_step;
        SegmentPath::new(r, self.grid_step, self.dim, self.data.to_vec())
    }
}

/// `‖ξ‖_∞ = sup_s |ξ(s)|`, or `sup_s e^{−s}|ξ(s)|` for weighted segments.
pub fn segment_norm(xi: &SegmentPath) -> Result<f64> {
    if xi.is_empty() {
        return Err(Error::input("empty segment"));
    }
    if !xi.weighted {
        return Ok(xi.view().sup_norm());
    }
    Ok((0..xi.len())
        .map(|k| {
            let s = -xi.r + k as f64 * xi.grid_step;
            (-s).exp() * norm(xi.at(k))
        })
        .fold(0.0, f64::max))
}

/// `max_k |ξ(s_k + h) − ξ(s_k)|` for a lag of `lag` grid steps. Reported only; no verdict.
pub fn continuity_modulus(xi: &SegmentPath, lag: usize) -> f64 {
    if lag == 0 || lag >= xi.len() {
        return 0.0;
    }
    (0..xi.len() - lag)
        .map(|k| {
            let (a, b) = (xi.at(k), xi.at(k + lag));
            a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t0: f64,
    pub grid_step: f64,
    /// Grid steps per delay horizon `r`.
    pub delay_steps: usize,
    pub dim: usize,
    /// Rows for grid times `−r, −r+Δt, …` up to `min(T, ζ)`.
    states: Vec<f64>,
    /// First grid time at which the explosion threshold was crossed.
    pub life_time: Option<f64>,
    pub horizon: f64,
    pub stopping_levels: BTreeMap<u32, f64>,
}

/// Levels recorded in [`Trajectory::stopping_levels`].
pub const RECORDED_LEVELS: u32 = 64;

impl Trajectory {
    pub fn new(initial: &SegmentPath, horizon: f64) -> Self {
        Self {
            t0: 0.0,
            grid_step: initial.grid_step,
            delay_steps: initial.len() - 1,
            dim: initial.dim(),
            states: initial.values().to_vec(),
            life_time: None,
            horizon,
            stopping_levels: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        self.states.extend_from_slice(x);
    }

    pub fn rows(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn raw(&self) -> &[f64] {
        &self.states
    }

    /// Row index of time `t` (on the grid).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = ((t - self.t0) / self.grid_step).round();
        if ((t - self.t0) - k * self.grid_step).abs() > 1e-9 * self.grid_step.max(t.abs()) {
            return None;
        }
        let idx = k as i64 + self.delay_steps as i64;
        (idx >= 0 && (idx as usize) < self.rows()).then_some(idx as usize)
    }

    pub fn time_of(&self, row: usize) -> f64 {
        self.t0 + (row as f64 - self.delay_steps as f64) * self.grid_step
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn state(&self, t: f64) -> Option<&[f64]> {
        self.index_of(t).map(|k| self.row(k))
    }

    /// Last stored time, `min(T, ζ)` on the grid.
    pub fn end_time(&self) -> f64 {
        self.time_of(self.rows() - 1)
    }

    pub fn exploded(&self) -> bool {
        self.life_time.is_some()
    }

    /// Segment view ending at row `k`.
    pub fn window(&self, k: usize) -> SegmentView<'_> {
        let lo = k - self.delay_steps;
        SegmentView { dim: self.dim, grid_step: self.grid_step, data: &self.states[lo * self.dim..(k + 1) * self.dim] }
    }

    /// `sup_{t ≤ end} |X(t)|` over all stored states, including the initial segment.
    pub fn sup_norm(&self) -> f64 {
        self.states.chunks(self.dim).map(norm).fold(0.0, f64::max)
    }

    pub fn record_stopping_levels(&mut self) {
        self.stopping_levels = (1..=RECORDED_LEVELS).map(|n| (n, stopping_time(self, n as f64))).collect();
    }
}

/// `X_t`: the slice over `[t−r, t]`.
pub fn extract_segment(tr: &Trajectory, t: f64) -> Result<SegmentPath> {
    if t < tr.t0 - 1e-12 {
        return Err(Error::input(format!("segment time {t} precedes the start time {}", tr.t0)));
    }
    let Some(k) = tr.index_of(t) else {
        if let Some(z) = tr.life_time {
            if t >= z - 1e-12 {
                return Err(Error::Explosion { time: z });
            }
        }
        return Err(Error::input(format!("t = {t} is not a stored grid time (end {})", tr.end_time())));
    };
    tr.window(k).to_path()
}

/// `τ_n = n ∧ inf{t ≥ 0 : |X(t)| ≥ n}`, scanning grid times `t ≥ 0`.
pub fn stopping_time(tr: &Trajectory, n: f64) -> f64 {
    for k in tr.delay_steps..tr.rows() {
        let t = tr.time_of(k);
        if t >= n {
            return n;
        }
        if norm(tr.row(k)) >= n {
            return t;
        }
    }
    match tr.life_time {
        Some(z) => z.min(n),
        None => n,
    }
}

/// CSV with a `#` header carrying the seed and config hash, then `t,mode_1,…,mode_n`.
/// Values use 17 significant digits so the text round-trips to the same doubles.
pub fn write_csv(tr: &Trajectory, seed: u64, config_hash: &str, mut w: impl Write) -> Result<()> {
    writeln!(w, "# seed={seed} config_hash={config_hash} life_time={}", fmt_opt(tr.life_time))?;
    write!(w, "t")?;
    for i in 1..=tr.dim {
        write!(w, ",mode_{i}")?;
    }
    writeln!(w)?;
    for k in 0..tr.rows() {
        write!(w, "{}", fmt17(tr.time_of(k)))?;
        for v in tr.row(k) {
            write!(w, ",{}", fmt17(*v))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt17).unwrap_or_else(|| "inf".into())
}
