//! Picard iteration for the resolvent equation
//!
//! ```text
//! u(s,x) = ∫_s^T e^{−λ(t−s)} P⁰_{s,t}(∇u(t,·)·b(t,·) + b(t,·))(x) dt
//! ```
//!
//! on a tensor grid in the active modes. The integrand is carried as a node
//! function, read as its hat interpolant, so every `P⁰` application is exact
//! and separable (see [`super::kernel`]). Derivatives come from the
//! differentiated kernel, never from differencing node values.
//!
//! Time is resolved on a few nodes clustered in the boundary layer `T − O(1/λ)`;
//! `g = ∇u·b + b` is linear in `t` between them. The `t`-integral runs in
//! `v = λ(t − s)` with a geometric mesh toward `v = 0`, where gradients of
//! `P⁰g` grow like `(t − s)^{−1/2}`, and panels widening with the decay of `e^{−v}` beyond. Contributions
//! past `v = 40` are below `e^{−40}` and dropped.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::field::{CertifiedBounds, FieldHeader, RegularizingField};
use super::kernel::{axis_operator, mode_product};
use super::reference::{ReferenceSemigroup, MAX_TENSOR_DIM};
use crate::analysis::classes::weighted_semigroup_integral;
use crate::analysis::GaussLegendre;
use crate::error::{Error, Result};
use crate::simulator::Drift;

/// Offsets `c/λ` before `T` at which time nodes are placed.
const LAYER_OFFSETS: [f64; 6] = [8.0, 4.0, 2.0, 1.0, 0.5, 0.25];
/// Beyond `λ(t − s) = V_MAX` the weight `e^{−λ(t−s)}` is negligible.
const V_MAX: f64 = 40.0;
/// `5⁷/2⁵`, the constant of the composite threshold bound.
pub const COMPOSITE_CONSTANT: f64 = 78125.0 / 32.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    /// Half-width of the box `[−L_j, L_j]` per active mode.
    pub half_width: Vec<f64>,
    /// Nodes per axis.
    pub nodes: usize,
}

impl SpatialGrid {
    /// `L_j = max(4·q_j/√(2λ_j) + |x0_j|, 1.5)`: four stationary standard deviations around the start.
    pub fn auto(reference: &ReferenceSemigroup, x0: &[f64], nodes: usize) -> Self {
        let half_width = reference
            .q_diag
            .iter()
            .zip(reference.spec.eigenvalues())
            .enumerate()
            .map(|(j, (q, l))| (4.0 * q / (2.0 * l).sqrt() + x0.get(j).map_or(0.0, |v| v.abs())).max(1.5))
            .collect();
        Self { half_width, nodes }
    }

    fn axes(&self) -> Vec<Vec<f64>> {
        self.half_width
            .iter()
            .map(|&l| (0..self.nodes).map(|i| -l + 2.0 * l * i as f64 / (self.nodes - 1) as f64).collect())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop when the ℋ-norm of successive differences drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Gauss–Legendre points per panel of the time integral.
    pub points: usize,
    /// Geometric levels toward `t = s`.
    pub levels: usize,
    pub ratio: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100, points: 6, levels: 10, ratio: 0.25 }
    }
}

/// `{0, T/4, T/2, 3T/4} ∪ {T − c/λ} ∪ {T}`, sorted.
pub fn time_nodes(lambda: f64, horizon: f64) -> Vec<f64> {
    let mut t: Vec<f64> = vec![0.0, 0.25 * horizon, 0.5 * horizon, 0.75 * horizon, horizon];
    t.extend(LAYER_OFFSETS.iter().map(|c| horizon - c / lambda).filter(|&s| s > 0.0));
    t.sort_by(|a, b| a.total_cmp(b));
    t.dedup_by(|a, b| (*a - *b).abs() < 1e-9 * horizon);
    t
}

/// One quadrature point of `∫_s^T e^{−λ(t−s)} P⁰_{s,t} g(t) dt`.
struct QuadPoint {
    weight: f64,
    piece: usize,
    alpha: f64,
    /// Per axis: value and first-derivative operators.
    ops: Vec<[DMatrix<f64>; 2]>,
    decay: Vec<f64>,
    sigma: Vec<f64>,
}

fn breakpoints(levels: usize, ratio: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (1..=levels).map(|k| ratio.powi(k as i32)).collect();
    v.extend([0.0, 1.0, 2.0, 3.0, 4.5, 6.0, 8.0, 11.0, 15.0, 20.0, 27.0, V_MAX]);
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

struct Plan {
    /// One list per time node except the last.
    points: Vec<Vec<QuadPoint>>,
}

fn build_plan(reference: &ReferenceSemigroup, axes: &[Vec<f64>], lambda: f64, times: &[f64], opts: &SolverOptions) -> Plan {
    let rule = GaussLegendre::new(opts.points);
    let marks = breakpoints(opts.levels, opts.ratio);
    let last = times.len() - 1;
    let points = (0..last)
        .into_par_iter()
        .map(|i| {
            let s = times[i];
            let mut out = Vec::new();
            for p in i..last {
                let (va, vb) = (lambda * (times[p] - s), lambda * (times[p + 1] - s));
                if va >= V_MAX {
                    break;
                }
                let mut cuts: Vec<f64> = marks.iter().copied().filter(|&m| m > va && m < vb.min(V_MAX)).collect();
                cuts.insert(0, va);
                cuts.push(vb.min(V_MAX));
                for w in cuts.windows(2) {
                    let (lo, hi) = (w[0], w[1]);
                    let half = 0.5 * (hi - lo);
                    for (z, gw) in rule.nodes.iter().zip(&rule.weights) {
                        let v = lo + half * (1.0 + z);
                        let tau = v / lambda;
                        let tr = reference.transition(tau);
                        let ops = tr
                            .iter()
                            .zip(axes)
                            .map(|(&(dec, sig), nodes)| [axis_operator(nodes, nodes, dec, sig, 0), axis_operator(nodes, nodes, dec, sig, 1)])
                            .collect();
                        out.push(QuadPoint {
                            weight: gw * half * (-v).exp() / lambda,
                            piece: p,
                            alpha: ((s + tau - times[p]) / (times[p + 1] - times[p])).clamp(0.0, 1.0),
                            ops,
                            decay: tr.iter().map(|x| x.0).collect(),
                            sigma: tr.iter().map(|x| x.1).collect(),
                        });
                    }
                }
            }
            out
        })
        .collect();
    Plan { points }
}

/// Apply `ops[j]` along every axis `j`.
fn apply_separable(data: &[f64], dims: &[usize], ops: &[&DMatrix<f64>], buf: &mut Vec<f64>) -> Vec<f64> {
    let mut cur = data.to_vec();
    buf.resize(cur.len(), 0.0);
    for (axis, w) in ops.iter().enumerate() {
        mode_product(&cur, dims, axis, w, buf);
        std::mem::swap(&mut cur, buf);
    }
    cur
}

/// Per time node: `u_c` and `∂_j u_c` at every node, `[c][node]` and `[c][j][node]`.
#[derive(Clone)]
struct Iterate {
    values: Vec<Vec<f64>>,
    grads: Vec<Vec<f64>>,
}

/// `sup |diag(√λ)Δu| + sup ‖diag(√λ)Δ∇u‖` over all time nodes and grid nodes.
fn h_norm_diff(a: &[Iterate], b: &[Iterate], sqrt_l: &[f64], nn: usize) -> f64 {
    let d = sqrt_l.len();
    let mut su = 0.0_f64;
    let mut sg = 0.0_f64;
    let mut m = DMatrix::zeros(d, d);
    for (x, y) in a.iter().zip(b) {
        for node in 0..nn {
            let mut s = 0.0;
            for c in 0..d {
                let dv = sqrt_l[c] * (x.values[c][node] - y.values[c][node]);
                s += dv * dv;
                for j in 0..d {
                    m[(c, j)] = sqrt_l[c] * (x.grads[c * d + j][node] - y.grads[c * d + j][node]);
                }
            }
            su = su.max(s.sqrt());
            sg = sg.max(op_norm(&m));
        }
    }
    su + sg
}

pub(crate) fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.iter().all(|v| *v == 0.0) {
        0.0
    } else {
        m.singular_values().max()
    }
}

/// Drift at the grid nodes, restricted to the active modes.
fn drift_table(b: &dyn Drift, n_modes: usize, d: usize, t: f64, axes: &[Vec<f64>], dims: &[usize]) -> Result<Vec<Vec<f64>>> {
    let nn: usize = dims.iter().product();
    let mut table = vec![vec![0.0; nn]; d];
    let mut x = vec![0.0; n_modes];
    let mut out = vec![0.0; n_modes];
    for node in 0..nn {
        let mut rem = node;
        for j in 0..d {
            x[j] = axes[j][rem % dims[j]];
            rem /= dims[j];
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        b.accumulate(t, &x, 1.0, &mut out);
        let active: f64 = out[..d].iter().map(|v| v.abs()).fold(0.0, f64::max);
        let rest: f64 = out[d..].iter().map(|v| v.abs()).fold(0.0, f64::max);
        if rest > 1e-12 * active.max(1.0) {
            return Err(Error::input("drift has components outside the active modes; the regularizer only covers the active subspace"));
        }
        for c in 0..d {
            table[c][node] = out[c];
        }
    }
    Ok(table)
}

/// `g = ∇u·b + b` at every node of one time slice.
fn integrand(it: &Iterate, bt: &[Vec<f64>], d: usize, nn: usize) -> Vec<Vec<f64>> {
    (0..d)
        .map(|c| {
            (0..nn)
                .map(|node| bt[c][node] + (0..d).map(|j| it.grads[c * d + j][node] * bt[j][node]).sum::<f64>())
                .collect()
        })
        .collect()
}

fn gamma_step(plan: &Plan, g: &[Vec<Vec<f64>>], dims: &[usize]) -> Vec<Iterate> {
    let d = dims.len();
    let nn: usize = dims.iter().product();
    let mut out: Vec<Iterate> = plan
        .points
        .par_iter()
        .map(|pts| {
            let mut values = vec![vec![0.0; nn]; d];
            let mut grads = vec![vec![0.0; nn]; d * d];
            let mut buf = Vec::new();
            let mut mix = vec![0.0; nn];
            for qp in pts {
                for c in 0..d {
                    let (g0, g1) = (&g[qp.piece][c], &g[qp.piece + 1][c]);
                    for k in 0..nn {
                        mix[k] = (1.0 - qp.alpha) * g0[k] + qp.alpha * g1[k];
                    }
                    let value_ops: Vec<&DMatrix<f64>> = qp.ops.iter().map(|o| &o[0]).collect();
                    let v = apply_separable(&mix, dims, &value_ops, &mut buf);
                    for (a, x) in values[c].iter_mut().zip(&v) {
                        *a += qp.weight * x;
                    }
                    for j in 0..d {
                        let ops: Vec<&DMatrix<f64>> = qp.ops.iter().enumerate().map(|(k, o)| &o[usize::from(k == j)]).collect();
                        let v = apply_separable(&mix, dims, &ops, &mut buf);
                        for (a, x) in grads[c * d + j].iter_mut().zip(&v) {
                            *a += qp.weight * x;
                        }
                    }
                }
            }
            Iterate { values, grads }
        })
        .collect();
    out.push(Iterate { values: vec![vec![0.0; nn]; d], grads: vec![vec![0.0; nn]; d * d] });
    out
}

/// Solve for `u` at resolvent parameter `λ` on `[0, T]`.
///
/// `b` must be bounded and take values in the span of the active modes (the
/// first `reference.dim()` modes).
pub fn solve_u(
    reference: &ReferenceSemigroup,
    b: &dyn Drift,
    lambda: f64,
    horizon: f64,
    grid: &SpatialGrid,
    opts: &SolverOptions,
) -> Result<RegularizingField> {
    let d = reference.dim();
    let n_modes = reference.spec.n_modes();
    if !(lambda > 0.0) || !(horizon > 0.0) {
        return Err(Error::input(format!("λ and T must be positive, got λ = {lambda}, T = {horizon}")));
    }
    if d > MAX_TENSOR_DIM {
        return Err(Error::input(format!("the grid solver resolves at most {MAX_TENSOR_DIM} active modes, got {d}")));
    }
    if grid.half_width.len() != d || grid.nodes < 3 {
        return Err(Error::input("grid needs one half-width per active mode and at least 3 nodes per axis"));
    }
    let sup_b = b.sup_bound().ok_or_else(|| Error::input("the resolvent solver needs a drift with a declared sup bound"))?;
    let axes = grid.axes();
    let dims = vec![grid.nodes; d];
    let nn: usize = dims.iter().product();
    let lambdas: Vec<f64> = reference.spec.eigenvalues()[..d].to_vec();
    let sqrt_l: Vec<f64> = lambdas.iter().map(|l| l.sqrt()).collect();

    let times = time_nodes(lambda, horizon);
    let bt: Vec<Vec<Vec<f64>>> = times.iter().map(|&t| drift_table(b, n_modes, d, t, &axes, &dims)).collect::<Result<_>>()?;
    let sup_grid = bt.iter().flatten().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
    if sup_grid > sup_b * (1.0 + 1e-9) + 1e-12 {
        return Err(Error::input(format!("drift exceeds its declared bound on the grid: {sup_grid} > {sup_b}")));
    }
    let plan = build_plan(reference, &axes, lambda, &times, opts);

    let zero = Iterate { values: vec![vec![0.0; nn]; d], grads: vec![vec![0.0; nn]; d * d] };
    let mut cur = vec![zero; times.len()];
    let mut differences = Vec::new();
    let mut converged = false;
    for _ in 0..opts.max_iter {
        let g: Vec<Vec<Vec<f64>>> = cur.iter().zip(&bt).map(|(it, b)| integrand(it, b, d, nn)).collect();
        let next = gamma_step(&plan, &g, &dims);
        let diff = h_norm_diff(&next, &cur, &sqrt_l, nn);
        cur = next;
        differences.push(diff);
        log::debug!("event=gamma_iteration lambda={lambda} k={} diff={diff:e}", differences.len());
        if diff < opts.tol {
            converged = true;
            break;
        }
        let k = differences.len();
        if k >= 4 && diff > differences[k - 2] && diff > 1e3 * differences[0].max(1e-300) {
            break;
        }
    }
    let contraction_factor = differences
        .windows(2)
        .filter(|w| w[0] > 1e-13)
        .last()
        .map_or(0.0, |w| w[1] / w[0]);
    if contraction_factor >= 1.0 || (!converged && differences.len() < opts.max_iter) {
        return Err(Error::NotContractive { lambda, factor: contraction_factor });
    }

    // final pass: the Hermite jet and pure second derivatives
    let g: Vec<Vec<Vec<f64>>> = cur.iter().zip(&bt).map(|(it, b)| integrand(it, b, d, nn)).collect();
    let (jets, hess_norm) = final_pass(&plan, &g, &dims, &axes, d);

    let bounds = certify(reference, &jets, &hess_norm, &times, &dims, lambda, horizon);
    let header = FieldHeader {
        lambda,
        horizon,
        n_modes,
        active: (0..d).collect(),
        active_lambdas: lambdas,
        axes: grid.half_width.iter().map(|&l| (-l, l, grid.nodes)).collect(),
        times,
        bounds,
        contraction_factor,
        iterations: differences.len(),
        differences,
        spectrum_fingerprint: reference.spec.fingerprint(),
    };
    RegularizingField::new(header, jets, hess_norm)
}

fn final_pass(plan: &Plan, g: &[Vec<Vec<f64>>], dims: &[usize], axes: &[Vec<f64>], d: usize) -> (Vec<f64>, Vec<f64>) {
    let nn: usize = dims.iter().product();
    let nj = 1usize << d;
    let slices: Vec<(Vec<f64>, Vec<f64>)> = plan
        .points
        .par_iter()
        .map(|pts| {
            // [c][o][node] and pure seconds [c][j][node]
            let mut jet = vec![0.0; d * nj * nn];
            let mut second = vec![0.0; d * d * nn];
            let mut buf = Vec::new();
            let mut mix = vec![0.0; nn];
            for qp in pts {
                let w2: Vec<DMatrix<f64>> =
                    (0..d).map(|j| axis_operator(&axes[j], &axes[j], qp.decay[j], qp.sigma[j], 2)).collect();
                for c in 0..d {
                    let (g0, g1) = (&g[qp.piece][c], &g[qp.piece + 1][c]);
                    for k in 0..nn {
                        mix[k] = (1.0 - qp.alpha) * g0[k] + qp.alpha * g1[k];
                    }
                    for o in 0..nj {
                        let ops: Vec<&DMatrix<f64>> = (0..d).map(|j| &qp.ops[j][(o >> j) & 1]).collect();
                        let v = apply_separable(&mix, dims, &ops, &mut buf);
                        for (a, x) in jet[(c * nj + o) * nn..(c * nj + o + 1) * nn].iter_mut().zip(&v) {
                            *a += qp.weight * x;
                        }
                    }
                    for j in 0..d {
                        let ops: Vec<&DMatrix<f64>> = (0..d).map(|k| if k == j { &w2[j] } else { &qp.ops[k][0] }).collect();
                        let v = apply_separable(&mix, dims, &ops, &mut buf);
                        for (a, x) in second[(c * d + j) * nn..(c * d + j + 1) * nn].iter_mut().zip(&v) {
                            *a += qp.weight * x;
                        }
                    }
                }
            }
            // ‖∇²u‖ ≤ sqrt(Σ_c ‖∇²u_c‖²) per node
            let mut hess = vec![0.0; nn];
            let mut h = DMatrix::zeros(d, d);
            for (node, hn) in hess.iter_mut().enumerate() {
                let mut total = 0.0;
                for c in 0..d {
                    for j in 0..d {
                        for k in 0..d {
                            h[(j, k)] = if j == k {
                                second[(c * d + j) * nn + node]
                            } else {
                                jet[(c * nj + (1 << j) + (1 << k)) * nn + node]
                            };
                        }
                    }
                    total += op_norm(&h).powi(2);
                }
                *hn = total.sqrt();
            }
            (jet, hess)
        })
        .collect();
    let mut jets = Vec::with_capacity((slices.len() + 1) * d * nj * nn);
    let mut hess = Vec::with_capacity((slices.len() + 1) * nn);
    for (j, h) in slices {
        jets.extend(j);
        hess.extend(h);
    }
    jets.extend(std::iter::repeat(0.0).take(d * nj * nn));
    hess.extend(std::iter::repeat(0.0).take(nn));
    (jets, hess)
}

fn certify(
    reference: &ReferenceSemigroup,
    jets: &[f64],
    hess_norm: &[f64],
    times: &[f64],
    dims: &[usize],
    _lambda: f64,
    horizon: f64,
) -> CertifiedBounds {
    let d = dims.len();
    let nn: usize = dims.iter().product();
    let nj = 1usize << d;
    let sqrt_l: Vec<f64> = reference.spec.eigenvalues()[..d].iter().map(|l| l.sqrt()).collect();
    let (mut u_a, mut grad_a, mut grad) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut m = DMatrix::zeros(d, d);
    let mut ma = DMatrix::zeros(d, d);
    for ti in 0..times.len() {
        for node in 0..nn {
            let mut s = 0.0;
            for c in 0..d {
                let base = ((ti * d + c) * nj) * nn + node;
                s += (sqrt_l[c] * jets[base]).powi(2);
                for j in 0..d {
                    let v = jets[base + (1 << j) * nn];
                    m[(c, j)] = v;
                    ma[(c, j)] = sqrt_l[c] * v;
                }
            }
            u_a = u_a.max(s.sqrt());
            grad = grad.max(op_norm(&m));
            grad_a = grad_a.max(op_norm(&ma));
        }
    }
    let hess = hess_norm.iter().fold(0.0_f64, |a, &b| a.max(b));
    let integral = weighted_semigroup_integral(&reference.spec, horizon, f64::sqrt);
    let composite = COMPOSITE_CONSTANT * (grad_a * integral).powi(4) + grad;
    CertifiedBounds {
        u_a,
        grad_a,
        grad,
        hess,
        composite,
        hess_cap: 0.125,
        grad_a_cap: reference.spec.eigenvalues()[0].sqrt() / 8.0,
        composite_cap: 0.2,
    }
}

/// Smallest-λ field whose bounds are certified, as `(index, λ)`.
pub fn lambda_threshold(fields: &[RegularizingField]) -> Result<(usize, f64)> {
    if fields.is_empty() {
        return Err(Error::input("lambda_threshold needs at least one solved field"));
    }
    let mut order: Vec<usize> = (0..fields.len()).collect();
    order.sort_by(|&a, &b| fields[a].lambda().total_cmp(&fields[b].lambda()));
    for &i in &order {
        if fields[i].bounds().certified() {
            return Ok((i, fields[i].lambda()));
        }
    }
    let top = &fields[*order.last().expect("non-empty")];
    Err(Error::ThresholdNotMet(format!(
        "no λ up to {} qualifies: {}",
        top.lambda(),
        top.bounds().failing().join("; ")
    )))
}

/// Whether `‖u‖_a`, `‖∇u‖_a` and `‖∇²u‖` are non-increasing along increasing λ, up to `rel_tol`.
pub fn bounds_monotone(fields: &[RegularizingField], rel_tol: f64) -> bool {
    let mut sorted: Vec<&RegularizingField> = fields.iter().collect();
    sorted.sort_by(|a, b| a.lambda().total_cmp(&b.lambda()));
    sorted.windows(2).all(|w| {
        let (a, b) = (w[0].bounds(), w[1].bounds());
        b.u_a <= a.u_a * (1.0 + rel_tol) && b.grad_a <= a.grad_a * (1.0 + rel_tol) && b.hess <= a.hess * (1.0 + rel_tol)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{ModulusFunction, Spectrum};
    use crate::simulator::{ConstantDrift, DiniDrift, ZeroDrift};

    fn reference() -> ReferenceSemigroup {
        let spec = Spectrum::power_law(16.0, 2.0, 4, 0.4).unwrap();
        ReferenceSemigroup::new(spec, vec![4.0, 4.0], 12).unwrap()
    }

    fn grid(r: &ReferenceSemigroup, nodes: usize) -> SpatialGrid {
        SpatialGrid::auto(r, &[0.0, 0.0], nodes)
    }

    pub(crate) fn dini(k: f64) -> DiniDrift {
        DiniDrift {
            direction: vec![k, -0.5 * k, 0.0, 0.0],
            center: vec![0.2, -0.1, 0.0, 0.0],
            active: 2,
            phi: ModulusFunction::log_dini(1.0, 0.5, 2.0),
        }
    }

    #[test]
    fn time_nodes_cluster_before_the_horizon() {
        let t = time_nodes(100.0, 1.0);
        assert_eq!(t[0], 0.0);
        assert_eq!(*t.last().unwrap(), 1.0);
        assert!(t.windows(2).all(|w| w[0] < w[1]));
        assert!(t.iter().any(|&s| (s - 0.99).abs() < 1e-12));
        // offsets beyond T are dropped
        assert!(time_nodes(1.0, 1.0).iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn zero_drift_gives_zero_field_in_one_iteration() {
        let r = reference();
        let f = solve_u(&r, &ZeroDrift, 50.0, 1.0, &grid(&r, 9), &SolverOptions::default()).unwrap();
        assert_eq!(f.header.iterations, 1);
        assert!(f.jets().iter().all(|v| *v == 0.0));
        assert_eq!(f.bounds().composite, 0.0);
        assert!(f.bounds().certified());
    }

    #[test]
    fn constant_drift_matches_closed_form() {
        let r = reference();
        let c = [0.7, -1.2];
        let lambda = 30.0;
        let b = ConstantDrift { value: vec![c[0], c[1], 0.0, 0.0] };
        let f = solve_u(&r, &b, lambda, 1.0, &grid(&r, 7), &SolverOptions::default()).unwrap();
        for &s in &[0.0, 0.3, 0.9, 0.97, 0.999] {
            let (u, g) = f.eval(s, &[0.3, -0.2, 1.0, 0.0]);
            let k = -(-lambda * (1.0 - s)).exp_m1() / lambda;
            for i in 0..2 {
                // linear interpolation in time between nodes is the only approximation
                assert!((u[i] - c[i] * k).abs() < 2e-3 * c[i].abs() * k.max(1e-3) + 1e-12, "{s} {i}: {} vs {}", u[i], c[i] * k);
            }
            assert!(g.iter().all(|v| v.abs() < 1e-12));
        }
        for (ti, &s) in f.header.times.iter().enumerate() {
            let k = -(-lambda * (1.0 - s)).exp_m1() / lambda;
            assert!((f.jet(ti, 0, 0, 5) - c[0] * k).abs() < 1e-10, "node {s}");
        }
    }

    #[test]
    fn drift_outside_the_active_modes_is_rejected() {
        let r = reference();
        let b = ConstantDrift { value: vec![1.0, 0.0, 0.5, 0.0] };
        assert!(solve_u(&r, &b, 50.0, 1.0, &grid(&r, 5), &SolverOptions::default()).is_err());
    }

    #[test]
    fn field_solves_the_resolvent_equation_at_sample_points() {
        // Γu computed independently: Gauss–Hermite in space on the interpolated field,
        // a fine graded rule in time
        let r = reference();
        let b = dini(3.0);
        let lambda = 100.0;
        let f = solve_u(&r, &b, lambda, 1.0, &grid(&r, 25), &SolverOptions::default()).unwrap();
        let gh = ReferenceSemigroup::new(r.spec.clone(), r.q_diag.clone(), 24).unwrap();
        let g = |t: f64, y: &[f64]| {
            let full = [y[0], y[1], 0.0, 0.0];
            let (_, du) = f.eval(t, &full);
            let mut bv = vec![0.0; 4];
            b.accumulate(t, &full, 1.0, &mut bv);
            (0..2).map(|c| bv[c] + (0..2).map(|j| du[(c, j)] * bv[j]).sum::<f64>()).collect::<Vec<_>>()
        };
        let rule = GaussLegendre::new(10);
        for x in [[0.1, 0.05], [-0.4, 0.3], [0.6, -0.5]] {
            let s = 0.25;
            let want = |c: usize| {
                crate::analysis::quadrature::graded_from_singularity(&rule, 40.0, 14, 0.35, |v| {
                    let t = s + v / lambda;
                    (-v).exp() / lambda * gh.ou_apply(|y| g(t, y), s, t, &x).unwrap()[c]
                })
            };
            let (u, _) = f.eval(s, &[x[0], x[1], 0.0, 0.0]);
            for c in 0..2 {
                let w = want(c);
                assert!((u[c] - w).abs() < 2e-2 * w.abs() + 1e-5, "{x:?} {c}: {} vs {w}", u[c]);
            }
        }
    }

    #[test]
    fn threshold_picks_smallest_certified_lambda() {
        let r = reference();
        let b = dini(1.0);
        let fields: Vec<_> =
            [400.0, 25.0].iter().map(|&l| solve_u(&r, &b, l, 1.0, &grid(&r, 9), &SolverOptions::default()).unwrap()).collect();
        let certified: Vec<bool> = fields.iter().map(|f| f.bounds().certified()).collect();
        match lambda_threshold(&fields) {
            Ok((i, l)) => {
                assert!(fields[i].bounds().certified());
                assert!(l == 25.0 || !certified[1]);
            }
            Err(e) => {
                assert!(!certified.iter().any(|c| *c));
                assert!(e.to_string().contains("400"));
            }
        }
        assert!(bounds_monotone(&fields, 0.0));
    }
}
