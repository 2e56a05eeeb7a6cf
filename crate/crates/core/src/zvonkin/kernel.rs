//! One-dimensional Gaussian smoothing of a piecewise-linear node function.
//!
//! A node function `h` on `y_0 < … < y_{N−1}` is read as its hat interpolant,
//! extended by constants outside `[y_0, y_{N−1}]`:
//! `h(y) = h_0 + Σ_k s_k (clamp(y, y_k, y_{k+1}) − y_k)`. For
//! `Y ~ N(m, σ²)` and `z = (y − m)/σ`,
//!
//! ```text
//! E[clamp(Y, a, b) − a] = σ [F(z_b) − F(z_a)],   F(z) = z Φ̄(z) − φ(z)
//! ```
//!
//! and the `m`-derivatives are `Φ(z_b) − Φ(z_a)` and `(φ(z_a) − φ(z_b))/σ`.
//! Evaluated at `m = e^{−λτ} x_a`, these give the rows of a matrix acting on
//! node values: value, first and second `x`-derivative of `P⁰_τ h` at the nodes.

use nalgebra::DMatrix;
use statrs::function::erf::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

fn pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Upper tail `Φ̄(z)`.
fn upper(z: f64) -> f64 {
    0.5 * erfc(z * FRAC_1_SQRT_2)
}

/// `F(z) = zΦ̄(z) − φ(z)`; for `z < 0` through `F(z) = z + F(−z)` to keep the small part exact.
fn big_f(z: f64) -> f64 {
    if z < 0.0 {
        z + big_f(-z)
    } else {
        z * upper(z) - pdf(z)
    }
}

/// Rows for evaluation points `x_a` (the nodes themselves), derivative order `order ∈ {0,1,2}`.
///
/// `decay = e^{−λτ}`, `sigma` the transition standard deviation. Derivatives
/// are in `x`, so they carry `decay^order`.
pub fn axis_operator(nodes: &[f64], eval_at: &[f64], decay: f64, sigma: f64, order: usize) -> DMatrix<f64> {
    let n = nodes.len();
    let mut w = DMatrix::<f64>::zeros(eval_at.len(), n);
    let mut cell = vec![0.0; n];
    let mut zs = vec![0.0; n];
    for (a, &x) in eval_at.iter().enumerate() {
        let m = decay * x;
        for (z, y) in zs.iter_mut().zip(nodes) {
            *z = (y - m) / sigma;
        }
        match order {
            0 => {
                let f: Vec<f64> = zs.iter().map(|&z| big_f(z)).collect();
                for k in 0..n - 1 {
                    cell[k] = sigma * (f[k + 1] - f[k]);
                }
                w[(a, 0)] += 1.0;
            }
            1 => {
                // Φ(z_b) − Φ(z_a) = Φ̄(z_a) − Φ̄(z_b)
                let u: Vec<f64> = zs.iter().map(|&z| upper(z)).collect();
                for k in 0..n - 1 {
                    cell[k] = decay * (u[k] - u[k + 1]);
                }
            }
            2 => {
                let p: Vec<f64> = zs.iter().map(|&z| pdf(z)).collect();
                for k in 0..n - 1 {
                    cell[k] = decay * decay * (p[k] - p[k + 1]) / sigma;
                }
            }
            _ => panic!("axis_operator supports derivative orders 0, 1, 2"),
        }
        for k in 0..n - 1 {
            let c = cell[k] / (nodes[k + 1] - nodes[k]);
            w[(a, k + 1)] += c;
            w[(a, k)] -= c;
        }
    }
    w
}

/// `x ↦ Σ_k h_k hat_k(x)` with constant extension, for oracles and tests.
pub fn hat_interpolate(nodes: &[f64], values: &[f64], x: f64) -> f64 {
    let n = nodes.len();
    if x <= nodes[0] {
        return values[0];
    }
    if x >= nodes[n - 1] {
        return values[n - 1];
    }
    let k = nodes.partition_point(|&y| y <= x).saturating_sub(1).min(n - 2);
    let t = (x - nodes[k]) / (nodes[k + 1] - nodes[k]);
    values[k] * (1.0 - t) + values[k + 1] * t
}

/// Mode-`axis` product `out = W ×_axis data` for a tensor with axis 0 fastest.
pub fn mode_product(data: &[f64], dims: &[usize], axis: usize, w: &DMatrix<f64>, out: &mut [f64]) {
    let nj = dims[axis];
    let inner: usize = dims[..axis].iter().product();
    let outer: usize = dims[axis + 1..].iter().product();
    debug_assert_eq!(w.ncols(), nj);
    debug_assert_eq!(w.nrows(), nj);
    if axis == 0 {
        let m = nalgebra::DMatrixView::from_slice(data, nj, inner * outer);
        let mut o = nalgebra::DMatrixViewMut::from_slice(out, nj, inner * outer);
        o.gemm(1.0, w, &m, 0.0);
    } else {
        let block = inner * nj;
        let wt = w.transpose();
        for b in 0..outer {
            let m = nalgebra::DMatrixView::from_slice(&data[b * block..(b + 1) * block], inner, nj);
            let mut o = nalgebra::DMatrixViewMut::from_slice(&mut out[b * block..(b + 1) * block], inner, nj);
            o.gemm(1.0, &m, &wt, 0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::GaussLegendre;

    fn nodes() -> Vec<f64> {
        (0..21).map(|i| -2.0 + 0.2 * i as f64).collect()
    }

    /// `E h(m + σZ)` by brute-force quadrature of the interpolant against the density.
    fn brute(nodes: &[f64], vals: &[f64], m: f64, sigma: f64) -> f64 {
        // panels broken at the kinks of the interpolant
        let rule = GaussLegendre::new(20);
        let (lo, hi) = (m - 12.0 * sigma, m + 12.0 * sigma);
        let mut cuts: Vec<f64> = nodes.iter().copied().filter(|&y| y > lo && y < hi).collect();
        cuts.insert(0, lo);
        cuts.push(hi);
        cuts.windows(2)
            .map(|w| rule.composite(w[0], w[1], 8, |y| hat_interpolate(nodes, vals, y) * pdf((y - m) / sigma) / sigma))
            .sum()
    }

    #[test]
    fn value_rows_match_brute_force() {
        let y = nodes();
        let vals: Vec<f64> = y.iter().map(|v| (2.0 * v).sin() + v * v).collect();
        for (decay, sigma) in [(0.9, 0.05), (0.5, 0.3), (0.99, 1.5)] {
            let w = axis_operator(&y, &y, decay, sigma, 0);
            let got = &w * nalgebra::DVector::from_column_slice(&vals);
            for (a, &x) in y.iter().enumerate() {
                let want = brute(&y, &vals, decay * x, sigma);
                assert!((got[a] - want).abs() < 1e-9, "{a}: {} vs {want}", got[a]);
            }
        }
    }

    #[test]
    fn derivative_rows_match_differences_of_the_value() {
        let y = nodes();
        let vals: Vec<f64> = y.iter().map(|v| (1.3 * v).cos()).collect();
        let (decay, sigma) = (0.8, 0.25);
        let h = 1e-5;
        let v = |x: f64| {
            let w = axis_operator(&y, &[x], decay, sigma, 0);
            (&w * nalgebra::DVector::from_column_slice(&vals))[0]
        };
        let d1 = &axis_operator(&y, &y, decay, sigma, 1) * nalgebra::DVector::from_column_slice(&vals);
        let d2 = &axis_operator(&y, &y, decay, sigma, 2) * nalgebra::DVector::from_column_slice(&vals);
        for (a, &x) in y.iter().enumerate() {
            let fd1 = (v(x + h) - v(x - h)) / (2.0 * h);
            let fd2 = (v(x + h) - 2.0 * v(x) + v(x - h)) / (h * h);
            assert!((d1[a] - fd1).abs() < 1e-7, "{a}");
            assert!((d2[a] - fd2).abs() < 1e-4, "{a}: {} vs {fd2}", d2[a]);
        }
    }

    #[test]
    fn constants_are_preserved_and_have_zero_derivatives() {
        let y = nodes();
        for order in 0..3 {
            let w = axis_operator(&y, &y, 0.7, 0.4, order);
            for a in 0..y.len() {
                let s: f64 = w.row(a).iter().sum();
                let want = if order == 0 { 1.0 } else { 0.0 };
                assert!((s - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn mode_product_matches_explicit_sums() {
        let dims = [3usize, 4, 2];
        let data: Vec<f64> = (0..24).map(|i| (i as f64 * 0.37).sin()).collect();
        for axis in 0..3 {
            let nj = dims[axis];
            let w = DMatrix::from_fn(nj, nj, |i, j| (i as f64 + 1.0) * 0.5 - j as f64 * 0.25);
            let mut out = vec![0.0; 24];
            mode_product(&data, &dims, axis, &w, &mut out);
            for i2 in 0..2 {
                for i1 in 0..4 {
                    for i0 in 0..3 {
                        let idx = [i0, i1, i2];
                        let mut want = 0.0;
                        for k in 0..nj {
                            let mut src = idx;
                            src[axis] = k;
                            want += w[(idx[axis], k)] * data[src[0] + 3 * (src[1] + 4 * src[2])];
                        }
                        assert!((out[i0 + 3 * (i1 + 4 * i2)] - want).abs() < 1e-13);
                    }
                }
            }
        }
    }
}
