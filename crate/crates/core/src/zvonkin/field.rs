//! The solved field `u` on its space-time grid, its evaluation off the grid
//! and its on-disk form.
//!
//! Each time node stores, per component and per node, the jet
//! `∂^o u` for every `o ∈ {0,1}^d` (one derivative per axis at most). That is
//! exactly the data of the tensor cubic Hermite interpolant, which is C¹ in
//! space. In time `u/ω` is interpolated linearly, with `ω(t) = (1 − e^{−λ(T−t)})/λ`
//! carrying the boundary layer at `T`; before `t = 0` it is
//! frozen at `u(0, ·)`, and outside the box each coordinate is clamped.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Sup-norms of the field over the grid, with the caps they were checked against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifiedBounds {
    /// `sup |(−A)^{1/2} u|`
    pub u_a: f64,
    /// `sup ‖(−A)^{1/2} ∇u‖`
    pub grad_a: f64,
    /// `sup ‖∇u‖`
    pub grad: f64,
    /// `sup ‖∇²u‖`, bounded by `sqrt(Σ_c ‖∇²u_c‖²)`
    pub hess: f64,
    /// `(5⁷/2⁵)(‖(−A)^{1/2}∇u‖ ∫_0^T ‖(−A)^{1/2}e^{As}‖ ds)⁴ + ‖∇u‖`
    pub composite: f64,
    pub hess_cap: f64,
    pub grad_a_cap: f64,
    pub composite_cap: f64,
}

impl CertifiedBounds {
    pub fn certified(&self) -> bool {
        self.hess <= self.hess_cap && self.grad_a <= self.grad_a_cap && self.composite <= self.composite_cap
    }

    /// Names of the bounds above their caps.
    pub fn failing(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.hess > self.hess_cap {
            out.push(format!("‖∇²u‖ = {:.4e} > {}", self.hess, self.hess_cap));
        }
        if self.grad_a > self.grad_a_cap {
            out.push(format!("‖(−A)^(1/2)∇u‖ = {:.4e} > {:.4e}", self.grad_a, self.grad_a_cap));
        }
        if self.composite > self.composite_cap {
            out.push(format!("composite bound = {:.4e} > {}", self.composite, self.composite_cap));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub lambda: f64,
    pub horizon: f64,
    /// Total number of modes of the state space.
    pub n_modes: usize,
    /// 0-based indices of the modes `u` depends on and takes values in.
    pub active: Vec<usize>,
    /// `λ_i` of the active modes.
    pub active_lambdas: Vec<f64>,
    /// Uniform axes, one per active mode: `(lo, hi, nodes)`.
    pub axes: Vec<(f64, f64, usize)>,
    pub times: Vec<f64>,
    pub bounds: CertifiedBounds,
    pub contraction_factor: f64,
    pub iterations: usize,
    pub differences: Vec<f64>,
    pub spectrum_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizingField {
    pub header: FieldHeader,
    /// `[time][component][o ∈ {0,1}^d][node]`, node index with axis 0 fastest.
    jets: Vec<f64>,
    /// `[time][node]` bound on `‖∇²u‖`.
    pub hess_norm: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Sidecar {
    header: FieldHeader,
    binary_sha256: String,
    jet_len: usize,
    hess_len: usize,
}

const MAGIC: &[u8; 8] = b"FSPDEU01";

impl RegularizingField {
    pub fn new(header: FieldHeader, jets: Vec<f64>, hess_norm: Vec<f64>) -> Result<Self> {
        let f = Self { header, jets, hess_norm };
        if f.jets.len() != f.header.times.len() * f.d() * f.n_jets() * f.n_nodes() {
            return Err(Error::input("jet table size does not match the grid"));
        }
        if f.hess_norm.len() != f.header.times.len() * f.n_nodes() {
            return Err(Error::input("Hessian table size does not match the grid"));
        }
        Ok(f)
    }

    /// The zero field (`b = 0`): identity transform.
    pub fn zero(n_modes: usize, active: Vec<usize>, active_lambdas: Vec<f64>, lambda: f64, horizon: f64) -> Self {
        let d = active.len();
        let header = FieldHeader {
            lambda,
            horizon,
            n_modes,
            active,
            active_lambdas,
            axes: vec![(-1.0, 1.0, 2); d],
            times: vec![0.0, horizon],
            bounds: CertifiedBounds {
                u_a: 0.0,
                grad_a: 0.0,
                grad: 0.0,
                hess: 0.0,
                composite: 0.0,
                hess_cap: 0.125,
                grad_a_cap: f64::INFINITY,
                composite_cap: 0.2,
            },
            contraction_factor: 0.0,
            iterations: 1,
            differences: vec![0.0],
            spectrum_fingerprint: String::new(),
        };
        let nodes = 1usize << d;
        Self { jets: vec![0.0; 2 * d * nodes * nodes], hess_norm: vec![0.0; 2 * nodes], header }
    }

    pub fn d(&self) -> usize {
        self.header.active.len()
    }

    pub fn n_jets(&self) -> usize {
        1 << self.d()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.header.axes.iter().map(|a| a.2).collect()
    }

    pub fn n_nodes(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn lambda(&self) -> f64 {
        self.header.lambda
    }

    pub fn bounds(&self) -> &CertifiedBounds {
        &self.header.bounds
    }

    pub fn jets(&self) -> &[f64] {
        &self.jets
    }

    /// Jet `o` of component `c` at time node `ti`, node `node`.
    pub fn jet(&self, ti: usize, c: usize, o: usize, node: usize) -> f64 {
        let (d, nj, nn) = (self.d(), self.n_jets(), self.n_nodes());
        self.jets[((ti * d + c) * nj + o) * nn + node]
    }

    /// Coordinates of a node.
    pub fn node_point(&self, node: usize) -> Vec<f64> {
        let mut rem = node;
        self.header
            .axes
            .iter()
            .map(|&(lo, hi, n)| {
                let i = rem % n;
                rem /= n;
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            })
            .collect()
    }

    /// Evaluate at one time node, active coordinates `y`: values (length d) and Jacobian (d×d).
    fn eval_node_time(&self, ti: usize, y: &[f64], val: &mut [f64], jac: &mut DMatrix<f64>) {
        let d = self.d();
        let dims = self.dims();
        let mut cell = vec![0usize; d];
        let mut t = vec![0.0; d];
        let mut h = vec![0.0; d];
        let mut clamped = vec![false; d];
        for j in 0..d {
            let (lo, hi, n) = self.header.axes[j];
            h[j] = (hi - lo) / (n - 1) as f64;
            let x = if y[j] < lo {
                clamped[j] = true;
                lo
            } else if y[j] > hi {
                clamped[j] = true;
                hi
            } else {
                y[j]
            };
            let k = (((x - lo) / h[j]).floor() as usize).min(n - 2);
            cell[j] = k;
            t[j] = ((x - lo) - k as f64 * h[j]) / h[j];
        }
        // basis[j][corner][o] and its derivative in x
        let mut basis = vec![[[0.0; 2]; 2]; d];
        let mut dbasis = vec![[[0.0; 2]; 2]; d];
        for j in 0..d {
            let s = t[j];
            let (s2, s3) = (s * s, s * s * s);
            basis[j] = [[2.0 * s3 - 3.0 * s2 + 1.0, (s3 - 2.0 * s2 + s) * h[j]], [-2.0 * s3 + 3.0 * s2, (s3 - s2) * h[j]]];
            dbasis[j] = [
                [(6.0 * s2 - 6.0 * s) / h[j], 3.0 * s2 - 4.0 * s + 1.0],
                [(-6.0 * s2 + 6.0 * s) / h[j], 3.0 * s2 - 2.0 * s],
            ];
            if clamped[j] {
                dbasis[j] = [[0.0; 2]; 2];
            }
        }
        val.iter_mut().for_each(|v| *v = 0.0);
        jac.fill(0.0);
        let nj = self.n_jets();
        let mut strides = vec![1usize; d];
        for j in 1..d {
            strides[j] = strides[j - 1] * dims[j - 1];
        }
        for corner in 0..nj {
            let node: usize = (0..d).map(|j| (cell[j] + ((corner >> j) & 1)) * strides[j]).sum();
            for o in 0..nj {
                let mut w = 1.0;
                for j in 0..d {
                    w *= basis[j][(corner >> j) & 1][(o >> j) & 1];
                }
                let mut dw = vec![1.0; d];
                for (k, dk) in dw.iter_mut().enumerate() {
                    for j in 0..d {
                        let b = if j == k { &dbasis[j] } else { &basis[j] };
                        *dk *= b[(corner >> j) & 1][(o >> j) & 1];
                    }
                }
                for c in 0..d {
                    let v = self.jet(ti, c, o, node);
                    if v == 0.0 {
                        continue;
                    }
                    val[c] += w * v;
                    for k in 0..d {
                        jac[(c, k)] += dw[k] * v;
                    }
                }
            }
        }
    }

    /// `u(t, x)` (length `n_modes`) and `∇u(t, x)` (`n_modes × n_modes`).
    pub fn eval(&self, t: f64, x: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let n = self.header.n_modes;
        let mut u = vec![0.0; n];
        let mut g = DMatrix::zeros(n, n);
        self.eval_into(t, x, &mut u, &mut g);
        (u, g)
    }

    pub fn eval_into(&self, t: f64, x: &[f64], u: &mut [f64], g: &mut DMatrix<f64>) {
        let d = self.d();
        let act = &self.header.active;
        let y: Vec<f64> = act.iter().map(|&i| x[i]).collect();
        let times = &self.header.times;
        let t = t.clamp(0.0, self.header.horizon);
        let k = times.partition_point(|&s| s <= t).saturating_sub(1).min(times.len() - 2);
        // interpolate u/ω linearly, ω(t) = (1 − e^{−λ(T−t)})/λ the profile of the boundary layer
        let omega = |s: f64| -(-self.header.lambda * (self.header.horizon - s)).exp_m1() / self.header.lambda;
        let w = ((t - times[k]) / (times[k + 1] - times[k])).clamp(0.0, 1.0);
        let mut v0 = vec![0.0; d];
        let mut j0 = DMatrix::zeros(d, d);
        self.eval_node_time(k, &y, &mut v0, &mut j0);
        let last = k + 2 == times.len();
        if w > 0.0 && !last {
            let mut v1 = vec![0.0; d];
            let mut j1 = DMatrix::zeros(d, d);
            self.eval_node_time(k + 1, &y, &mut v1, &mut j1);
            let (a, b) = ((1.0 - w) / omega(times[k]), w / omega(times[k + 1]));
            for c in 0..d {
                v0[c] = a * v0[c] + b * v1[c];
            }
            j0 = j0 * a + j1 * b;
        } else {
            let a = 1.0 / omega(times[k]);
            v0.iter_mut().for_each(|v| *v *= a);
            j0 *= a;
        }
        let scale = omega(t);
        v0.iter_mut().for_each(|v| *v *= scale);
        j0 *= scale;
        u.iter_mut().for_each(|v| *v = 0.0);
        g.fill(0.0);
        for (c, &ic) in act.iter().enumerate() {
            u[ic] = v0[c];
            for (k, &ik) in act.iter().enumerate() {
                g[(ic, ik)] = j0[(c, k)];
            }
        }
    }

    /// Write `<stem>.bin` and `<stem>.json`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let mut bin = Vec::with_capacity(8 + 8 * (self.jets.len() + self.hess_norm.len()));
        bin.extend_from_slice(MAGIC);
        for v in self.jets.iter().chain(&self.hess_norm) {
            bin.extend_from_slice(&v.to_le_bytes());
        }
        let sidecar = Sidecar {
            header: self.header.clone(),
            binary_sha256: hex::encode(Sha256::digest(&bin)),
            jet_len: self.jets.len(),
            hess_len: self.hess_norm.len(),
        };
        std::fs::File::create(stem.with_extension("bin"))?.write_all(&bin)?;
        std::fs::write(stem.with_extension("json"), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let sidecar: Sidecar = serde_json::from_str(&std::fs::read_to_string(stem.with_extension("json"))?)?;
        let mut bin = Vec::new();
        std::fs::File::open(stem.with_extension("bin"))?.read_to_end(&mut bin)?;
        let found = hex::encode(Sha256::digest(&bin));
        if found != sidecar.binary_sha256 {
            return Err(Error::HashMismatch { expected: sidecar.binary_sha256, found });
        }
        if bin.len() != 8 + 8 * (sidecar.jet_len + sidecar.hess_len) || &bin[..8] != MAGIC {
            return Err(Error::input("field file is truncated or not a field file"));
        }
        let vals: Vec<f64> = bin[8..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
        let (jets, hess) = vals.split_at(sidecar.jet_len);
        Self::new(sidecar.header, jets.to_vec(), hess.to_vec())
    }
}
