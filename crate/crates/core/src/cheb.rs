//! Chebyshev–Lobatto collocation on a box `[a, b]^d`: nodes, differentiation
//! matrices, Clenshaw–Curtis weights and barycentric interpolation of grid
//! functions stored as tensor trains.

// Inherent float methods only exist when std is linked somewhere in the graph.
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, mismatch, Error, Result};
use crate::tt::TtTensor;

fn check_interval(n: usize, a: f64, b: f64) -> Result<()> {
    if n < 2 {
        return Err(invalid(format!("a Chebyshev grid needs at least 2 nodes, got {n}")));
    }
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(invalid(format!("interval [{a}, {b}] is empty or not finite")));
    }
    Ok(())
}

/// Standard Lobatto nodes `−cos(πk/(N−1))` on `[−1, 1]`, ascending. The
/// sine form keeps them exactly antisymmetric.
fn reference_nodes(n: usize) -> Vec<f64> {
    let m = (n - 1) as f64;
    (0..n).map(|k| (PI * (2.0 * k as f64 - m) / (2.0 * m)).sin()).collect()
}

/// Chebyshev–Gauss–Lobatto nodes mapped to `[a, b]`, ascending, with the
/// endpoints hit exactly.
pub fn cheb_nodes(n: usize, a: f64, b: f64) -> Result<Vec<f64>> {
    check_interval(n, a, b)?;
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    let mut x: Vec<f64> = reference_nodes(n).iter().map(|t| mid + half * t).collect();
    x[0] = a;
    x[n - 1] = b;
    Ok(x)
}

/// Collocation differentiation matrix of order 1 or 2 on the mapped nodes.
/// The second-order matrix is the square of the first.
pub fn cheb_diff(n: usize, a: f64, b: f64, order: u32) -> Result<DMatrix<f64>> {
    check_interval(n, a, b)?;
    let d1 = first_derivative(n, a, b);
    match order {
        1 => Ok(d1),
        2 => Ok(&d1 * &d1),
        _ => Err(invalid(format!("differentiation order {order} is not supported"))),
    }
}

fn first_derivative(n: usize, a: f64, b: f64) -> DMatrix<f64> {
    let m = (n - 1) as f64;
    let half = 0.5 * (b - a);
    let c = |i: usize| if i == 0 || i == n - 1 { 2.0 } else { 1.0 };
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i == j {
                continue;
            }
            // x_i − x_j on [−1, 1] without cancellation
            let (ti, tj) = (PI * i as f64 / m, PI * j as f64 / m);
            let diff = 2.0 * (0.5 * (ti + tj)).sin() * (0.5 * (ti - tj)).sin() * half;
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            let v = c(i) / c(j) * sign / diff;
            d[(i, j)] = v;
            diag -= v;
        }
        d[(i, i)] = diag;
    }
    d
}

/// Clenshaw–Curtis weights on the mapped Lobatto nodes.
pub fn cc_weights(n: usize, a: f64, b: f64) -> Result<Vec<f64>> {
    check_interval(n, a, b)?;
    let m = n - 1;
    let mf = m as f64;
    let mut w = vec![0.0; n];
    let mut v = vec![1.0; n.saturating_sub(2)];
    if m % 2 == 0 {
        w[0] = 1.0 / (mf * mf - 1.0);
        for k in 1..m / 2 {
            let kf = k as f64;
            for (j, vj) in v.iter_mut().enumerate() {
                let theta = PI * (j + 1) as f64 / mf;
                *vj -= 2.0 * (2.0 * kf * theta).cos() / (4.0 * kf * kf - 1.0);
            }
        }
        for (j, vj) in v.iter_mut().enumerate() {
            let theta = PI * (j + 1) as f64 / mf;
            *vj -= (mf * theta).cos() / (mf * mf - 1.0);
        }
    } else {
        w[0] = 1.0 / (mf * mf);
        for k in 1..=(m - 1) / 2 {
            let kf = k as f64;
            for (j, vj) in v.iter_mut().enumerate() {
                let theta = PI * (j + 1) as f64 / mf;
                *vj -= 2.0 * (2.0 * kf * theta).cos() / (4.0 * kf * kf - 1.0);
            }
        }
    }
    w[m] = w[0];
    for (j, vj) in v.iter().enumerate() {
        w[j + 1] = 2.0 * vj / mf;
    }
    let half = 0.5 * (b - a);
    Ok(w.into_iter().map(|x| x * half).collect())
}

/// Tensor-product Chebyshev grid with the same nodes along every mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebGrid {
    d: usize,
    n: usize,
    a: f64,
    b: f64,
    nodes: Vec<f64>,
    d1: DMatrix<f64>,
    d2: DMatrix<f64>,
    weights: Vec<f64>,
    bary: Vec<f64>,
}

impl ChebGrid {
    pub fn new(d: usize, n: usize, a: f64, b: f64) -> Result<Self> {
        if d == 0 {
            return Err(invalid("grid dimension must be at least 1"));
        }
        let nodes = cheb_nodes(n, a, b)?;
        let d1 = first_derivative(n, a, b);
        let d2 = &d1 * &d1;
        let weights = cc_weights(n, a, b)?;
        let bary = (0..n)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == n - 1 {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        Ok(Self { d, n, a, b, nodes, d1, d2, weights, bary })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Nodes per mode.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn d1(&self) -> &DMatrix<f64> {
        &self.d1
    }

    pub fn d2(&self) -> &DMatrix<f64> {
        &self.d2
    }

    /// Clenshaw–Curtis weights along one mode.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mode_sizes(&self) -> Vec<usize> {
        vec![self.n; self.d]
    }

    /// Same grid in another dimension.
    pub fn with_dim(&self, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(invalid("grid dimension must be at least 1"));
        }
        let mut g = self.clone();
        g.d = d;
        Ok(g)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.d && x.iter().all(|&v| v >= self.a && v <= self.b)
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(mismatch(format!("point of length {} on a {}-d grid", x.len(), self.d)));
        }
        if !self.contains(x) {
            return Err(Error::OutsideDomain { point: x.to_vec(), lo: self.a, hi: self.b });
        }
        Ok(())
    }

    pub(crate) fn check_tensor(&self, t: &TtTensor) -> Result<()> {
        if t.d() != self.d || t.mode_sizes().iter().any(|&n| n != self.n) {
            return Err(mismatch(format!(
                "tensor with mode sizes {:?} on a {}-d grid with {} nodes",
                t.mode_sizes(),
                self.d,
                self.n
            )));
        }
        Ok(())
    }

    /// Quadrature of a grid function over the box.
    pub fn integrate(&self, t: &TtTensor) -> Result<f64> {
        self.check_tensor(t)?;
        let w: Vec<&[f64]> = vec![self.weights.as_slice(); self.d];
        t.integrate(&w)
    }

    /// `‖a − b‖ / ‖b‖` in the quadrature-weighted L² norm.
    pub fn relative_l2(&self, a: &TtTensor, b: &TtTensor) -> Result<f64> {
        self.check_tensor(a)?;
        self.check_tensor(b)?;
        let w: Vec<&[f64]> = vec![self.weights.as_slice(); self.d];
        let aa = a.dot_weighted(a, &w)?;
        let ab = a.dot_weighted(b, &w)?;
        let bb = b.dot_weighted(b, &w)?;
        // The expanded form loses digits once the error drops below ~1e-8
        // of the norm; fall back to the explicit difference then.
        let expanded = (aa - 2.0 * ab + bb).max(0.0);
        if expanded > 1e-12 * bb {
            return Ok((expanded / bb).sqrt());
        }
        // Contracting the difference with itself cancels just as badly, so
        // fold `√w` into the cores and take the norm through QR sweeps.
        let diff = a.add(&b.scale(-1.0))?;
        let root: Vec<f64> = self.weights.iter().map(|w| w.max(0.0).sqrt()).collect();
        let n = self.n;
        let cores = diff
            .cores()
            .iter()
            .enumerate()
            .map(|(k, core)| {
                let r = diff.ranks()[k + 1];
                core.iter().enumerate().map(|(e, v)| v * root[(e / r) % n]).collect()
            })
            .collect();
        let weighted = TtTensor::from_parts(diff.mode_sizes().to_vec(), diff.ranks().to_vec(), cores);
        Ok(weighted.orthogonal_norm() / bb.sqrt())
    }

    /// Grid function of a separable product `Π_k f_k(x_k)`.
    pub fn rank_one(&self, mut f: impl FnMut(usize, f64) -> f64) -> Result<TtTensor> {
        let factors: Vec<Vec<f64>> = (0..self.d).map(|k| self.nodes.iter().map(|&x| f(k, x)).collect()).collect();
        TtTensor::rank_one(&factors)
    }

    /// Lagrange basis values `ℓ_j(x)` of the 1-d interpolant. `x` must lie
    /// in the interval.
    pub fn basis(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n);
        if let Some(k) = self.node_hit(x) {
            out.fill(0.0);
            out[k] = 1.0;
            return;
        }
        let mut s = 0.0;
        for ((o, &xj), &lj) in out.iter_mut().zip(&self.nodes).zip(&self.bary) {
            *o = lj / (x - xj);
            s += *o;
        }
        for o in out.iter_mut() {
            *o /= s;
        }
    }

    /// Basis values and their derivatives `ℓ_j'(x)`.
    pub fn basis_with_derivative(&self, x: f64, val: &mut [f64], der: &mut [f64]) {
        debug_assert!(val.len() == self.n && der.len() == self.n);
        if let Some(k) = self.node_hit(x) {
            val.fill(0.0);
            val[k] = 1.0;
            for (j, o) in der.iter_mut().enumerate() {
                *o = self.d1[(k, j)];
            }
            return;
        }
        // ℓ_j = u_j / S with u_j = λ_j / (x − x_j); then
        // ℓ_j' = ℓ_j Σμ − μ_j where μ_j = u_j / ((x − x_j) S).
        let mut s = 0.0;
        for ((o, &xj), &lj) in val.iter_mut().zip(&self.nodes).zip(&self.bary) {
            *o = lj / (x - xj);
            s += *o;
        }
        let mut mu_sum = 0.0;
        for ((o, v), &xj) in der.iter_mut().zip(val.iter_mut()).zip(&self.nodes) {
            *v /= s;
            *o = *v / (x - xj);
            mu_sum += *o;
        }
        // The derivative weights sum to zero; recovering the nearest node's
        // weight from that identity avoids cancellation next to a node.
        let k = self.nearest_node(x);
        let mut rest = 0.0;
        for (j, (o, &v)) in der.iter_mut().zip(val.iter()).enumerate() {
            *o = v * mu_sum - *o;
            if j != k {
                rest += *o;
            }
        }
        der[k] = -rest;
    }

    fn node_hit(&self, x: f64) -> Option<usize> {
        let k = self.nearest_node(x);
        (x == self.nodes[k]).then_some(k)
    }

    fn nearest_node(&self, x: f64) -> usize {
        let i = self.nodes.partition_point(|&v| v < x);
        if i == 0 {
            0
        } else if i == self.n {
            self.n - 1
        } else if (x - self.nodes[i - 1]) <= (self.nodes[i] - x) {
            i - 1
        } else {
            i
        }
    }

    /// Rows of 1-d interpolation weights at `points`; a point outside the
    /// interval gives a zero row.
    pub fn interp_matrix(&self, points: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(points.len(), self.n);
        let mut row = vec![0.0; self.n];
        for (i, &x) in points.iter().enumerate() {
            if x < self.a || x > self.b {
                continue;
            }
            self.basis(x, &mut row);
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }
}

/// Value of the tensor-product polynomial interpolant of `t` at `x`.
pub fn interp_eval(t: &TtTensor, grid: &ChebGrid, x: &[f64]) -> Result<f64> {
    grid.check_tensor(t)?;
    grid.check_point(x)?;
    let mut w = vec![0.0; grid.n];
    let mut v = vec![1.0];
    for (k, &xk) in x.iter().enumerate() {
        grid.basis(xk, &mut w);
        v = t.contract_mode_left(k, &v, &w);
    }
    Ok(v[0])
}

/// Gradient of the interpolant at `x`.
pub fn interp_grad(t: &TtTensor, grid: &ChebGrid, x: &[f64]) -> Result<Vec<f64>> {
    interp_value_and_grad(t, grid, x).map(|(_, g)| g)
}

/// Value and gradient of the interpolant in one pass, `O(d r² N)`.
pub fn interp_value_and_grad(t: &TtTensor, grid: &ChebGrid, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    grid.check_tensor(t)?;
    grid.check_point(x)?;
    let d = grid.d;
    let n = grid.n;
    let ranks = t.ranks();
    let mut val = vec![0.0; n];
    let mut der = vec![0.0; n];
    let mut slices = Vec::with_capacity(d);
    let mut dslices = Vec::with_capacity(d);
    for (k, &xk) in x.iter().enumerate() {
        grid.basis_with_derivative(xk, &mut val, &mut der);
        let mut s = Vec::new();
        let mut ds = Vec::new();
        t.weighted_slice(k, &val, &mut s);
        t.weighted_slice(k, &der, &mut ds);
        slices.push(s);
        dslices.push(ds);
    }
    // prefix[k] = M_0 ⋯ M_{k-1} as a row vector of length R_k
    let mut prefix = Vec::with_capacity(d + 1);
    prefix.push(vec![1.0]);
    for k in 0..d {
        let next = row_times(&prefix[k], &slices[k], ranks[k + 1]);
        prefix.push(next);
    }
    let mut grad = vec![0.0; d];
    let mut suffix = vec![1.0];
    for k in (0..d).rev() {
        let tmp = row_times(&prefix[k], &dslices[k], ranks[k + 1]);
        grad[k] = tmp.iter().zip(&suffix).map(|(a, b)| a * b).sum();
        suffix = times_col(&slices[k], &suffix, ranks[k]);
    }
    Ok((prefix[d][0], grad))
}

/// `v · M` for a row-major `len(v) × cols` matrix.
pub(crate) fn row_times(v: &[f64], m: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for (a, &va) in v.iter().enumerate() {
        if va == 0.0 {
            continue;
        }
        for (o, &g) in out.iter_mut().zip(&m[a * cols..(a + 1) * cols]) {
            *o += va * g;
        }
    }
    out
}

/// `M · v` for a row-major `rows × len(v)` matrix.
pub(crate) fn times_col(m: &[f64], v: &[f64], rows: usize) -> Vec<f64> {
    let cols = v.len();
    (0..rows).map(|a| m[a * cols..(a + 1) * cols].iter().zip(v).map(|(g, x)| g * x).sum()).collect()
}
