//! Tensor trains over a d-dimensional index grid.
//!
//! Entry `[n₁, …, n_d]` of a [`TtTensor`] is the product
//! `G₁[:, n₁, :] · G₂[:, n₂, :] ⋯ G_d[:, n_d, :]` of core slices, where core
//! `k` has shape `(R_{k-1}, N_k, R_k)` and `R₀ = R_d = 1`. Cores are stored
//! row-major, so element `(a, n, b)` of core `k` sits at
//! `(a · N_k + n) · R_k + b`.

mod cross;
mod dense;
mod svd;

pub use cross::{cross, CrossOptions, CrossOutcome};
pub use dense::DenseTensor;

// Inherent float methods only exist when std is linked somewhere in the graph.
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, mismatch, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TtTensor {
    mode_sizes: Vec<usize>,
    ranks: Vec<usize>,
    cores: Vec<Vec<f64>>,
}

impl TtTensor {
    /// Assembles a tensor train from raw row-major cores, checking that the
    /// shapes chain.
    pub fn new(mode_sizes: Vec<usize>, ranks: Vec<usize>, cores: Vec<Vec<f64>>) -> Result<Self> {
        let d = mode_sizes.len();
        if d == 0 || mode_sizes.contains(&0) {
            return Err(invalid("tensor train needs d >= 1 and non-empty modes"));
        }
        if ranks.len() != d + 1 || cores.len() != d {
            return Err(mismatch(format!(
                "{} modes need {} ranks and {} cores, got {} and {}",
                d,
                d + 1,
                d,
                ranks.len(),
                cores.len()
            )));
        }
        if ranks[0] != 1 || ranks[d] != 1 || ranks.contains(&0) {
            return Err(invalid("boundary ranks must be 1 and inner ranks positive"));
        }
        for k in 0..d {
            let want = ranks[k] * mode_sizes[k] * ranks[k + 1];
            if cores[k].len() != want {
                return Err(mismatch(format!(
                    "core {k} holds {} values, shape ({}, {}, {}) needs {want}",
                    cores[k].len(),
                    ranks[k],
                    mode_sizes[k],
                    ranks[k + 1]
                )));
            }
        }
        Ok(Self { mode_sizes, ranks, cores })
    }

    pub(crate) fn from_parts(mode_sizes: Vec<usize>, ranks: Vec<usize>, cores: Vec<Vec<f64>>) -> Self {
        debug_assert!(Self::new(mode_sizes.clone(), ranks.clone(), cores.clone()).is_ok());
        Self { mode_sizes, ranks, cores }
    }

    /// Outer product `v₁ ⊗ v₂ ⊗ ⋯ ⊗ v_d`.
    pub fn rank_one(factors: &[Vec<f64>]) -> Result<Self> {
        if factors.is_empty() || factors.iter().any(|f| f.is_empty()) {
            return Err(invalid("rank-one tensor needs non-empty factors"));
        }
        let mode_sizes = factors.iter().map(Vec::len).collect();
        let ranks = vec![1; factors.len() + 1];
        Ok(Self::from_parts(mode_sizes, ranks, factors.to_vec()))
    }

    pub fn constant(mode_sizes: &[usize], value: f64) -> Result<Self> {
        let d = mode_sizes.len();
        let factors: Vec<Vec<f64>> =
            mode_sizes.iter().enumerate().map(|(k, &n)| vec![if k == 0 { value } else { 1.0 }; n]).collect();
        if d == 0 {
            return Err(invalid("tensor train needs d >= 1"));
        }
        Self::rank_one(&factors)
    }

    pub fn zeros(mode_sizes: &[usize]) -> Result<Self> {
        Self::constant(mode_sizes, 0.0)
    }

    pub fn d(&self) -> usize {
        self.mode_sizes.len()
    }

    pub fn mode_sizes(&self) -> &[usize] {
        &self.mode_sizes
    }

    /// `R₀ … R_d`.
    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn max_rank(&self) -> usize {
        self.ranks.iter().copied().max().unwrap_or(1)
    }

    pub fn cores(&self) -> &[Vec<f64>] {
        &self.cores
    }

    pub fn core(&self, k: usize) -> &[f64] {
        &self.cores[k]
    }

    /// Number of stored floats.
    pub fn storage(&self) -> usize {
        self.cores.iter().map(Vec::len).sum()
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.mode_sizes != other.mode_sizes {
            return Err(mismatch(format!("mode sizes {:?} vs {:?}", self.mode_sizes, other.mode_sizes)));
        }
        Ok(())
    }

    /// Entry at a multi-index: a chain of vector–matrix products.
    pub fn eval(&self, index: &[usize]) -> Result<f64> {
        if index.len() != self.d() || index.iter().zip(&self.mode_sizes).any(|(&i, &n)| i >= n) {
            return Err(Error::IndexOutOfRange { index: index.to_vec(), mode_sizes: self.mode_sizes.clone() });
        }
        let mut v = vec![1.0];
        let mut next = Vec::new();
        for (k, &i) in index.iter().enumerate() {
            let (r0, n, r1) = (self.ranks[k], self.mode_sizes[k], self.ranks[k + 1]);
            let core = &self.cores[k];
            next.clear();
            next.resize(r1, 0.0);
            for (a, &va) in v.iter().enumerate().take(r0) {
                let row = &core[(a * n + i) * r1..(a * n + i + 1) * r1];
                for (o, &g) in next.iter_mut().zip(row) {
                    *o += va * g;
                }
            }
            core::mem::swap(&mut v, &mut next);
        }
        Ok(v[0])
    }

    /// Contracts every mode with a weight vector: `Σ_n T[n] Π_k w_k[n_k]`.
    pub fn integrate(&self, weights: &[&[f64]]) -> Result<f64> {
        if weights.len() != self.d() {
            return Err(mismatch(format!("{} weight vectors for {} modes", weights.len(), self.d())));
        }
        for (k, w) in weights.iter().enumerate() {
            if w.len() != self.mode_sizes[k] {
                return Err(mismatch(format!(
                    "weight vector {k} has length {}, mode size is {}",
                    w.len(),
                    self.mode_sizes[k]
                )));
            }
        }
        let mut v = vec![1.0];
        for (k, w) in weights.iter().enumerate() {
            v = self.contract_mode_left(k, &v, w);
        }
        Ok(v[0])
    }

    /// `Σ_{a,n} v[a] w[n] G_k[a, n, :]`.
    pub(crate) fn contract_mode_left(&self, k: usize, v: &[f64], w: &[f64]) -> Vec<f64> {
        let (r0, n, r1) = (self.ranks[k], self.mode_sizes[k], self.ranks[k + 1]);
        let core = &self.cores[k];
        let mut out = vec![0.0; r1];
        for a in 0..r0 {
            let va = v[a];
            if va == 0.0 {
                continue;
            }
            for (i, &wi) in w.iter().enumerate().take(n) {
                let c = va * wi;
                if c == 0.0 {
                    continue;
                }
                let row = &core[(a * n + i) * r1..(a * n + i + 1) * r1];
                for (o, &g) in out.iter_mut().zip(row) {
                    *o += c * g;
                }
            }
        }
        out
    }

    /// `Σ_n w[n] G_k[:, n, :]` as a row-major `R_{k-1} × R_k` matrix.
    pub(crate) fn weighted_slice(&self, k: usize, w: &[f64], out: &mut Vec<f64>) {
        let (r0, n, r1) = (self.ranks[k], self.mode_sizes[k], self.ranks[k + 1]);
        let core = &self.cores[k];
        out.clear();
        out.resize(r0 * r1, 0.0);
        for a in 0..r0 {
            let dst = &mut out[a * r1..(a + 1) * r1];
            for (i, &wi) in w.iter().enumerate().take(n) {
                if wi == 0.0 {
                    continue;
                }
                let row = &core[(a * n + i) * r1..(a * n + i + 1) * r1];
                for (o, &g) in dst.iter_mut().zip(row) {
                    *o += wi * g;
                }
            }
        }
    }

    /// Weighted inner product `Σ_n A[n] B[n] Π_k w_k[n_k]`, linear in `d`.
    pub fn dot_weighted(&self, other: &Self, weights: &[&[f64]]) -> Result<f64> {
        self.check_same_shape(other)?;
        if weights.len() != self.d() || weights.iter().zip(&self.mode_sizes).any(|(w, &n)| w.len() != n) {
            return Err(mismatch("weight vectors do not match the mode sizes"));
        }
        // state[a, a'] over the ranks of self and other
        let mut state = vec![1.0];
        for k in 0..self.d() {
            let (ra0, n, ra1) = (self.ranks[k], self.mode_sizes[k], self.ranks[k + 1]);
            let (rb0, rb1) = (other.ranks[k], other.ranks[k + 1]);
            let (ca, cb) = (&self.cores[k], &other.cores[k]);
            // tmp[a', n, b] = Σ_a state[a, a'] A[a, n, b]
            let mut tmp = vec![0.0; rb0 * n * ra1];
            for a in 0..ra0 {
                for ap in 0..rb0 {
                    let s = state[a * rb0 + ap];
                    if s == 0.0 {
                        continue;
                    }
                    for i in 0..n {
                        let src = &ca[(a * n + i) * ra1..(a * n + i + 1) * ra1];
                        let dst = &mut tmp[(ap * n + i) * ra1..(ap * n + i + 1) * ra1];
                        for (o, &g) in dst.iter_mut().zip(src) {
                            *o += s * g;
                        }
                    }
                }
            }
            let mut next = vec![0.0; ra1 * rb1];
            let w = weights[k];
            for ap in 0..rb0 {
                for i in 0..n {
                    let wi = w[i];
                    if wi == 0.0 {
                        continue;
                    }
                    let trow = &tmp[(ap * n + i) * ra1..(ap * n + i + 1) * ra1];
                    let brow = &cb[(ap * n + i) * rb1..(ap * n + i + 1) * rb1];
                    for (b, &t) in trow.iter().enumerate() {
                        let c = wi * t;
                        if c == 0.0 {
                            continue;
                        }
                        let dst = &mut next[b * rb1..(b + 1) * rb1];
                        for (o, &g) in dst.iter_mut().zip(brow) {
                            *o += c * g;
                        }
                    }
                }
            }
            state = next;
        }
        Ok(state[0])
    }

    /// Plain Frobenius norm of the full tensor.
    pub fn frobenius_norm(&self) -> f64 {
        let ones: Vec<Vec<f64>> = self.mode_sizes.iter().map(|&n| vec![1.0; n]).collect();
        let w: Vec<&[f64]> = ones.iter().map(Vec::as_slice).collect();
        self.dot_weighted(self, &w).map(|v| v.max(0.0).sqrt()).unwrap_or(0.0)
    }

    pub fn scale(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        for v in out.cores[0].iter_mut() {
            *v *= alpha;
        }
        out
    }

    /// Entrywise sum; ranks add.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let d = self.d();
        if d == 1 {
            let core = self.cores[0].iter().zip(&other.cores[0]).map(|(a, b)| a + b).collect();
            return Ok(Self::from_parts(self.mode_sizes.clone(), vec![1, 1], vec![core]));
        }
        let mut ranks = vec![1; d + 1];
        for k in 1..d {
            ranks[k] = self.ranks[k] + other.ranks[k];
        }
        let mut cores = Vec::with_capacity(d);
        for k in 0..d {
            let n = self.mode_sizes[k];
            let (ra0, ra1) = (self.ranks[k], self.ranks[k + 1]);
            let (rb0, rb1) = (other.ranks[k], other.ranks[k + 1]);
            let (r0, r1) = (ranks[k], ranks[k + 1]);
            let mut core = vec![0.0; r0 * n * r1];
            // A occupies the top-left block, B the bottom-right one; the first
            // core only splits along the right rank, the last only along the left.
            let b_row_off = if k == 0 { 0 } else { ra0 };
            let b_col_off = if k == d - 1 { 0 } else { ra1 };
            for a in 0..ra0 {
                for i in 0..n {
                    for b in 0..ra1 {
                        core[(a * n + i) * r1 + b] = self.cores[k][(a * n + i) * ra1 + b];
                    }
                }
            }
            for a in 0..rb0 {
                for i in 0..n {
                    for b in 0..rb1 {
                        core[((a + b_row_off) * n + i) * r1 + b + b_col_off] += other.cores[k][(a * n + i) * rb1 + b];
                    }
                }
            }
            cores.push(core);
        }
        Ok(Self::from_parts(self.mode_sizes.clone(), ranks, cores))
    }

    /// Entrywise (Hadamard) product; ranks multiply.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let d = self.d();
        let ranks: Vec<usize> = (0..=d).map(|k| self.ranks[k] * other.ranks[k]).collect();
        let mut cores = Vec::with_capacity(d);
        for k in 0..d {
            let n = self.mode_sizes[k];
            let (ra0, ra1) = (self.ranks[k], self.ranks[k + 1]);
            let (rb0, rb1) = (other.ranks[k], other.ranks[k + 1]);
            let r1 = ra1 * rb1;
            let mut core = vec![0.0; ra0 * rb0 * n * r1];
            for a in 0..ra0 {
                for ap in 0..rb0 {
                    let row = a * rb0 + ap;
                    for i in 0..n {
                        for b in 0..ra1 {
                            let x = self.cores[k][(a * n + i) * ra1 + b];
                            for bp in 0..rb1 {
                                core[(row * n + i) * r1 + b * rb1 + bp] = x * other.cores[k][(ap * n + i) * rb1 + bp];
                            }
                        }
                    }
                }
            }
            cores.push(core);
        }
        Ok(Self::from_parts(self.mode_sizes.clone(), ranks, cores))
    }

    /// Multiplies core `k` along its node index by an `N_k × N_k` matrix.
    pub fn mode_apply(&self, m: &DMatrix<f64>, k: usize) -> Result<Self> {
        if k >= self.d() {
            return Err(invalid(format!("mode {k} out of range for d = {}", self.d())));
        }
        if m.ncols() != self.mode_sizes[k] || m.nrows() != self.mode_sizes[k] {
            return Err(mismatch(format!(
                "{}x{} matrix on mode {k} of size {}",
                m.nrows(),
                m.ncols(),
                self.mode_sizes[k]
            )));
        }
        Ok(self.mode_map(m, k))
    }

    /// Like [`mode_apply`](Self::mode_apply) but allows a rectangular matrix,
    /// changing the size of mode `k` to `m.nrows()`.
    pub(crate) fn mode_map(&self, m: &DMatrix<f64>, k: usize) -> Self {
        let (r0, n, r1) = (self.ranks[k], self.mode_sizes[k], self.ranks[k + 1]);
        let n_out = m.nrows();
        debug_assert_eq!(m.ncols(), n);
        let src = &self.cores[k];
        let mut core = vec![0.0; r0 * n_out * r1];
        for a in 0..r0 {
            for i in 0..n_out {
                let dst = &mut core[(a * n_out + i) * r1..(a * n_out + i + 1) * r1];
                for j in 0..n {
                    let mij = m[(i, j)];
                    if mij == 0.0 {
                        continue;
                    }
                    let row = &src[(a * n + j) * r1..(a * n + j + 1) * r1];
                    for (o, &g) in dst.iter_mut().zip(row) {
                        *o += mij * g;
                    }
                }
            }
        }
        let mut out = self.clone();
        out.cores[k] = core;
        out.mode_sizes[k] = n_out;
        out
    }

    /// Applies the same matrix along every mode.
    pub fn apply_all_modes(&self, m: &DMatrix<f64>) -> Result<Self> {
        let mut out = self.clone();
        for k in 0..self.d() {
            out = out.mode_apply(m, k)?;
        }
        Ok(out)
    }

    /// Full reconstruction; only sensible for small grids.
    pub fn to_dense(&self) -> DenseTensor {
        let d = self.d();
        // acc has shape (prod of leading modes) × R_k, row-major
        let mut acc = vec![1.0];
        let mut rows = 1usize;
        for k in 0..d {
            let (r0, n, r1) = (self.ranks[k], self.mode_sizes[k], self.ranks[k + 1]);
            let core = &self.cores[k];
            let mut next = vec![0.0; rows * n * r1];
            for p in 0..rows {
                for a in 0..r0 {
                    let v = acc[p * r0 + a];
                    if v == 0.0 {
                        continue;
                    }
                    for i in 0..n {
                        let src = &core[(a * n + i) * r1..(a * n + i + 1) * r1];
                        let dst = &mut next[(p * n + i) * r1..(p * n + i + 1) * r1];
                        for (o, &g) in dst.iter_mut().zip(src) {
                            *o += v * g;
                        }
                    }
                }
            }
            acc = next;
            rows *= n;
        }
        DenseTensor::from_parts(self.mode_sizes.clone(), acc)
    }

    /// Lower bound on `max |T[n]|` by coordinate ascent started from the best
    /// of a few structured guesses. Exact for rank-one nonnegative tensors.
    pub fn max_abs_estimate(&self) -> f64 {
        let d = self.d();
        let mut idx: Vec<usize> = self.mode_sizes.iter().map(|&n| n / 2).collect();
        // Start from the mode-wise argmax of |marginals|.
        for k in 0..d {
            let fiber = self.fiber(&idx, k);
            if let Some((i, _)) = fiber.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())) {
                idx[k] = i;
            }
        }
        let mut best = self.eval(&idx).map(f64::abs).unwrap_or(0.0);
        for _ in 0..8 {
            let mut moved = false;
            for k in 0..d {
                let fiber = self.fiber(&idx, k);
                for (i, v) in fiber.iter().enumerate() {
                    if v.abs() > best {
                        best = v.abs();
                        idx[k] = i;
                        moved = true;
                    }
                }
            }
            if !moved {
                break;
            }
        }
        best
    }

    /// Values along mode `k` with the other indices fixed at `idx`.
    pub(crate) fn fiber(&self, idx: &[usize], k: usize) -> Vec<f64> {
        let d = self.d();
        let mut left = vec![1.0];
        for j in 0..k {
            left = self.slice_left(j, &left, idx[j]);
        }
        let mut right = vec![1.0];
        for j in (k + 1..d).rev() {
            right = self.slice_right(j, idx[j], &right);
        }
        let (r0, n, r1) = (self.ranks[k], self.mode_sizes[k], self.ranks[k + 1]);
        let core = &self.cores[k];
        (0..n)
            .map(|i| {
                let mut s = 0.0;
                for a in 0..r0 {
                    let row = &core[(a * n + i) * r1..(a * n + i + 1) * r1];
                    let inner: f64 = row.iter().zip(&right).map(|(g, r)| g * r).sum();
                    s += left[a] * inner;
                }
                s
            })
            .collect()
    }

    fn slice_left(&self, k: usize, v: &[f64], i: usize) -> Vec<f64> {
        let (r0, n, r1) = (self.ranks[k], self.mode_sizes[k], self.ranks[k + 1]);
        let core = &self.cores[k];
        let mut out = vec![0.0; r1];
        for a in 0..r0 {
            let row = &core[(a * n + i) * r1..(a * n + i + 1) * r1];
            for (o, &g) in out.iter_mut().zip(row) {
                *o += v[a] * g;
            }
        }
        out
    }

    fn slice_right(&self, k: usize, i: usize, v: &[f64]) -> Vec<f64> {
        let (r0, n, r1) = (self.ranks[k], self.mode_sizes[k], self.ranks[k + 1]);
        let core = &self.cores[k];
        (0..r0)
            .map(|a| {
                let row = &core[(a * n + i) * r1..(a * n + i + 1) * r1];
                row.iter().zip(v).map(|(g, x)| g * x).sum()
            })
            .collect()
    }

    /// Upper bound on `|T[n]|` over the index set where mode `k` is fixed to
    /// `i`, from products of entrywise maxima of the core slices.
    pub(crate) fn face_abs_bound(&self, k: usize, i: usize) -> f64 {
        let mut v = vec![1.0];
        for j in 0..self.d() {
            let (r0, n, r1) = (self.ranks[j], self.mode_sizes[j], self.ranks[j + 1]);
            let core = &self.cores[j];
            let mut m = vec![0.0f64; r0 * r1];
            let range = if j == k { i..i + 1 } else { 0..n };
            for a in 0..r0 {
                for node in range.clone() {
                    for b in 0..r1 {
                        let g = core[(a * n + node) * r1 + b].abs();
                        if g > m[a * r1 + b] {
                            m[a * r1 + b] = g;
                        }
                    }
                }
            }
            let mut next = vec![0.0; r1];
            for a in 0..r0 {
                for b in 0..r1 {
                    next[b] += v[a] * m[a * r1 + b];
                }
            }
            v = next;
        }
        v[0]
    }
}
