//! TT-SVD construction and rounding.

// Inherent float methods only exist when std is linked somewhere in the graph.
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use super::{DenseTensor, TtTensor};
use crate::error::{invalid, Result};
use crate::linalg::{from_row_major, to_row_major};

/// Smallest rank whose discarded tail has Frobenius mass at most `delta`.
fn truncation_rank(sigma: &[f64], delta: f64) -> usize {
    let mut tail = 0.0;
    let mut rank = sigma.len();
    for (i, s) in sigma.iter().enumerate().rev() {
        tail += s * s;
        if tail.sqrt() > delta {
            break;
        }
        rank = i;
    }
    rank.max(1)
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol >= 0.0 && tol < 1.0) {
        return Err(invalid("tolerance must lie in [0, 1)"));
    }
    Ok(())
}

impl TtTensor {
    /// TT-SVD: sequential truncated SVDs of the unfoldings, each cut at
    /// `tol/√(d−1)·‖A‖_F`, so the reconstruction error is at most `tol·‖A‖_F`.
    pub fn from_dense(tensor: &DenseTensor, tol: f64) -> Result<Self> {
        check_tol(tol)?;
        let shape = tensor.shape().to_vec();
        let d = shape.len();
        if d == 1 {
            return Ok(Self::from_parts(shape, vec![1, 1], vec![tensor.data().to_vec()]));
        }
        let delta = tol / ((d - 1) as f64).sqrt() * tensor.frobenius_norm();
        let mut ranks = vec![1usize; d + 1];
        let mut cores = Vec::with_capacity(d);
        let mut rest = tensor.data().to_vec();
        for k in 0..d - 1 {
            let rows = ranks[k] * shape[k];
            let cols = rest.len() / rows;
            let svd = from_row_major(rows, cols, &rest).svd(true, true);
            let u = svd.u.expect("requested U");
            let vt = svd.v_t.expect("requested V^T");
            let sigma = svd.singular_values.as_slice();
            let r = truncation_rank(sigma, delta).min(sigma.len());
            cores.push(to_row_major(&u.columns(0, r).into_owned()));
            let mut next = to_row_major(&vt.rows(0, r).into_owned());
            for (i, s) in sigma.iter().take(r).enumerate() {
                for v in next[i * cols..(i + 1) * cols].iter_mut() {
                    *v *= s;
                }
            }
            rest = next;
            ranks[k + 1] = r;
        }
        cores.push(rest);
        Ok(Self::from_parts(shape, ranks, cores))
    }

    /// Frobenius norm through right-to-left QR, accurate to rounding even
    /// when the train is a small difference of large terms.
    pub(crate) fn orthogonal_norm(&self) -> f64 {
        let d = self.d();
        let n = &self.mode_sizes;
        let mut ranks = self.ranks.clone();
        let mut carry = self.cores[d - 1].clone();
        for k in (1..d).rev() {
            let (r0, r1) = (ranks[k], ranks[k + 1]);
            let r = from_row_major(r0, n[k] * r1, &carry).transpose().qr().r();
            let (p0, p1) = (ranks[k - 1], ranks[k]);
            let prev = from_row_major(p0 * n[k - 1], p1, &self.cores[k - 1]);
            carry = to_row_major(&(prev * r.transpose()));
            ranks[k] = r.nrows();
        }
        carry.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Recompresses to relative Frobenius accuracy `tol`; ranks never grow.
    pub fn round(&self, tol: f64) -> Result<Self> {
        self.round_capped(tol, usize::MAX)
    }

    /// Rounding with an additional hard rank cap (which may exceed `tol`).
    pub fn round_capped(&self, tol: f64, max_rank: usize) -> Result<Self> {
        check_tol(tol)?;
        let d = self.d();
        if d == 1 {
            return Ok(self.clone());
        }
        let n = self.mode_sizes.clone();
        let mut ranks = self.ranks.clone();
        let mut cores = self.cores.clone();

        // Right-to-left orthogonalisation: core k becomes row-orthonormal
        // when viewed as R_{k-1} × (N_k R_k).
        for k in (1..d).rev() {
            let (r0, r1) = (ranks[k], ranks[k + 1]);
            let m = from_row_major(r0, n[k] * r1, &cores[k]);
            let qr = m.transpose().qr();
            let q = qr.q(); // (N_k R_k) × s
            let r = qr.r(); // s × R_{k-1}
            let s = q.ncols();
            cores[k] = to_row_major(&q.transpose());
            // core_{k-1} ← core_{k-1} · Rᵀ, new right rank s
            let (p0, p1) = (ranks[k - 1], ranks[k]);
            let prev = from_row_major(p0 * n[k - 1], p1, &cores[k - 1]);
            cores[k - 1] = to_row_major(&(prev * r.transpose()));
            ranks[k] = s;
        }

        let norm = cores[0].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return TtTensor::zeros(&n);
        }
        let delta = tol / ((d - 1) as f64).sqrt() * norm;

        for k in 0..d - 1 {
            let (r0, r1) = (ranks[k], ranks[k + 1]);
            let m = from_row_major(r0 * n[k], r1, &cores[k]);
            let svd = m.svd(true, true);
            let u = svd.u.expect("requested U");
            let vt = svd.v_t.expect("requested V^T");
            let sigma = svd.singular_values.as_slice();
            let r = truncation_rank(sigma, delta).min(max_rank).min(sigma.len());
            cores[k] = to_row_major(&u.columns(0, r).into_owned());
            let mut sv: DMatrix<f64> = vt.rows(0, r).into_owned();
            for i in 0..r {
                for v in sv.row_mut(i).iter_mut() {
                    *v *= sigma[i];
                }
            }
            let (q1, q2) = (ranks[k + 1], ranks[k + 2]);
            let next = from_row_major(q1, n[k + 1] * q2, &cores[k + 1]);
            cores[k + 1] = to_row_major(&(sv * next));
            ranks[k + 1] = r;
        }
        Ok(Self::from_parts(n, ranks, cores))
    }
}
