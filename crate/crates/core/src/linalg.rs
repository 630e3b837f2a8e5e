//! Dense linear-algebra helpers on top of `nalgebra`: the matrix exponential,
//! maxvol row selection and row-major conversions used by the tensor code.

// Inherent float methods only exist when std is linked somewhere in the graph.
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Error, Result};

const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371_920_351_148_152;

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé
/// approximant.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(invalid("expm needs a square matrix"));
    }
    let n = a.nrows();
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("expm: non-finite input".into()));
    }
    let nrm = norm1(a);
    let ident = DMatrix::<f64>::identity(n, n);
    if nrm == 0.0 {
        return Ok(ident);
    }
    let squarings = if nrm > THETA13 { (nrm / THETA13).log2().ceil().max(0.0) as i32 } else { 0 };
    let a = a * 2f64.powi(-squarings);
    let b = &PADE13;
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    let lu = (&v - &u).lu();
    let mut r = lu.solve(&(&v + &u)).ok_or_else(|| Error::Numerical("expm: singular Padé denominator".into()))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("expm: result overflowed".into()));
    }
    Ok(r)
}

/// `a^k` by binary powering.
pub fn matrix_power(a: &DMatrix<f64>, mut k: usize) -> DMatrix<f64> {
    let n = a.nrows();
    let mut result = DMatrix::<f64>::identity(n, n);
    let mut base = a.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = &result * &base;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Builds an `nalgebra` matrix from row-major data.
pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

/// Flattens a matrix into row-major order.
pub fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (rows, cols) = m.shape();
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Selects `r` rows of the tall `n × r` matrix `a` whose square submatrix has
/// (locally) maximal volume. Every entry of `a · a[rows]⁻¹` is bounded by
/// `1 + tol` in magnitude on return.
pub fn maxvol(a: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<Vec<usize>> {
    let (n, r) = a.shape();
    if r == 0 || n < r {
        return Err(invalid("maxvol needs a tall matrix with at least one column"));
    }
    // Partial-pivoting elimination gives a non-singular starting set.
    let mut work = a.clone();
    let mut rows: Vec<usize> = Vec::with_capacity(r);
    let mut taken = vec![false; n];
    for j in 0..r {
        let mut best = usize::MAX;
        let mut best_val = -1.0;
        for i in 0..n {
            if !taken[i] && work[(i, j)].abs() > best_val {
                best_val = work[(i, j)].abs();
                best = i;
            }
        }
        taken[best] = true;
        rows.push(best);
        let pivot = work[(best, j)];
        if pivot != 0.0 {
            for i in 0..n {
                if taken[i] {
                    continue;
                }
                let factor = work[(i, j)] / pivot;
                if factor != 0.0 {
                    for c in j..r {
                        let v = work[(best, c)];
                        work[(i, c)] -= factor * v;
                    }
                }
            }
        }
    }
    let sub = DMatrix::from_fn(r, r, |i, j| a[(rows[i], j)]);
    let inv = match sub.try_inverse() {
        Some(inv) => inv,
        // Rank-deficient input: keep the elimination pivots.
        None => return Ok(rows),
    };
    let mut b = a * inv;
    for _ in 0..max_iter {
        let mut best = (0usize, 0usize);
        let mut best_val = 0.0;
        for j in 0..r {
            for i in 0..n {
                let v = b[(i, j)].abs();
                if v > best_val {
                    best_val = v;
                    best = (i, j);
                }
            }
        }
        if best_val <= 1.0 + tol {
            break;
        }
        let (i, j) = best;
        let bij = b[(i, j)];
        let col: Vec<f64> = (0..n).map(|k| b[(k, j)]).collect();
        let mut row: Vec<f64> = (0..r).map(|k| b[(i, k)]).collect();
        row[j] -= 1.0;
        for c in 0..r {
            let rc = row[c] / bij;
            if rc != 0.0 {
                for k in 0..n {
                    b[(k, c)] -= col[k] * rc;
                }
            }
        }
        rows[j] = i;
    }
    Ok(rows)
}
