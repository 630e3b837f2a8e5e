//! Rank-adaptive TT-cross interpolation of a black-box tensor.
//!
//! Left-to-right sweeps pick row pivots of each fibre matrix with maxvol and
//! build interpolating cores `Q·Q[I]⁻¹`; right-to-left sweeps refresh the
//! column index sets. A sweep is accepted when both the held-out validation
//! error and the relative Frobenius change since the previous sweep are
//! within tolerance. Random validation indices rarely hit the bulk of a
//! peaked function, so the change criterion is what guards the peak. After
//! each rejected sweep the target rank grows by one through a random extra
//! column index per bond.

// Inherent float methods only exist when std is linked somewhere in the graph.
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TtTensor;
use crate::error::{invalid, Error, Result};
use crate::linalg::{from_row_major, maxvol, to_row_major};

/// The sweep-to-sweep change must fall below this fraction of `tol`; the
/// change only loosely bounds the error of the newer sweep.
const CHANGE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct CrossOptions {
    /// Target relative error on the held-out validation indices.
    pub tol: f64,
    pub max_rank: usize,
    pub start_rank: usize,
    pub validation_points: usize,
    /// Seed for the validation set and the random column indices.
    pub seed: u64,
    /// Recompress the converged interpolant with `tol / 10`.
    pub round: bool,
}

impl Default for CrossOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_rank: 30, start_rank: 2, validation_points: 1000, seed: 0x7715_c0de, round: true }
    }
}

#[derive(Debug, Clone)]
pub struct CrossOutcome {
    pub tensor: TtTensor,
    /// Relative 2-norm error over the validation indices.
    pub validation_error: f64,
    /// Set when `max_rank` was reached before the tolerance was met.
    pub rank_capped: bool,
    pub evaluations: usize,
    pub sweeps: usize,
}

struct Sampler<'a, F> {
    f: F,
    mode_sizes: &'a [usize],
    buf: Vec<usize>,
    evaluations: usize,
}

impl<F: FnMut(&[usize]) -> f64> Sampler<'_, F> {
    fn at(&mut self, left: &[usize], i: usize, right: &[usize]) -> Result<f64> {
        self.buf.clear();
        self.buf.extend_from_slice(left);
        self.buf.push(i);
        self.buf.extend_from_slice(right);
        self.full(None)
    }

    fn full(&mut self, idx: Option<&[usize]>) -> Result<f64> {
        if let Some(idx) = idx {
            self.buf.clear();
            self.buf.extend_from_slice(idx);
        }
        debug_assert_eq!(self.buf.len(), self.mode_sizes.len());
        self.evaluations += 1;
        let v = (self.f)(&self.buf);
        if !v.is_finite() {
            return Err(Error::NonFinite { index: self.buf.clone() });
        }
        Ok(v)
    }
}

fn random_tail(rng: &mut ChaCha8Rng, sizes: &[usize]) -> Vec<usize> {
    sizes.iter().map(|&n| rng.random_range(0..n)).collect()
}

/// Builds a TT approximation of `f` over the index grid `mode_sizes`.
///
/// `f` must be deterministic; a non-finite value aborts with
/// [`Error::NonFinite`] carrying the offending index.
pub fn cross<F>(f: F, mode_sizes: &[usize], opts: &CrossOptions) -> Result<CrossOutcome>
where
    F: FnMut(&[usize]) -> f64,
{
    let d = mode_sizes.len();
    if d == 0 || mode_sizes.contains(&0) {
        return Err(invalid("cross needs d >= 1 and non-empty modes"));
    }
    if !(opts.tol > 0.0 && opts.tol < 1.0) || opts.max_rank == 0 {
        return Err(invalid("cross needs tol in (0, 1) and max_rank >= 1"));
    }
    let mut s = Sampler { f, mode_sizes, buf: Vec::with_capacity(d), evaluations: 0 };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    if d == 1 {
        let core = (0..mode_sizes[0]).map(|i| s.at(&[], i, &[])).collect::<Result<Vec<f64>>>()?;
        let tensor = TtTensor::from_parts(mode_sizes.to_vec(), vec![1, 1], vec![core]);
        return Ok(CrossOutcome {
            tensor,
            validation_error: 0.0,
            rank_capped: false,
            evaluations: s.evaluations,
            sweeps: 0,
        });
    }

    let validation: Vec<Vec<usize>> =
        (0..opts.validation_points.max(1)).map(|_| random_tail(&mut rng, mode_sizes)).collect();
    let truth = validation.iter().map(|idx| s.full(Some(idx))).collect::<Result<Vec<f64>>>()?;
    let truth_norm = truth.iter().map(|v| v * v).sum::<f64>().sqrt();
    let validate = |t: &TtTensor| -> f64 {
        let diff = validation
            .iter()
            .zip(&truth)
            .map(|(idx, &v)| {
                let e = t.eval(idx).unwrap_or(f64::NAN) - v;
                e * e
            })
            .sum::<f64>()
            .sqrt();
        if truth_norm > 0.0 {
            diff / truth_norm
        } else {
            diff
        }
    };

    // Largest meaningful rank of each bond.
    let bond_limit: Vec<usize> = (0..d - 1)
        .map(|k| {
            let left = mode_sizes[..=k].iter().fold(1usize, |a, &n| a.saturating_mul(n));
            let right = mode_sizes[k + 1..].iter().fold(1usize, |a, &n| a.saturating_mul(n));
            left.min(right)
        })
        .collect();

    let mut rank = opts.start_rank.clamp(1, opts.max_rank);
    let mut left: Vec<Vec<Vec<usize>>> = vec![Vec::new(); d];
    let mut right: Vec<Vec<Vec<usize>>> = vec![Vec::new(); d];
    right[d - 1].push(Vec::new());
    for k in 0..d - 1 {
        enrich(&mut right[k], rank.min(bond_limit[k]), &mut rng, &mode_sizes[k + 1..]);
    }

    let mut best: Option<(TtTensor, f64)> = None;
    let mut previous: Option<TtTensor> = None;
    let mut sweeps = 0usize;
    let mut sweeps_at_cap = 0usize;
    let mut rank_capped = false;
    loop {
        let tt = sweep_left_to_right(&mut s, mode_sizes, &mut left, &right)?;
        sweeps += 1;
        let err = validate(&tt);
        let change = previous.as_ref().map(|p| relative_change(&tt, p));
        let converged = err <= opts.tol && change.is_some_and(|c| c <= CHANGE_FRACTION * opts.tol);
        let improved = best.as_ref().is_none_or(|(_, e)| err < *e);
        if converged || improved {
            best = Some((tt.clone(), err));
        }
        if converged {
            break;
        }
        previous = Some(tt);
        let saturated = bond_limit.iter().all(|&l| rank >= l);
        if rank >= opts.max_rank || saturated {
            sweeps_at_cap += 1;
            if sweeps_at_cap >= 2 {
                rank_capped = !saturated;
                break;
            }
        }
        sweep_right_to_left(&mut s, mode_sizes, &left, &mut right)?;
        if rank < opts.max_rank {
            rank += 1;
        }
        for k in 0..d - 1 {
            enrich(&mut right[k], rank.min(bond_limit[k]), &mut rng, &mode_sizes[k + 1..]);
        }
    }

    let (mut tensor, mut validation_error) = best.expect("at least one sweep ran");
    if opts.round && !rank_capped {
        let rounded = tensor.round(opts.tol * 0.1)?;
        let err = validate(&rounded);
        if err <= opts.tol.max(validation_error) {
            tensor = rounded;
            validation_error = err;
        }
    }
    Ok(CrossOutcome { tensor, validation_error, rank_capped, evaluations: s.evaluations, sweeps })
}

fn relative_change(new: &TtTensor, old: &TtTensor) -> f64 {
    let scale = new.orthogonal_norm();
    let diff = new.add(&old.scale(-1.0)).map(|t| t.orthogonal_norm()).unwrap_or(f64::INFINITY);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

fn enrich(set: &mut Vec<Vec<usize>>, target: usize, rng: &mut ChaCha8Rng, sizes: &[usize]) {
    let mut attempts = 0;
    while set.len() < target && attempts < 64 * target.max(1) {
        attempts += 1;
        let cand = random_tail(rng, sizes);
        if !set.contains(&cand) {
            set.push(cand);
        }
    }
}

fn sweep_left_to_right<F: FnMut(&[usize]) -> f64>(
    s: &mut Sampler<'_, F>,
    mode_sizes: &[usize],
    left: &mut [Vec<Vec<usize>>],
    right: &[Vec<Vec<usize>>],
) -> Result<TtTensor> {
    let d = mode_sizes.len();
    left[0] = vec![Vec::new()];
    let mut ranks = vec![1usize; d + 1];
    let mut cores = Vec::with_capacity(d);
    for k in 0..d {
        let n = mode_sizes[k];
        let (rows, cols) = (left[k].len(), right[k].len());
        let mut fib = Vec::with_capacity(rows * n * cols);
        for a in 0..rows {
            for i in 0..n {
                for b in 0..cols {
                    fib.push(s.at(&left[k][a], i, &right[k][b])?);
                }
            }
        }
        if k == d - 1 {
            cores.push(fib);
            break;
        }
        let q = from_row_major(rows * n, cols, &fib).qr().q();
        let r = q.ncols();
        let piv = maxvol(&q, 1e-2, 200)?;
        let sub = DMatrix::from_fn(r, r, |i, j| q[(piv[i], j)]);
        let inv = sub.lu().try_inverse().ok_or_else(|| Error::Numerical("cross: singular maxvol submatrix".into()))?;
        cores.push(to_row_major(&(q * inv)));
        ranks[k + 1] = r;
        left[k + 1] = piv
            .iter()
            .map(|&p| {
                let mut idx = left[k][p / n].clone();
                idx.push(p % n);
                idx
            })
            .collect();
    }
    Ok(TtTensor::from_parts(mode_sizes.to_vec(), ranks, cores))
}

fn sweep_right_to_left<F: FnMut(&[usize]) -> f64>(
    s: &mut Sampler<'_, F>,
    mode_sizes: &[usize],
    left: &[Vec<Vec<usize>>],
    right: &mut [Vec<Vec<usize>>],
) -> Result<()> {
    let d = mode_sizes.len();
    right[d - 1] = vec![Vec::new()];
    for k in (1..d).rev() {
        let n = mode_sizes[k];
        let (rows, cols) = (left[k].len(), right[k].len());
        // Row index (i, b), column index a.
        let mut fib = vec![0.0; n * cols * rows];
        for a in 0..rows {
            for i in 0..n {
                for b in 0..cols {
                    fib[(i * cols + b) * rows + a] = s.at(&left[k][a], i, &right[k][b])?;
                }
            }
        }
        let q = from_row_major(n * cols, rows, &fib).qr().q();
        let piv = maxvol(&q, 1e-2, 200)?;
        right[k - 1] = piv
            .iter()
            .map(|&p| {
                let mut idx = vec![p / cols];
                idx.extend_from_slice(&right[k][p % cols]);
                idx
            })
            .collect();
    }
    Ok(())
}
