//! Exact discrete optimal transport between equal-size point clouds under the
//! squared Euclidean cost, and the relative excess `ε_rel` of the encoder
//! pairing over the optimum.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, mismatch, Error, Result};
use crate::flow::PointCloud;

/// Wall-clock seconds per pipeline stage. The core never reads a clock;
/// callers fill these in.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Timings {
    pub generate_s: f64,
    pub fpe_s: f64,
    pub sample_s: f64,
    pub flow_s: f64,
    pub transport_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransportReport {
    /// Points used after dropping failed ones.
    pub n: usize,
    /// Optimal assignment cost, mean over points.
    pub cost_ot: f64,
    /// Cost of pairing each point with its own image.
    pub cost_encoder: f64,
    pub epsilon_rel: f64,
    /// Optimal permutation: point `i` of the first cloud goes to `assignment[i]`.
    pub assignment: Vec<usize>,
    pub identity_fraction: f64,
    pub excluded: usize,
    pub timings: Timings,
}

fn sqdist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_pair(x: &PointCloud, y: &PointCloud) -> Result<()> {
    if x.n() != y.n() || x.d() != y.d() {
        return Err(mismatch(format!("clouds of {}x{} and {}x{} points", x.n(), x.d(), y.n(), y.d())));
    }
    if x.n() == 0 {
        return Err(invalid("clouds must not be empty"));
    }
    if x.points().iter().chain(y.points()).any(|v| !v.is_finite()) {
        return Err(invalid("point coordinates must be finite"));
    }
    Ok(())
}

/// `Σ_i ‖x_i − y_i‖² / n`.
pub fn paired_cost(x: &PointCloud, y: &PointCloud) -> Result<f64> {
    check_pair(x, y)?;
    let total: f64 = (0..x.n()).map(|i| sqdist(x.point(i), y.point(i))).sum();
    Ok(total / x.n() as f64)
}

/// Minimum of `Σ_i ‖x_i − y_{σ(i)}‖² / n` over permutations `σ` and a
/// minimiser, by shortest augmenting paths with dual potentials (`O(n³)`).
pub fn ot_assignment(x: &PointCloud, y: &PointCloud) -> Result<(f64, Vec<usize>)> {
    check_pair(x, y)?;
    let n = x.n();
    let cost: Vec<f64> =
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| sqdist(x.point(i), y.point(j))).collect();
    let sigma = solve_assignment(n, &cost);
    // Summed in row order, like `paired_cost`, so equal pairings give equal
    // costs bit for bit.
    let total: f64 = (0..n).map(|i| cost[i * n + sigma[i]]).sum();
    Ok((total / n as f64, sigma))
}

/// Dense linear assignment on a row-major `n × n` cost matrix; returns the
/// column assigned to each row.
pub fn solve_assignment(n: usize, cost: &[f64]) -> Vec<usize> {
    debug_assert_eq!(cost.len(), n * n);
    // 1-based rows/columns, index 0 is the virtual source column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut sigma = vec![0usize; n];
    for j in 1..=n {
        sigma[row_of[j] - 1] = j - 1;
    }
    sigma
}

/// Compares the encoder pairing `x0[i] ↦ x1[i]` with the optimal assignment.
/// Both clouds must already be failure-filtered; `excluded` is recorded as
/// given.
pub fn compare(x0: &PointCloud, x1: &PointCloud, excluded: usize) -> Result<TransportReport> {
    check_pair(x0, x1)?;
    if x0.ids() != x1.ids() {
        return Err(mismatch("clouds are not paired by id"));
    }
    let cost_encoder = paired_cost(x0, x1)?;
    let (cost_ot, assignment) = ot_assignment(x0, x1)?;
    let epsilon_rel = if cost_ot > 0.0 {
        (cost_encoder - cost_ot) / cost_ot
    } else if cost_encoder == 0.0 {
        0.0
    } else {
        return Err(Error::DegenerateCost { cost_encoder });
    };
    let fixed = assignment.iter().enumerate().filter(|(i, s)| i == *s).count();
    Ok(TransportReport {
        n: x0.n(),
        cost_ot,
        cost_encoder,
        epsilon_rel,
        identity_fraction: fixed as f64 / x0.n() as f64,
        assignment,
        excluded,
        timings: Timings::default(),
    })
}
