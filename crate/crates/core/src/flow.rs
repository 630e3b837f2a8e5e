//! Sampling from tensor-train densities and transport of samples along the
//! probability-flow ODE `dx/dt = −(x + ∇ log p_t(x))`.

// Inherent float methods only exist when std is linked somewhere in the graph.
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cheb::{row_times, ChebGrid};
use crate::error::{invalid, mismatch, Error, Result};
use crate::fpe::DensityTrajectory;
use crate::gaussian::GaussianSpec;
use crate::tt::TtTensor;

/// `n` points in `ℝ^d`, row-major, with stable ids.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PointCloud {
    d: usize,
    points: Vec<f64>,
    ids: Vec<usize>,
}

impl PointCloud {
    /// Builds a cloud with ids `0..n`.
    pub fn new(d: usize, points: Vec<f64>) -> Result<Self> {
        if d == 0 || points.len() % d != 0 {
            return Err(mismatch(format!("{} coordinates do not form {d}-d points", points.len())));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(invalid("point coordinates must be finite"));
        }
        let n = points.len() / d;
        Ok(Self { d, points, ids: (0..n).collect() })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(mismatch("rows of unequal length"));
        }
        Self::new(d, rows.concat())
    }

    pub(crate) fn with_ids(d: usize, points: Vec<f64>, ids: Vec<usize>) -> Self {
        debug_assert_eq!(points.len(), d * ids.len());
        Self { d, points, ids }
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    /// Keeps the rows whose position is not listed in `drop`.
    pub fn without(&self, drop: &[usize]) -> Self {
        let mut points = Vec::with_capacity(self.points.len());
        let mut ids = Vec::with_capacity(self.ids.len());
        for i in 0..self.n() {
            if !drop.contains(&i) {
                points.extend_from_slice(self.point(i));
                ids.push(self.ids[i]);
            }
        }
        Self { d: self.d, points, ids }
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for i in 0..self.n() {
            for (mk, &x) in m.iter_mut().zip(self.point(i)) {
                *mk += x;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.n() as f64);
        m
    }

    /// Sample covariance (divisor `n − 1`).
    pub fn covariance(&self) -> DMatrix<f64> {
        let mean = self.mean();
        let mut c = DMatrix::zeros(self.d, self.d);
        for i in 0..self.n() {
            let p = self.point(i);
            for a in 0..self.d {
                for b in 0..self.d {
                    c[(a, b)] += (p[a] - mean[a]) * (p[b] - mean[b]);
                }
            }
        }
        c / (self.n().max(2) - 1) as f64
    }
}

/// One point's trajectory through the flow.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FlowPath {
    pub id: usize,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

/// Number of uniform points of the refined grid used by the sampler.
pub const SAMPLER_GRID: usize = 2048;

/// Draws `n` samples of the density `p` by sequential conditional inverse-CDF
/// sampling. Deterministic for a given seed.
pub fn sample_tt(p: &TtTensor, grid: &ChebGrid, n: usize, seed: u64) -> Result<PointCloud> {
    grid.check_tensor(p)?;
    if n == 0 {
        return Err(invalid("sample count must be positive"));
    }
    let d = grid.d();
    let (a, b) = grid.interval();
    let fine: Vec<f64> = (0..SAMPLER_GRID).map(|j| a + (b - a) * j as f64 / (SAMPLER_GRID - 1) as f64).collect();
    let refine = grid.interp_matrix(&fine);
    let ranks = p.ranks();

    // suffix[k]: contraction of modes k..d with the quadrature weights.
    let mut suffix = vec![Vec::new(); d + 1];
    suffix[d] = vec![1.0];
    let mut slice = Vec::new();
    for k in (0..d).rev() {
        p.weighted_slice(k, grid.weights(), &mut slice);
        suffix[k] = crate::cheb::times_col(&slice, &suffix[k + 1], ranks[k]);
    }
    // cond[k][a, j] = Σ_b G̃_k[a, j, b] suffix[k+1][b] on the refined grid.
    let cond: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let refined = p.mode_map(&refine, k);
            let core = refined.core(k);
            let r1 = ranks[k + 1];
            (0..ranks[k] * SAMPLER_GRID)
                .map(|row| core[row * r1..(row + 1) * r1].iter().zip(&suffix[k + 1]).map(|(g, s)| g * s).sum())
                .collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n * d);
    let mut dens = vec![0.0; SAMPLER_GRID];
    let mut cdf = vec![0.0; SAMPLER_GRID];
    let mut basis = vec![0.0; grid.n()];
    let mut prefix_x = Vec::with_capacity(d);
    for _ in 0..n {
        let mut phi = vec![1.0];
        prefix_x.clear();
        for k in 0..d {
            dens.fill(0.0);
            for (al, &pa) in phi.iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                let row = &cond[k][al * SAMPLER_GRID..(al + 1) * SAMPLER_GRID];
                for (o, &c) in dens.iter_mut().zip(row) {
                    *o += pa * c;
                }
            }
            dens.iter_mut().for_each(|v| *v = v.max(0.0));
            cdf[0] = 0.0;
            for j in 1..SAMPLER_GRID {
                cdf[j] = cdf[j - 1] + 0.5 * (dens[j - 1] + dens[j]) * (fine[j] - fine[j - 1]);
            }
            let total = cdf[SAMPLER_GRID - 1];
            if !(total > 0.0 && total.is_finite()) {
                return Err(Error::Sampling { prefix: prefix_x.clone() });
            }
            let u: f64 = rng.random::<f64>() * total;
            let x = invert_linear_cdf(&fine, &dens, &cdf, u);
            prefix_x.push(x);
            grid.basis(x, &mut basis);
            let mut m = Vec::new();
            p.weighted_slice(k, &basis, &mut m);
            phi = row_times(&phi, &m, ranks[k + 1]);
        }
        points.extend_from_slice(&prefix_x);
    }
    PointCloud::new(d, points)
}

/// Inverts the CDF of a piecewise-linear density at mass `u`.
fn invert_linear_cdf(x: &[f64], dens: &[f64], cdf: &[f64], u: f64) -> f64 {
    let n = x.len();
    let j = cdf.partition_point(|&c| c < u).clamp(1, n - 1);
    let (x0, x1) = (x[j - 1], x[j]);
    let (q0, q1) = (dens[j - 1], dens[j]);
    let mass = (u - cdf[j - 1]).max(0.0);
    let width = x1 - x0;
    let slope = (q1 - q0) / width;
    // q0 s + slope s²/2 = mass, solved without cancellation
    let disc = (q0 * q0 + 2.0 * slope * mass).max(0.0);
    let denom = q0 + disc.sqrt();
    let s = if denom > 0.0 { 2.0 * mass / denom } else { 0.5 * width };
    (x0 + s.clamp(0.0, width)).clamp(x0, x1)
}

/// Time-indexed score `∇ log p_t` at the step times of a uniform grid on
/// `[0, t_max]`.
pub trait ScoreField {
    fn dim(&self) -> usize;

    /// Number of steps `M`; scores exist for `m = 0..=M`.
    fn steps(&self) -> usize;

    fn t_max(&self) -> f64;

    /// Box that states are clamped to.
    fn bounds(&self) -> (f64, f64);

    /// Writes scores at step `m` for row-major `points` into `out`; returns
    /// how many points hit the density floor.
    fn scores(&self, m: usize, points: &[f64], out: &mut [f64]) -> Result<usize>;

    fn time(&self, m: usize) -> f64 {
        if m == self.steps() {
            self.t_max()
        } else {
            self.t_max() * m as f64 / self.steps() as f64
        }
    }
}

impl ScoreField for DensityTrajectory {
    fn dim(&self) -> usize {
        self.grid().d()
    }

    fn steps(&self) -> usize {
        DensityTrajectory::steps(self)
    }

    fn t_max(&self) -> f64 {
        DensityTrajectory::t_max(self)
    }

    fn bounds(&self) -> (f64, f64) {
        self.grid().interval()
    }

    fn scores(&self, m: usize, points: &[f64], out: &mut [f64]) -> Result<usize> {
        if m > DensityTrajectory::steps(self) {
            return Err(invalid(format!("step {m} beyond the trajectory")));
        }
        batch_log_gradient(self.snapshot(m), self.grid(), self.floor(m), points, out)
    }
}

/// `∇ log p` of a grid function at many points. Per mode, the interpolation
/// and differentiation weights of all points are stacked into one matrix and
/// multiplied against the core, after which each point runs a short chain of
/// `r × r` products.
pub fn batch_log_gradient(p: &TtTensor, grid: &ChebGrid, floor: f64, points: &[f64], out: &mut [f64]) -> Result<usize> {
    grid.check_tensor(p)?;
    let d = grid.d();
    let n = grid.n();
    if points.len() % d != 0 || out.len() != points.len() {
        return Err(mismatch("point and output buffers disagree"));
    }
    let count = points.len() / d;
    for i in 0..count {
        grid.check_point(&points[i * d..(i + 1) * d])?;
    }
    if count == 0 {
        return Ok(0);
    }
    let ranks = p.ranks();
    let mut val = vec![0.0; n];
    let mut der = vec![0.0; n];
    // slices[k] is (2·count) × (R_k R_{k+1}): value rows then derivative rows.
    let mut slices = Vec::with_capacity(d);
    for k in 0..d {
        let mut w = DMatrix::zeros(2 * count, n);
        for i in 0..count {
            grid.basis_with_derivative(points[i * d + k], &mut val, &mut der);
            for j in 0..n {
                w[(i, j)] = val[j];
                w[(count + i, j)] = der[j];
            }
        }
        let (r0, r1) = (ranks[k], ranks[k + 1]);
        let core = p.core(k);
        let c = DMatrix::from_fn(n, r0 * r1, |j, ab| {
            let (a, b) = (ab / r1, ab % r1);
            core[(a * n + j) * r1 + b]
        });
        slices.push(w * c);
    }
    let mut floored = 0;
    let mut prefix: Vec<Vec<f64>> = vec![Vec::new(); d + 1];
    let mut m = Vec::new();
    let mut dm = Vec::new();
    for i in 0..count {
        prefix[0] = vec![1.0];
        for k in 0..d {
            let r1 = ranks[k + 1];
            row_of(&slices[k], i, &mut m);
            prefix[k + 1] = row_times(&prefix[k], &m, r1);
        }
        let value = prefix[d][0];
        let denom = if value < floor {
            floored += 1;
            floor
        } else {
            value
        };
        let mut suffix = vec![1.0];
        for k in (0..d).rev() {
            let (r0, r1) = (ranks[k], ranks[k + 1]);
            row_of(&slices[k], count + i, &mut dm);
            let tmp = row_times(&prefix[k], &dm, r1);
            let g: f64 = tmp.iter().zip(&suffix).map(|(a, b)| a * b).sum();
            out[i * d + k] = g / denom;
            row_of(&slices[k], i, &mut m);
            suffix = crate::cheb::times_col(&m, &suffix, r0);
        }
    }
    Ok(floored)
}

fn row_of(mat: &DMatrix<f64>, i: usize, out: &mut Vec<f64>) {
    out.clear();
    out.extend(mat.row(i).iter().copied());
}

/// Exact score of the Gaussian solution, sampled at the step times.
#[derive(Debug, Clone)]
pub struct GaussianScore {
    spec: GaussianSpec,
    steps: usize,
    t_max: f64,
    bounds: (f64, f64),
}

impl GaussianScore {
    pub fn new(spec: GaussianSpec, steps: usize, t_max: f64, bounds: (f64, f64)) -> Result<Self> {
        if steps == 0 || !(t_max > 0.0) || !(bounds.0 < bounds.1) {
            return Err(invalid("need steps >= 1, t_max > 0 and a non-empty box"));
        }
        Ok(Self { spec, steps, t_max, bounds })
    }
}

impl ScoreField for GaussianScore {
    fn dim(&self) -> usize {
        self.spec.d()
    }

    fn steps(&self) -> usize {
        self.steps
    }

    fn t_max(&self) -> f64 {
        self.t_max
    }

    fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    fn scores(&self, m: usize, points: &[f64], out: &mut [f64]) -> Result<usize> {
        let d = self.spec.d();
        let t = self.time(m);
        for (x, o) in points.chunks(d).zip(out.chunks_mut(d)) {
            o.copy_from_slice(&self.spec.score_at(t, x));
        }
        Ok(0)
    }
}

/// Counters reported by [`flow_integrate`].
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FlowStats {
    /// Stage states that left the box and were clamped.
    pub clamped: usize,
    /// Score evaluations that hit the density floor.
    pub floored: usize,
    /// Positions (in the input cloud) of points whose state became
    /// non-finite; they are frozen at their last finite state.
    pub failed: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct FlowOutcome {
    pub x1: PointCloud,
    pub paths: Vec<FlowPath>,
    pub stats: FlowStats,
}

/// Classical RK4 from `0` to `t_max` with one step per snapshot interval.
/// Stages at the step ends use the stored scores; the two midpoint stages use
/// the mean of the scores at both ends.
pub fn flow_integrate<S: ScoreField + ?Sized>(field: &S, x0: &PointCloud) -> Result<FlowOutcome> {
    let d = field.dim();
    if x0.d() != d {
        return Err(mismatch(format!("{}-d cloud in a {d}-d flow", x0.d())));
    }
    let (lo, hi) = field.bounds();
    if x0.points().iter().any(|&v| v < lo || v > hi) {
        return Err(invalid("initial points must lie in the box"));
    }
    let n = x0.n();
    let steps = field.steps();
    let mut stats = FlowStats::default();
    let mut state = x0.points().to_vec();
    let mut alive: Vec<usize> = (0..n).collect();
    let mut paths: Vec<FlowPath> =
        (0..n).map(|i| FlowPath { id: x0.ids()[i], times: vec![0.0], states: vec![x0.point(i).to_vec()] }).collect();

    let mut buf = Vec::new();
    let mut s_a = Vec::new();
    let mut s_b = Vec::new();
    let mut k = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    for m in 0..steps {
        let h = field.time(m + 1) - field.time(m);
        let len = alive.len() * d;
        let current: Vec<f64> = alive.iter().flat_map(|&i| state[i * d..(i + 1) * d].iter().copied()).collect();
        for kk in k.iter_mut() {
            kk.resize(len, 0.0);
        }
        s_a.resize(len, 0.0);
        s_b.resize(len, 0.0);

        let mut k0 = core::mem::take(&mut k[0]);
        stats.floored += velocity(field, m, 0, &current, &mut k0, &mut s_a, &mut s_b)?;
        stage_state(&mut buf, &current, &mut k0, 0.5 * h);
        stats.clamped += clamp_to(&mut buf, lo, hi);

        let mut k1 = core::mem::take(&mut k[1]);
        stats.floored += velocity(field, m, 1, &buf, &mut k1, &mut s_a, &mut s_b)?;
        stage_state(&mut buf, &current, &mut k1, 0.5 * h);
        stats.clamped += clamp_to(&mut buf, lo, hi);

        let mut k2 = core::mem::take(&mut k[2]);
        stats.floored += velocity(field, m, 2, &buf, &mut k2, &mut s_a, &mut s_b)?;
        stage_state(&mut buf, &current, &mut k2, h);
        stats.clamped += clamp_to(&mut buf, lo, hi);

        let mut k3 = core::mem::take(&mut k[3]);
        stats.floored += velocity(field, m, 3, &buf, &mut k3, &mut s_a, &mut s_b)?;

        let mut newly_failed = Vec::new();
        for (slot, &i) in alive.iter().enumerate() {
            let r = slot * d..(slot + 1) * d;
            let mut next: Vec<f64> =
                r.clone().map(|j| current[j] + h / 6.0 * (k0[j] + 2.0 * k1[j] + 2.0 * k2[j] + k3[j])).collect();
            if next.iter().any(|v| !v.is_finite()) {
                newly_failed.push(i);
                continue;
            }
            stats.clamped += clamp_to(&mut next, lo, hi);
            state[i * d..(i + 1) * d].copy_from_slice(&next);
            paths[i].times.push(field.time(m + 1));
            paths[i].states.push(next);
        }
        k = [k0, k1, k2, k3];
        if !newly_failed.is_empty() {
            alive.retain(|i| !newly_failed.contains(i));
            stats.failed.extend(newly_failed);
        }
        if alive.is_empty() {
            break;
        }
    }
    stats.failed.sort_unstable();
    let x1 = PointCloud::with_ids(d, state, x0.ids().to_vec());
    Ok(FlowOutcome { x1, paths, stats })
}

/// `−(x + score)` at RK stage `stage` of step `m`; the midpoint stages use
/// the mean of the scores at both ends of the step.
fn velocity<S: ScoreField + ?Sized>(
    field: &S,
    m: usize,
    stage: usize,
    x: &[f64],
    out: &mut [f64],
    s_a: &mut [f64],
    s_b: &mut [f64],
) -> Result<usize> {
    let floored = match stage {
        0 => field.scores(m, x, s_a)?,
        3 => field.scores(m + 1, x, s_a)?,
        _ => {
            let f = field.scores(m, x, s_a)? + field.scores(m + 1, x, s_b)?;
            for (a, b) in s_a.iter_mut().zip(s_b.iter()) {
                *a = 0.5 * (*a + b);
            }
            f
        }
    };
    for ((o, &xi), &s) in out.iter_mut().zip(x).zip(s_a.iter()) {
        *o = -(xi + s);
    }
    Ok(floored)
}

/// `buf = start + step · vel`. Non-finite entries are reset to the start so
/// the batch stays evaluable, and their velocity is poisoned so the point
/// is dropped at the end of the step.
fn stage_state(buf: &mut Vec<f64>, start: &[f64], vel: &mut [f64], step: f64) {
    buf.clear();
    for (&x, v) in start.iter().zip(vel.iter_mut()) {
        let s = x + step * *v;
        if s.is_finite() {
            buf.push(s);
        } else {
            buf.push(x);
            *v = f64::NAN;
        }
    }
}

fn clamp_to(v: &mut [f64], lo: f64, hi: f64) -> usize {
    let mut count = 0;
    for x in v.iter_mut() {
        if *x < lo || *x > hi {
            count += 1;
            *x = x.clamp(lo, hi);
        }
    }
    count
}

/// Largest distance of a path from the chord between its end points,
/// relative to the chord length; zero for straight paths.
pub fn straightness_diagnostic(paths: &[FlowPath]) -> Vec<f64> {
    paths.iter().map(straightness).collect()
}

fn straightness(path: &FlowPath) -> f64 {
    let (Some(first), Some(last)) = (path.states.first(), path.states.last()) else {
        return 0.0;
    };
    let chord: Vec<f64> = last.iter().zip(first).map(|(a, b)| a - b).collect();
    let len2: f64 = chord.iter().map(|v| v * v).sum();
    if len2 == 0.0 {
        return 0.0;
    }
    let len = len2.sqrt();
    path.states
        .iter()
        .map(|s| {
            let rel: Vec<f64> = s.iter().zip(first).map(|(a, b)| a - b).collect();
            let along: f64 = rel.iter().zip(&chord).map(|(a, c)| a * c).sum::<f64>() / len2;
            let perp2: f64 = rel
                .iter()
                .zip(&chord)
                .map(|(r, c)| {
                    let e = r - along * c;
                    e * e
                })
                .sum();
            perp2.sqrt() / len
        })
        .fold(0.0, f64::max)
}
