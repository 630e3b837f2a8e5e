//! Fokker–Planck solver for `∂p/∂t = ∇·(x p) + ∇²p` on a Chebyshev grid in
//! tensor-train format.
//!
//! Each time step is a Strang splitting `e^{(h/2)V} e^{hW} e^{(h/2)V}` of the
//! heat flow `V` and the convection `W`. Both sub-flows act mode by mode, so
//! one split step is a Kronecker product of per-mode `N × N` propagators:
//!
//! * heat: `exp(τ D2)` on the interior nodes (homogeneous Dirichlet data,
//!   boundary rows frozen);
//! * convection: the exact characteristics solution `p(x) ↦ e^{dh} p(e^h x)`,
//!   which per mode is `e^h` times the barycentric interpolation matrix at the
//!   stretched nodes, with zero rows where `e^h x` leaves the box.
//!
//! A step of length `h` may be split into `s` equal sub-steps; the per-mode
//! propagator of the whole step is formed once and applied to every snapshot.

// Inherent float methods only exist when std is linked somewhere in the graph.
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use crate::cheb::{interp_eval, interp_value_and_grad, ChebGrid};
use crate::error::{invalid, Error, Result};
use crate::linalg::{expm, matrix_power};
use crate::tt::{cross, CrossOptions, TtTensor};

/// How the convection sub-step is realised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum ConvectionMethod {
    /// Per-mode interpolation matrices; exact for the polynomial interpolant.
    #[default]
    Matrix,
    /// TT-cross over the stretched interpolant, one cross per sub-step.
    Cross,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct FpeOptions {
    /// Relative rounding tolerance applied after every step.
    pub round_tol: f64,
    pub max_rank: usize,
    /// Sub-steps per time step; `None` picks the smallest count whose
    /// sub-step does not exceed `max_substep`.
    pub substeps: Option<usize>,
    pub max_substep: f64,
    pub convection: ConvectionMethod,
    /// Tolerance of the cross-based convection.
    pub cross_tol: f64,
}

impl Default for FpeOptions {
    fn default() -> Self {
        Self {
            round_tol: 1e-10,
            max_rank: 50,
            substeps: None,
            max_substep: 2.5e-4,
            convection: ConvectionMethod::Matrix,
            cross_tol: 1e-10,
        }
    }
}

impl FpeOptions {
    pub fn substeps_for(&self, h: f64) -> usize {
        match self.substeps {
            Some(s) => s.max(1),
            None => {
                let s = (h / self.max_substep).ceil();
                if s.is_finite() && s >= 1.0 {
                    s as usize
                } else {
                    1
                }
            }
        }
    }
}

/// Per-step bookkeeping of a solve.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepDiagnostics {
    pub step: usize,
    pub max_rank: usize,
    /// Integral before renormalisation.
    pub mass: f64,
    /// Smallest node value over the largest one, when the grid is small
    /// enough to scan densely.
    pub min_ratio: Option<f64>,
    pub cross_capped: bool,
}

/// Density snapshots `p(·, m h)`, `m = 0..=M`, each with unit integral.
#[derive(Debug, Clone)]
pub struct DensityTrajectory {
    grid: ChebGrid,
    h: f64,
    t_max: f64,
    snapshots: Vec<TtTensor>,
    peaks: Vec<f64>,
    diagnostics: Vec<StepDiagnostics>,
    substeps: usize,
}

/// Grids up to this many nodes are scanned densely for peaks and minima.
const DENSE_SCAN_LIMIT: usize = 4_000_000;

fn dense_scan_size(grid: &ChebGrid) -> Option<usize> {
    let mut total = 1usize;
    for _ in 0..grid.d() {
        total = total.checked_mul(grid.n())?;
    }
    (total <= DENSE_SCAN_LIMIT).then_some(total)
}

/// Largest node value and the ratio of the smallest to it.
fn peak_and_min_ratio(grid: &ChebGrid, p: &TtTensor) -> (f64, Option<f64>) {
    if dense_scan_size(grid).is_some() {
        let dense = p.to_dense();
        let max = dense.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = dense.data().iter().copied().fold(f64::INFINITY, f64::min);
        let ratio = if max > 0.0 { min / max } else { f64::NAN };
        (max, Some(ratio))
    } else {
        (p.max_abs_estimate(), None)
    }
}

impl DensityTrajectory {
    /// Wraps precomputed snapshots, e.g. ones read back from disk.
    pub fn from_snapshots(
        grid: ChebGrid,
        t_max: f64,
        snapshots: Vec<TtTensor>,
        diagnostics: Vec<StepDiagnostics>,
        substeps: usize,
    ) -> Result<Self> {
        if snapshots.len() < 2 {
            return Err(invalid("a trajectory needs at least two snapshots"));
        }
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(invalid(format!("t_max must be positive, got {t_max}")));
        }
        for s in &snapshots {
            grid.check_tensor(s)?;
        }
        let steps = snapshots.len() - 1;
        let peaks = snapshots.iter().map(|s| peak_and_min_ratio(&grid, s).0).collect();
        Ok(Self { grid, h: t_max / steps as f64, t_max, snapshots, peaks, diagnostics, substeps })
    }

    pub fn grid(&self) -> &ChebGrid {
        &self.grid
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    /// Number of time steps `M`.
    pub fn steps(&self) -> usize {
        self.snapshots.len() - 1
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn time(&self, m: usize) -> f64 {
        if m == self.steps() {
            self.t_max
        } else {
            m as f64 * self.h
        }
    }

    pub fn snapshots(&self) -> &[TtTensor] {
        &self.snapshots
    }

    pub fn snapshot(&self, m: usize) -> &TtTensor {
        &self.snapshots[m]
    }

    pub fn diagnostics(&self) -> &[StepDiagnostics] {
        &self.diagnostics
    }

    /// Division floor for the score at step `m`.
    pub fn floor(&self, m: usize) -> f64 {
        1e-12 * self.peaks[m]
    }

    /// `∇ log p_m(x)`; the density is floored at `1e-12` of its peak.
    pub fn score_at(&self, m: usize, x: &[f64]) -> Result<Vec<f64>> {
        score_at(self, m, x)
    }
}

/// `∇ log p` at `x` for snapshot `m` of a trajectory.
pub fn score_at(traj: &DensityTrajectory, m: usize, x: &[f64]) -> Result<Vec<f64>> {
    if m > traj.steps() {
        return Err(invalid(format!("step {m} beyond the {} computed", traj.steps())));
    }
    let (v, g) = interp_value_and_grad(&traj.snapshots[m], &traj.grid, x)?;
    let denom = v.max(traj.floor(m));
    Ok(g.into_iter().map(|gi| gi / denom).collect())
}

/// `exp(τ D2)` restricted to the interior nodes, identity on the boundary.
pub fn heat_propagator(grid: &ChebGrid, tau: f64) -> Result<DMatrix<f64>> {
    let n = grid.n();
    let mut out = DMatrix::identity(n, n);
    if n <= 2 || tau == 0.0 {
        return Ok(out);
    }
    let inner = grid.d2().view((1, 1), (n - 2, n - 2)).into_owned() * tau;
    let e = expm(&inner)?;
    out.view_mut((1, 1), (n - 2, n - 2)).copy_from(&e);
    Ok(out)
}

/// Exact per-mode convection propagator over time `h`.
pub fn convection_propagator(grid: &ChebGrid, h: f64) -> DMatrix<f64> {
    let eh = h.exp();
    let stretched: Vec<f64> = grid.nodes().iter().map(|x| eh * x).collect();
    grid.interp_matrix(&stretched) * eh
}

/// Per-mode propagator of one full step of length `h` made of `substeps`
/// Strang sub-steps.
pub fn step_propagator(grid: &ChebGrid, h: f64, substeps: usize) -> Result<DMatrix<f64>> {
    if !(h >= 0.0 && h.is_finite()) || substeps == 0 {
        return Err(invalid("step length must be non-negative and substeps positive"));
    }
    let hs = h / substeps as f64;
    let e = heat_propagator(grid, 0.5 * hs)?;
    let c = convection_propagator(grid, hs);
    let one = &e * c * &e;
    Ok(matrix_power(&one, substeps))
}

/// Heat flow over `h/2` along every mode.
pub fn diffusion_halfstep(p: &TtTensor, grid: &ChebGrid, h: f64) -> Result<TtTensor> {
    grid.check_tensor(p)?;
    if !(h >= 0.0) {
        return Err(invalid("step length must be non-negative"));
    }
    let e = heat_propagator(grid, 0.5 * h)?;
    p.apply_all_modes(&e)
}

/// Convection `p ↦ e^{dh} p(e^h x)` by per-mode interpolation matrices.
pub fn convection_step(p: &TtTensor, grid: &ChebGrid, h: f64) -> Result<TtTensor> {
    grid.check_tensor(p)?;
    if !(h >= 0.0) {
        return Err(invalid("step length must be non-negative"));
    }
    if h == 0.0 {
        return Ok(p.clone());
    }
    p.apply_all_modes(&convection_propagator(grid, h))
}

/// Convection by TT-cross over `idx ↦ e^{dh} p̃(e^h x_idx)`, with `p̃` the
/// interpolant and zero outside the box. Returns the new tensor and whether
/// the cross hit its rank cap.
pub fn convection_step_cross(p: &TtTensor, grid: &ChebGrid, h: f64, opts: &CrossOptions) -> Result<(TtTensor, bool)> {
    grid.check_tensor(p)?;
    if h == 0.0 {
        return Ok((p.clone(), false));
    }
    let eh = h.exp();
    let scale = (grid.d() as f64 * h).exp();
    let nodes = grid.nodes();
    let mut x = vec![0.0; grid.d()];
    let mut failure = None;
    let out = cross(
        |idx| {
            for (xi, &i) in x.iter_mut().zip(idx) {
                *xi = eh * nodes[i];
            }
            if !grid.contains(&x) {
                return 0.0;
            }
            match interp_eval(p, grid, &x) {
                Ok(v) => scale * v,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        &grid.mode_sizes(),
        opts,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((out.tensor, out.rank_capped))
}

/// Integrates the Fokker–Planck equation from `p0` over `[0, t_max]` in `m`
/// steps, renormalising every snapshot to unit mass.
pub fn fpe_solve(p0: &TtTensor, grid: &ChebGrid, m: usize, t_max: f64, opts: &FpeOptions) -> Result<DensityTrajectory> {
    grid.check_tensor(p0)?;
    if m == 0 {
        return Err(invalid("at least one time step is required"));
    }
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(invalid(format!("t_max must be positive, got {t_max}")));
    }
    let h = t_max / m as f64;
    let substeps = opts.substeps_for(h);

    let mass0 = grid.integrate(p0)?;
    if !(mass0 > 0.0) {
        return Err(Error::Numerical(format!("initial density has mass {mass0}")));
    }
    let first = p0.scale(1.0 / mass0);
    let (peak0, ratio0) = peak_and_min_ratio(grid, &first);
    let mut snapshots = Vec::with_capacity(m + 1);
    let mut peaks = Vec::with_capacity(m + 1);
    let mut diagnostics = Vec::with_capacity(m + 1);
    diagnostics.push(StepDiagnostics {
        step: 0,
        max_rank: first.max_rank(),
        mass: mass0,
        min_ratio: ratio0,
        cross_capped: false,
    });
    snapshots.push(first);
    peaks.push(peak0);

    let propagator = match opts.convection {
        ConvectionMethod::Matrix => Some(step_propagator(grid, h, substeps)?),
        ConvectionMethod::Cross => None,
    };
    let hs = h / substeps as f64;
    let half_heat = heat_propagator(grid, 0.5 * hs)?;
    let cross_opts = CrossOptions { tol: opts.cross_tol, max_rank: opts.max_rank, ..Default::default() };

    for step in 1..=m {
        let prev = &snapshots[step - 1];
        let mut capped = false;
        let next = match &propagator {
            Some(a) => prev.apply_all_modes(a)?,
            None => {
                let mut q = prev.clone();
                for _ in 0..substeps {
                    q = q.apply_all_modes(&half_heat)?;
                    let (c, cap) = convection_step_cross(&q, grid, hs, &cross_opts)?;
                    capped |= cap;
                    q = c.apply_all_modes(&half_heat)?;
                }
                q
            }
        };
        let next = next.round_capped(opts.round_tol, opts.max_rank)?;
        let mass = grid.integrate(&next)?;
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::Numerical(format!("mass {mass} after step {step}")));
        }
        let next = next.scale(1.0 / mass);
        let (peak, ratio) = peak_and_min_ratio(grid, &next);
        diagnostics.push(StepDiagnostics {
            step,
            max_rank: next.max_rank(),
            mass,
            min_ratio: ratio,
            cross_capped: capped,
        });
        snapshots.push(next);
        peaks.push(peak);
    }
    Ok(DensityTrajectory { grid: grid.clone(), h, t_max, snapshots, peaks, diagnostics, substeps })
}
