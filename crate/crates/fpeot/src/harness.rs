//! The experiment pipeline and its reports.
//!
//! One run takes density `i` through generation, certification, the
//! Fokker–Planck solve, sampling, the probability-flow transport and the
//! assignment comparison. A suite runs many densities on a pool of worker
//! threads and aggregates the excess costs.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use fpeot_core::density::{
    gen_gaussian_spec, gen_quartic_mixture_with, normalize_and_certify, tt_random_factor, CertifiedDensity,
    DensitySource, MixtureSpec,
};
use fpeot_core::flow::{flow_integrate, sample_tt, straightness_diagnostic, FlowOutcome};
use fpeot_core::fpe::fpe_solve;
use fpeot_core::transport::{compare, Timings, TransportReport};
use fpeot_core::{ChebGrid, DensityTrajectory, GaussianSpec, PointCloud};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Family};
use crate::error::{HarnessError, Result};
use crate::io;

/// Sampler streams are offset from the density seed so the two never share
/// random numbers.
const SAMPLE_STREAM: u64 = 0x5a3d_1e5e_ed0f;
/// Tolerance of the Gaussian grid densities built by cross.
const GAUSSIAN_GRID_TOL: f64 = 1e-12;

/// How the initial density was put on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationInfo {
    pub rescales: usize,
    pub scale: f64,
    pub boundary_ratio: f64,
    pub exact_ratio: bool,
    pub cross_error: Option<f64>,
    pub rank_capped: bool,
    pub ranks: Vec<usize>,
    /// Present for the quartic-mixture family; replays the density.
    pub mixture: Option<MixtureSpec>,
    /// Present for the Gaussian family.
    pub gaussian: Option<GaussianSpec>,
}

/// Summary of the solver diagnostics over all steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverInfo {
    pub substeps: usize,
    pub max_rank: usize,
    /// Largest deviation of the pre-normalisation mass from 1.
    pub max_mass_defect: f64,
    /// Smallest node value over the peak across all steps, when scanned.
    pub min_ratio: Option<f64>,
    pub cross_capped: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowInfo {
    pub clamped: usize,
    pub floored: usize,
    pub failed: Vec<usize>,
}

/// Everything recorded about one density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub config: ExperimentConfig,
    pub index: usize,
    pub seed: u64,
    pub generation: GenerationInfo,
    pub solver: SolverInfo,
    pub flow: FlowInfo,
    pub transport: TransportReport,
    /// Gaussian family: largest coordinate error of `X₁` against the exact
    /// finite-time map.
    pub map_error: Option<f64>,
}

/// A finished run with the data needed for plots.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub trajectory: DensityTrajectory,
    pub x0: PointCloud,
    pub flow: FlowOutcome,
    pub report: DensityReport,
}

fn certify(config: &ExperimentConfig, grid: &ChebGrid, seed: u64) -> Result<(CertifiedDensity, GenerationInfo)> {
    let opts = config.certify_options();
    let (cert, mixture, gaussian) = match config.family {
        Family::QuarticMixture => {
            let spec = gen_quartic_mixture_with(config.dim, seed, &config.mixture_law)?;
            let f = |x: &[f64]| spec.density(x);
            (normalize_and_certify(DensitySource::Function(&f), grid, &opts)?, Some(spec), None)
        }
        Family::TtRandom => {
            let build = |c: f64| tt_random_factor(grid, seed, c);
            (normalize_and_certify(DensitySource::Builder(&build), grid, &opts)?, None, None)
        }
        Family::Gaussian => {
            let spec = gen_gaussian_spec(config.dim, seed)?;
            let t = spec.grid_density(grid, 0.0, GAUSSIAN_GRID_TOL)?;
            (normalize_and_certify(DensitySource::Tensor(&t), grid, &opts)?, None, Some(spec))
        }
    };
    let info = GenerationInfo {
        rescales: cert.rescales,
        scale: cert.scale,
        boundary_ratio: cert.boundary_ratio,
        exact_ratio: cert.exact_ratio,
        cross_error: cert.cross_error,
        rank_capped: cert.rank_capped,
        ranks: cert.tensor.ranks().to_vec(),
        mixture,
        gaussian,
    };
    Ok((cert, info))
}

fn solver_info(traj: &DensityTrajectory) -> SolverInfo {
    let diags = traj.diagnostics();
    SolverInfo {
        substeps: traj.substeps(),
        max_rank: diags.iter().map(|d| d.max_rank).max().unwrap_or(0),
        max_mass_defect: diags.iter().skip(1).map(|d| (d.mass - 1.0).abs()).fold(0.0, f64::max),
        min_ratio: diags.iter().filter_map(|d| d.min_ratio).reduce(f64::min),
        cross_capped: diags.iter().any(|d| d.cross_capped),
    }
}

fn max_map_error(spec: &GaussianSpec, t: f64, x0: &PointCloud, x1: &PointCloud) -> f64 {
    (0..x0.n())
        .map(|i| {
            let want = spec.finite_time_map(x0.point(i), t);
            x1.point(i).iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Samples `traj` at `t = 0`, transports the samples and compares pairings.
pub fn transport_samples(
    traj: &DensityTrajectory,
    samples: usize,
    seed: u64,
) -> Result<(PointCloud, FlowOutcome, TransportReport, [f64; 3])> {
    let t = Instant::now();
    let x0 = sample_tt(traj.snapshot(0), traj.grid(), samples, seed ^ SAMPLE_STREAM)?;
    let sample_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let flow = flow_integrate(traj, &x0)?;
    let flow_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let failed = &flow.stats.failed;
    let report = compare(&x0.without(failed), &flow.x1.without(failed), failed.len())?;
    Ok((x0, flow, report, [sample_s, flow_s, t.elapsed().as_secs_f64()]))
}

/// Runs the whole pipeline for density `index` of `config`.
pub fn run_density(config: &ExperimentConfig, index: usize) -> Result<RunArtifacts> {
    config.validate()?;
    let start = Instant::now();
    let seed = config.density_seed(index);
    let grid = ChebGrid::new(config.dim, config.grid, config.bounds[0], config.bounds[1])?;

    let (cert, generation) = certify(config, &grid, seed)?;
    let generate_s = start.elapsed().as_secs_f64();

    let t = Instant::now();
    let trajectory = fpe_solve(&cert.tensor, &grid, config.steps, config.t_max, &config.fpe_options())?;
    let fpe_s = t.elapsed().as_secs_f64();

    let (x0, flow, mut transport, [sample_s, flow_s, transport_s]) =
        transport_samples(&trajectory, config.samples, seed)?;
    transport.timings =
        Timings { generate_s, fpe_s, sample_s, flow_s, transport_s, total_s: start.elapsed().as_secs_f64() };

    let map_error = generation.gaussian.as_ref().map(|spec| {
        let failed = &flow.stats.failed;
        max_map_error(spec, config.t_max, &x0.without(failed), &flow.x1.without(failed))
    });
    let report = DensityReport {
        config: config.clone(),
        index,
        seed,
        generation,
        solver: solver_info(&trajectory),
        flow: FlowInfo { clamped: flow.stats.clamped, floored: flow.stats.floored, failed: flow.stats.failed.clone() },
        transport,
        map_error,
    };
    Ok(RunArtifacts { trajectory, x0, flow, report })
}

/// Per-density line of the suite summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub index: usize,
    pub seed: u64,
    pub epsilon_rel: f64,
    pub identity_fraction: f64,
    pub n: usize,
    pub excluded: usize,
    pub map_error: Option<f64>,
    pub timings: Timings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRun {
    pub index: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub config: ExperimentConfig,
    pub completed: usize,
    pub failed: Vec<FailedRun>,
    pub max_epsilon_rel: Option<f64>,
    pub median_epsilon_rel: Option<f64>,
    pub min_epsilon_rel: Option<f64>,
    pub min_identity_fraction: Option<f64>,
    pub max_map_error: Option<f64>,
    pub runs: Vec<RunSummary>,
    /// Mean per-density wall time.
    pub mean_total_s: f64,
    pub wall_s: f64,
}

impl SuiteSummary {
    /// Copy with every wall-clock field zeroed; two runs of one
    /// configuration agree exactly on this.
    pub fn without_timings(&self) -> Self {
        let mut s = self.clone();
        s.mean_total_s = 0.0;
        s.wall_s = 0.0;
        for r in &mut s.runs {
            r.timings = Timings::default();
        }
        s
    }

    pub fn within_budget(&self) -> bool {
        self.failed.len() <= self.config.allowed_failures()
    }
}

fn median(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some(0.5 * (sorted[n / 2 - 1] + sorted[n / 2])),
    }
}

/// Outcome of one density in a suite, as seen by a progress callback.
pub enum Progress<'a> {
    Done(&'a DensityReport),
    Failed(&'a FailedRun),
}

/// Runs every density of `config` and writes `reports/density_%04d.json`
/// plus `summary.json` under `config.out`. Fails when more densities fail
/// than the budget allows; the summary is written either way.
pub fn run_suite(config: &ExperimentConfig) -> Result<SuiteSummary> {
    run_suite_with(config, |_| {})
}

pub fn run_suite_with(config: &ExperimentConfig, progress: impl Fn(Progress<'_>) + Sync) -> Result<SuiteSummary> {
    config.validate()?;
    let start = Instant::now();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<std::result::Result<RunSummary, FailedRun>>>> =
        Mutex::new(vec![None; config.densities]);
    let io_error: Mutex<Option<HarnessError>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..config.workers.min(config.densities) {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= config.densities {
                    break;
                }
                let seed = config.density_seed(index);
                let outcome = match run_density(config, index) {
                    Ok(run) => {
                        let r = &run.report;
                        if let Err(e) = io::write_json(&io::density_report_path(&config.out, index), r) {
                            io_error.lock().expect("no panics while locked").get_or_insert(e);
                        }
                        progress(Progress::Done(r));
                        Ok(RunSummary {
                            index,
                            seed,
                            epsilon_rel: r.transport.epsilon_rel,
                            identity_fraction: r.transport.identity_fraction,
                            n: r.transport.n,
                            excluded: r.transport.excluded,
                            map_error: r.map_error,
                            timings: r.transport.timings.clone(),
                        })
                    }
                    Err(e) => {
                        let failed = FailedRun { index, seed, error: e.to_string() };
                        progress(Progress::Failed(&failed));
                        Err(failed)
                    }
                };
                slots.lock().expect("no panics while locked")[index] = Some(outcome);
            });
        }
    });
    if let Some(e) = io_error.into_inner().expect("workers joined") {
        return Err(e);
    }

    let mut runs = Vec::new();
    let mut failed = Vec::new();
    for slot in slots.into_inner().expect("workers joined").into_iter().flatten() {
        match slot {
            Ok(r) => runs.push(r),
            Err(f) => failed.push(f),
        }
    }
    let mut eps: Vec<f64> = runs.iter().map(|r| r.epsilon_rel).collect();
    eps.sort_by(f64::total_cmp);
    let summary = SuiteSummary {
        config: config.clone(),
        completed: runs.len(),
        failed,
        max_epsilon_rel: eps.last().copied(),
        median_epsilon_rel: median(&eps),
        min_epsilon_rel: eps.first().copied(),
        min_identity_fraction: runs.iter().map(|r| r.identity_fraction).reduce(f64::min),
        max_map_error: runs.iter().filter_map(|r| r.map_error).reduce(f64::max),
        mean_total_s: if runs.is_empty() {
            0.0
        } else {
            runs.iter().map(|r| r.timings.total_s).sum::<f64>() / runs.len() as f64
        },
        runs,
        wall_s: start.elapsed().as_secs_f64(),
    };
    io::write_json(&config.out.join(io::SUMMARY), &summary)?;
    if !summary.within_budget() {
        return Err(HarnessError::SuiteFailed {
            failed: summary.failed.len(),
            total: config.densities,
            allowed: config.allowed_failures(),
        });
    }
    Ok(summary)
}

/// Numeric pipeline against the closed-form Gaussian solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianCheck {
    pub config: ExperimentConfig,
    pub spec: GaussianSpec,
    /// Relative L² error of every snapshot against the exact density.
    pub density_l2: Vec<f64>,
    pub max_density_l2: f64,
    /// Largest Euclidean distance of a flow endpoint from the exact
    /// finite-time map.
    pub max_map_error: f64,
    /// Largest Euclidean distance from the limiting map `Σ₀^{−1/2}(x − a₀)`.
    pub max_limit_error: f64,
    /// `e^{−t_max}(‖a₀‖ + ‖Σ₀ − I‖₂)`. Bounds the distance between the
    /// finite-time and limiting maps at every `x` with
    /// `‖Σ₀^{−1/2}(x − a₀)‖ ≤ e^{t_max}`.
    pub limit_gap: f64,
    pub transport: TransportReport,
    pub flow: FlowInfo,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Runs the pipeline on `spec` with the grid, steps and sample count of
/// `config` and measures it against the exact solution.
pub fn gaussian_check(config: &ExperimentConfig, spec: &GaussianSpec) -> Result<GaussianCheck> {
    config.validate()?;
    if spec.d() != config.dim {
        return Err(HarnessError::Config(format!("{}-d Gaussian for dim {}", spec.d(), config.dim)));
    }
    let start = Instant::now();
    let grid = ChebGrid::new(config.dim, config.grid, config.bounds[0], config.bounds[1])?;
    let p0 = spec.grid_density(&grid, 0.0, GAUSSIAN_GRID_TOL)?;
    let fpe_start = Instant::now();
    let traj = fpe_solve(&p0, &grid, config.steps, config.t_max, &config.fpe_options())?;
    let fpe_s = fpe_start.elapsed().as_secs_f64();
    let density_l2 = (0..=traj.steps())
        .map(|m| {
            let exact = spec.grid_density(&grid, traj.time(m), GAUSSIAN_GRID_TOL)?;
            Ok(grid.relative_l2(traj.snapshot(m), &exact)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (x0, flow, mut transport, [sample_s, flow_s, transport_s]) =
        transport_samples(&traj, config.samples, config.seed)?;
    transport.timings =
        Timings { generate_s: 0.0, fpe_s, sample_s, flow_s, transport_s, total_s: start.elapsed().as_secs_f64() };
    let failed = &flow.stats.failed;
    let (x0, x1) = (x0.without(failed), flow.x1.without(failed));
    let mut max_map_error = 0.0f64;
    let mut max_limit_error = 0.0f64;
    for i in 0..x0.n() {
        max_map_error = max_map_error.max(euclid(x1.point(i), &spec.finite_time_map(x0.point(i), config.t_max)));
        max_limit_error = max_limit_error.max(euclid(x1.point(i), &spec.encoder_map(x0.point(i))));
    }
    let d = config.dim;
    let defect = spec.sigma0() - nalgebra::DMatrix::<f64>::identity(d, d);
    let mean_norm = spec.a0().iter().map(|v| v * v).sum::<f64>().sqrt();
    let limit_gap = (-config.t_max).exp() * (mean_norm + defect.symmetric_eigenvalues().amax());
    Ok(GaussianCheck {
        config: config.clone(),
        spec: spec.clone(),
        max_density_l2: density_l2.iter().copied().fold(0.0, f64::max),
        density_l2,
        max_map_error,
        max_limit_error,
        limit_gap,
        transport,
        flow: FlowInfo { clamped: flow.stats.clamped, floored: flow.stats.floored, failed: flow.stats.failed.clone() },
    })
}

/// Ids and straightness values of a trajectory dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDump {
    pub ids: Vec<usize>,
    pub straightness: Vec<f64>,
}

/// Writes `trajectories.csv` and `straightness.csv` into `dir` for
/// `n_paths` ids drawn without replacement with `seed`, in increasing id
/// order.
pub fn dump_trajectories(flow: &FlowOutcome, n_paths: usize, seed: u64, dir: &Path) -> Result<TrajectoryDump> {
    if flow.paths.is_empty() {
        return Err(HarnessError::MissingRunData("the run has no flow paths".into()));
    }
    if n_paths > flow.paths.len() {
        return Err(HarnessError::MissingRunData(format!(
            "{n_paths} paths requested, the run has {}",
            flow.paths.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, flow.paths.len(), n_paths).into_vec();
    picked.sort_unstable();
    let paths: Vec<_> = picked.iter().map(|&i| flow.paths[i].clone()).collect();
    let straightness = straightness_diagnostic(&paths);
    let ids: Vec<usize> = paths.iter().map(|p| p.id).collect();
    io::write_paths_csv(&dir.join("trajectories.csv"), flow.x1.d(), &paths)?;
    io::write_straightness_csv(&dir.join("straightness.csv"), &ids, &straightness)?;
    Ok(TrajectoryDump { ids, straightness })
}

/// One row of the benchmark table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub d: usize,
    pub grid: usize,
    pub steps: usize,
    pub family: String,
    pub densities: usize,
    pub completed: usize,
    pub max_epsilon_rel: Option<f64>,
    pub median_epsilon_rel: Option<f64>,
    pub mean_total_s: f64,
}

pub fn table_rows(summaries: &[SuiteSummary]) -> Vec<TableRow> {
    summaries
        .iter()
        .map(|s| TableRow {
            d: s.config.dim,
            grid: s.config.grid,
            steps: s.config.steps,
            family: s.config.family.name().to_string(),
            densities: s.config.densities,
            completed: s.completed,
            max_epsilon_rel: s.max_epsilon_rel,
            median_epsilon_rel: s.median_epsilon_rel,
            mean_total_s: s.mean_total_s,
        })
        .collect()
}

fn sci(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.2e}"))
}

pub fn table_csv(rows: &[TableRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Format { what: "table", msg: e.to_string() })?;
    String::from_utf8(bytes).map_err(|e| HarnessError::Format { what: "table", msg: e.to_string() })
}

pub fn table_markdown(rows: &[TableRow]) -> String {
    let mut out = String::from(
        "| d | N | M | family | densities | completed | max ε_rel | median ε_rel | mean time (s) |\n\
         |---|---|---|---|---|---|---|---|---|\n",
    );
    for r in rows {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} | {} | {:.1} |\n",
            r.d,
            r.grid,
            r.steps,
            r.family,
            r.densities,
            r.completed,
            sci(r.max_epsilon_rel),
            sci(r.median_epsilon_rel),
            r.mean_total_s
        ));
    }
    out
}
