//! Experiment configuration, presets and validation.
//!
//! A configuration is resolved in layers: defaults, then an optional JSON
//! file, then a preset, then individual command-line flags. The resolved
//! value is echoed into every report.

use std::path::{Path, PathBuf};

use fpeot_core::density::{CertifyOptions, MixtureLaw};
use fpeot_core::fpe::FpeOptions;
use fpeot_core::tt::CrossOptions;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Uniform mixtures of quartic-exponential components (`d ≤ 3`).
    QuarticMixture,
    /// Rank-2 positive random train times the standard normal.
    TtRandom,
    /// Random Gaussians, checked against the closed-form solution.
    Gaussian,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Self::QuarticMixture => "quartic-mixture",
            Self::TtRandom => "tt-random",
            Self::Gaussian => "gaussian",
        }
    }
}

/// The three `(d, N, M)` settings of the synthetic benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    D2,
    D3,
    D7,
}

impl Preset {
    /// `(d, N, M, family)`.
    pub fn values(self) -> (usize, usize, usize, Family) {
        match self {
            Self::D2 => (2, 250, 250, Family::QuarticMixture),
            Self::D3 => (3, 100, 100, Family::QuarticMixture),
            Self::D7 => (7, 50, 50, Family::TtRandom),
        }
    }

    pub fn apply(self, config: &mut ExperimentConfig) {
        let (d, n, m, family) = self.values();
        config.dim = d;
        config.grid = n;
        config.steps = m;
        config.family = family;
    }
}

/// Numerical tolerances of the pipeline stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// TT-cross tolerance when a density function is put on the grid.
    pub cross_tol: f64,
    pub cross_max_rank: usize,
    /// Rounding tolerance after every solver step.
    pub round_tol: f64,
    pub max_rank: usize,
    /// Solver sub-steps per time step; `None` bounds the sub-step length by
    /// `max_substep` instead.
    pub substeps: Option<usize>,
    pub max_substep: f64,
    /// Largest admissible fraction of failed densities in a suite.
    pub failure_budget: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let fpe = FpeOptions::default();
        let cert = CertifyOptions::default();
        Self {
            cross_tol: cert.cross.tol,
            cross_max_rank: cert.cross.max_rank,
            round_tol: fpe.round_tol,
            max_rank: fpe.max_rank,
            substeps: fpe.substeps,
            max_substep: fpe.max_substep,
            failure_budget: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dim: usize,
    /// Chebyshev nodes per mode, `N`.
    pub grid: usize,
    /// Time steps, `M`.
    pub steps: usize,
    pub t_max: f64,
    #[serde(rename = "box")]
    pub bounds: [f64; 2],
    pub samples: usize,
    pub densities: usize,
    pub family: Family,
    /// Density `i` uses seed `seed + i`.
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    pub tolerances: Tolerances,
    pub mixture_law: MixtureLaw,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut config = Self {
            dim: 0,
            grid: 0,
            steps: 0,
            t_max: 5.0,
            bounds: [-8.0, 8.0],
            samples: 500,
            densities: 100,
            family: Family::QuarticMixture,
            seed: 0,
            workers: 1,
            out: PathBuf::from("fpeot-out"),
            tolerances: Tolerances::default(),
            mixture_law: MixtureLaw::default(),
        };
        Preset::D2.apply(&mut config);
        config
    }
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_preset(preset: Preset) -> Self {
        let mut config = Self::default();
        preset.apply(&mut config);
        config
    }

    /// Reads a JSON configuration; missing fields take their defaults.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
        serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(invalid(format!("dim must be at least 2, got {}", self.dim)));
        }
        if self.grid < 8 {
            return Err(invalid(format!("grid must be at least 8, got {}", self.grid)));
        }
        if self.steps < 4 {
            return Err(invalid(format!("steps must be at least 4, got {}", self.steps)));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(invalid(format!("t_max must be positive, got {}", self.t_max)));
        }
        let [lo, hi] = self.bounds;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid(format!("box [{lo}, {hi}] is empty or unbounded")));
        }
        if self.samples == 0 || self.densities == 0 || self.workers == 0 {
            return Err(invalid("samples, densities and workers must be positive"));
        }
        if self.family == Family::QuarticMixture && self.dim > 3 {
            return Err(invalid(format!("quartic-mixture needs dim <= 3, got {}", self.dim)));
        }
        let t = &self.tolerances;
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !(unit(t.cross_tol) && unit(t.round_tol) && t.max_substep > 0.0) {
            return Err(invalid("tolerances must lie in (0, 1) and max_substep must be positive"));
        }
        if t.cross_max_rank == 0 || t.max_rank == 0 || t.substeps == Some(0) {
            return Err(invalid("ranks and sub-step counts must be positive"));
        }
        if !(0.0..=1.0).contains(&t.failure_budget) {
            return Err(invalid("failure_budget must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Seed of density `index`.
    pub fn density_seed(&self, index: usize) -> u64 {
        self.seed.wrapping_add(index as u64)
    }

    pub fn fpe_options(&self) -> FpeOptions {
        let t = &self.tolerances;
        FpeOptions {
            round_tol: t.round_tol,
            max_rank: t.max_rank,
            substeps: t.substeps,
            max_substep: t.max_substep,
            ..FpeOptions::default()
        }
    }

    pub fn certify_options(&self) -> CertifyOptions {
        let t = &self.tolerances;
        CertifyOptions {
            cross: CrossOptions { tol: t.cross_tol, max_rank: t.cross_max_rank, ..CrossOptions::default() },
        }
    }

    /// Failed densities tolerated before the suite counts as failed.
    pub fn allowed_failures(&self) -> usize {
        (self.tolerances.failure_budget * self.densities as f64 + 1e-9).floor() as usize
    }
}
