//! Experiment harness around `fpeot-core`: configuration, the end-to-end
//! pipeline over random densities, Gaussian oracle checks, trajectory dumps
//! and the file formats they use.

pub mod config;
mod error;
pub mod harness;
pub mod io;

pub use config::{ExperimentConfig, Family, Preset, Tolerances};
pub use error::{HarnessError, Result};
pub use harness::{
    dump_trajectories, gaussian_check, run_density, run_suite, run_suite_with, DensityReport, GaussianCheck,
    RunArtifacts, SuiteSummary,
};
