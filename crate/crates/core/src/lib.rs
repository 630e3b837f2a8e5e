//! Numerical core for checking whether the probability-flow encoder of the
//! Ornstein–Uhlenbeck (DDPM / VP-SDE) diffusion coincides with the quadratic
//! optimal-transport map to the standard normal.
//!
//! The pipeline is:
//!
//! 1. a density on the box `[a, b]^d` is stored as a tensor train over a
//!    tensor-product Chebyshev–Lobatto grid ([`tt`], [`cheb`]);
//! 2. `∂p/∂t = ∇·(x p) + ∇²p` is integrated with Strang splitting ([`fpe`]);
//! 3. samples of `p₀` ([`flow::sample_tt`]) are carried along
//!    `dx/dt = −(x + ∇ log p_t(x))` with RK4 ([`flow::flow_integrate`]);
//! 4. the identity pairing of start and end points is compared against the
//!    exact assignment optimum ([`transport`]).
//!
//! [`gaussian`] holds the closed-form Gaussian solution used as an oracle and
//! [`density`] generates the random test densities.
//!
//! The crate is `no_std` and only needs `alloc`; file formats, timing and the
//! command line live in the companion `fpeot` crate.

#![no_std]

extern crate alloc;

pub mod cheb;
pub mod density;
mod error;
pub mod flow;
pub mod fpe;
pub mod gaussian;
pub mod linalg;
pub mod transport;
pub mod tt;

pub use cheb::ChebGrid;
pub use error::{Error, Result};
pub use flow::{FlowPath, PointCloud};
pub use fpe::DensityTrajectory;
pub use gaussian::GaussianSpec;
pub use transport::{Timings, TransportReport};
pub use tt::{DenseTensor, TtTensor};
