//! Finite-temperature retrieval in continuous dense associative memories.
//!
//! States and patterns live on the sphere `‖x‖² = N`, with `M = e^{αN}`
//! stored patterns. Two energies are supported: log-sum-exp (LSE, Gaussian
//! kernel, infinite support) and log-sum-ReLU (LSR, Epanechnikov kernel,
//! finite support). The crate provides
//!
//! * [`geometry`]: sphere states, random patterns and the alignment product,
//! * [`energy`]: numerically stable Hamiltonians,
//! * [`sampler`]: Metropolis–Hastings chains on the sphere,
//! * [`scan`]: schedules and grid scans over load `α` and temperature `T`,
//! * [`oracle`]: the single-basin Boltzmann prediction of the equilibrium
//!   alignment by one-dimensional quadrature,
//! * [`cli`]: the `damphase` command-line tool.

pub mod cli;
pub mod config;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod oracle;
pub mod rng;
pub mod sampler;
pub mod scan;

pub use energy::{EnergyValue, KernelKind, KernelSpec};
pub use error::{Error, Result};
pub use geometry::{AlignmentVector, PatternSet, SphereState};
pub use rng::SeedStream;
