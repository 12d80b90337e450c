//! Simulation laboratory for semiclassical Schrödinger operators with
//! matrix-valued potentials that have codimension-one eigenvalue crossings.
//!
//! * [`model`]: potentials given by spectral data, and the built-in catalog.
//! * [`classical`]: per-mode Hamiltonian flows, nontrapping verdicts, contact
//!   order of a flow with a crossing hypersurface.
//! * [`quantum`]: split-step propagation, mode masses, discrete Wigner
//!   functions, two-scale concentration profiles, mode-transfer experiments.
//! * [`resolvent`]: weighted resolvent norms of the discretised operator and
//!   their scaling in ε.
//! * [`cli`]: scenario configuration, runner and emitters.

pub mod classical;
pub mod cli;
pub mod error;
pub mod exec;
pub mod grid;
pub mod model;
pub mod quantum;
pub mod resolvent;

pub use error::{Error, Result};
pub use exec::Exec;
pub use grid::SpatialGrid;
pub use model::PotentialModel;
