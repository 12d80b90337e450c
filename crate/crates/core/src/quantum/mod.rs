//! Finite-ε quantum dynamics of `iε∂_tψ = −(ε²/2)Δψ + M(x)ψ` on a periodic
//! grid, with the diagnostics whose ε → 0 limits are the Wigner measures:
//! mode masses, discrete Wigner functions and two-scale profiles.

mod propagate;
mod transfer;
mod two_scale;
mod wavefunction;
mod wigner;

pub use propagate::{propagate, simulate, ModeMassSeries, Propagator, ALIASING_BAND, ALIASING_LIMIT};
pub use transfer::{predicted_plus_mass, transfer_experiment, TransferConfig, TransferRow};
pub use two_scale::{two_scale_profile, TwoScaleProfile};
pub use wavefunction::{coherent_state, gaussian_state, mode_masses, polarization_vector, Wavefunction};
pub use wigner::{wigner_transform, WignerData};
