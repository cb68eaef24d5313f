//! Generalized Hamiltonian Monte Carlo (gHMC) laboratory.
//!
//! The kernel `P = D_eta V_delta^K` refreshes the velocity partially and then
//! runs `K` leapfrog steps without accept/reject. The crate provides
//!
//! * [`potentials`]: target potentials, the mean-field family, block norms
//!   `N3`/`N4`, the error weight `M` and the Lyapunov function `W`;
//! * [`integrator`]: the leapfrog map, its inverse, energy defects and
//!   Jacobian fields;
//! * [`sampler`]: parameters, refreshment and reproducible chains;
//! * [`gaussian_exact`]: exact law propagation for quadratic targets with
//!   closed-form KL, Fisher and modified entropies;
//! * [`bounds`]: the explicit convergence constants and bound curves;
//! * [`diagnostics`]: moments, slope fits, drift fits, 1D Wasserstein.
//!
//! All bound formulas assume `L = 1`; rescale with
//! [`potentials::rescale_to_unit_lipschitz`] first.

pub mod bounds;
pub mod diagnostics;
pub mod gaussian_exact;
pub mod integrator;
pub mod linalg;
pub mod potentials;
pub mod rng;
pub mod sampler;

pub use potentials::{PhasePoint, PotentialModel};
pub use sampler::GhmcParams;

/// Version string embedded in experiment artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
