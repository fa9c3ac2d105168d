//! Exact ground truth on finite chains.

pub mod marginals;
pub mod naive;
pub mod spectral;

pub use marginals::{evolve_marginals, exact_finite_time_scgf, log_growth_rate, MarginalTrajectory};
pub use naive::{naive_scgf, NaiveEstimate};
pub use spectral::{solve_spectral, SpectralSolution};
