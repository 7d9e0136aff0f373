//! Finite-difference reference solvers and their Monte Carlo ensembles.

mod diffusion;
mod ensemble;
mod poisson;

pub use diffusion::{fd_diffusion_1d, fd_steady_diffusion_1d, solve_tridiagonal, Grid1D, SpaceTimeSolution};
pub use ensemble::{mc_ensemble, solve_member, EnsembleRun, OracleConfig};
pub use poisson::{fd_poisson_2d, Grid2D, GridSolution};

/// Relative residual reached by every 2D solve.
pub const CG_TOLERANCE: f64 = 1e-12;
