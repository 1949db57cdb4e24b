//! Dense small-matrix numerical kernel.
//!
//! Everything here operates on [`nalgebra::DMatrix<f64>`] and is sized for
//! the handful of states used by the benchmark systems (n ≤ 8). Solvers that
//! would be O(n⁶) in general, such as the Kronecker Lyapunov solve, are fine
//! at that scale.

mod care;
mod linalg;
mod lyapunov;
mod ode;
mod rank;

pub use care::{solve_care, solve_filter_care, CareMethod, CareProblem, CareSolution};
pub use linalg::{
    asymmetry, covariance_sqrt, is_finite, min_symmetric_eigenvalue, spectral_abscissa, symmetrize,
};
pub use lyapunov::solve_lyapunov;
pub use ode::{jacobian_fd, rk4_step};
pub use rank::{controllability_rank, observability_rank};

use nalgebra::{DMatrix, DVector};

/// Dense real matrix.
pub type Mat = DMatrix<f64>;
/// Dense real column vector.
pub type Vector = DVector<f64>;

/// Default Frobenius residual tolerance for Riccati solves.
pub const DEFAULT_CARE_TOL: f64 = 1e-9;
/// Default relative singular-value cutoff for rank tests.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;
/// Default central-difference step for [`jacobian_fd`].
pub const DEFAULT_FD_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericsError {
    #[error(
        "Hamiltonian has {stable} stable eigenvalues, need {required}; pair is not stabilizable"
    )]
    NotStabilizable { stable: usize, required: usize },
    #[error("Riccati solve failed on both the invariant-subspace and Newton-Kleinman paths (residual {residual:.3e})")]
    SingularSubspace { residual: f64 },
    #[error("invalid weight matrix: {0}")]
    BadWeights(String),
    #[error("matrix is not Hurwitz (spectral abscissa {abscissa:.3e})")]
    NotHurwitz { abscissa: f64 },
    #[error("derivative evaluation produced a non-finite value")]
    NonFiniteDerivative,
    #[error("{0} did not converge")]
    NoConvergence(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}
