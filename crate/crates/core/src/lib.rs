//! State-dependent Riccati equation (SDRE) control and estimation.
//!
//! The crate pairs pointwise SDRE state feedback with an SDRE Kalman filter
//! and benchmarks it against a continuous-time EKF and a bootstrap particle
//! filter on a damped pendulum and a Van der Pol oscillator.
//!
//! * [`numerics`]: Riccati and Lyapunov solvers, rank tests, RK4.
//! * [`models`]: plants, SDC factorizations and Jacobians.
//! * [`control`]: the SDRE feedback law.
//! * [`estimators`]: SDRE-KF, EKF and particle filter.
//! * [`sim`]: closed-loop simulation and Monte-Carlo batches.

pub mod control;
pub mod estimators;
pub mod models;
pub mod numerics;
pub mod sim;
