//! State estimators: SDRE Kalman filter, continuous EKF and a bootstrap
//! particle filter.
//!
//! The Kalman-type filters treat `Qd` and `Rn` as continuous-time noise
//! intensities. Over one sample interval they integrate the model drift
//! (and, for the EKF, the covariance ODE) with RK4 under a frozen gain, then
//! apply the sampled innovation `K·dt·(y_k − C x̂⁻)` taken at the end of the
//! interval.

mod ekf;
mod pf;
mod sdre_kf;

pub use ekf::{ekf_step, ExtendedKalmanFilter};
pub use pf::{
    pf_init, pf_step, systematic_resample, ParticleFilter, ParticleSet, PfPropagation, PfStep,
};
pub use sdre_kf::{sdre_kf_step, SdreKalmanFilter, SdreKfStep};

use std::fmt;
use std::str::FromStr;

use crate::models::SystemModel;
use crate::numerics::{asymmetry, is_finite, min_symmetric_eigenvalue, Mat, NumericsError, Vector};

/// Entries beyond this magnitude mark an estimate as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimatorError {
    #[error("observability lost at the first filter step; no previous gain to reuse")]
    ObservabilityLoss,
    #[error("filter CARE failed: {0}")]
    CareFailure(NumericsError),
    #[error("estimate diverged (entry beyond 1e6 or non-finite)")]
    NonFiniteState,
    #[error("invalid covariance: {0}")]
    BadCovariance(NumericsError),
    #[error("estimator dimension mismatch: {0}")]
    DimensionMismatch(String),
}

impl From<NumericsError> for EstimatorError {
    fn from(e: NumericsError) -> Self {
        match e {
            NumericsError::NonFiniteDerivative => EstimatorError::NonFiniteState,
            other => EstimatorError::CareFailure(other),
        }
    }
}

/// Noise covariances assumed by a filter.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    /// Process disturbance intensity (PSD).
    pub qd: Mat,
    /// Measurement noise covariance (PD).
    pub rn: Mat,
}

impl NoiseConfig {
    pub fn new(qd: Mat, rn: Mat) -> Self {
        Self { qd, rn }
    }

    pub fn validate(&self, n: usize, p: usize) -> Result<(), EstimatorError> {
        if self.qd.shape() != (n, n) || self.rn.shape() != (p, p) {
            return Err(EstimatorError::DimensionMismatch(format!(
                "Qd is {:?} and Rn is {:?}, expected {n}x{n} and {p}x{p}",
                self.qd.shape(),
                self.rn.shape()
            )));
        }
        check_psd(&self.qd, "Qd", false)?;
        check_psd(&self.rn, "Rn", true)
    }

    pub(crate) fn rn_inverse(&self) -> Result<Mat, EstimatorError> {
        self.rn.clone().try_inverse().ok_or_else(|| {
            EstimatorError::BadCovariance(NumericsError::BadWeights("Rn is singular".into()))
        })
    }
}

pub(crate) fn check_psd(m: &Mat, name: &str, definite: bool) -> Result<(), EstimatorError> {
    let bad = |why: &str| {
        Err(EstimatorError::BadCovariance(NumericsError::BadWeights(
            format!("{name} {why}"),
        )))
    };
    if !is_finite(m) {
        return bad("has non-finite entries");
    }
    if asymmetry(m) > 1e-12 * (1.0 + m.amax()) {
        return bad("is not symmetric");
    }
    let floor = if definite { 1e-10 } else { -1e-10 };
    if min_symmetric_eigenvalue(m) < floor {
        return bad(if definite {
            "is not positive definite"
        } else {
            "is not positive semidefinite"
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub xhat: Vector,
    pub p: Mat,
}

impl KalmanState {
    pub fn new(xhat: Vector, p: Mat) -> Self {
        Self { xhat, p }
    }
}

pub(crate) fn diverged(x: &Vector) -> bool {
    x.iter()
        .any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    SdreKf,
    Ekf,
    Pf,
    /// No estimator: the controller is fed the true state.
    None,
}

impl EstimatorKind {
    pub const ALL_FILTERS: [EstimatorKind; 3] =
        [EstimatorKind::SdreKf, EstimatorKind::Ekf, EstimatorKind::Pf];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::SdreKf => "sdre-kf",
            EstimatorKind::Ekf => "ekf",
            EstimatorKind::Pf => "pf",
            EstimatorKind::None => "none",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::SdreKf => "SDRE-KF",
            EstimatorKind::Ekf => "EKF",
            EstimatorKind::Pf => "PF",
            EstimatorKind::None => "none",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "sdre-kf" | "sdrekf" => Ok(EstimatorKind::SdreKf),
            "ekf" => Ok(EstimatorKind::Ekf),
            "pf" => Ok(EstimatorKind::Pf),
            "none" => Ok(EstimatorKind::None),
            _ => Err(format!(
                "unknown estimator `{s}` (expected sdre-kf, ekf, pf or none)"
            )),
        }
    }
}

/// Per-step diagnostics reported by [`Estimator::step`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepReport {
    pub observability_loss: bool,
    pub weight_collapse: bool,
    /// `|Σwᵢ − 1|` after normalization (particle filter only).
    pub weight_sum_error: f64,
}

/// One running estimator instance.
#[derive(Debug, Clone)]
pub enum Estimator {
    SdreKf(SdreKalmanFilter),
    Ekf(ExtendedKalmanFilter),
    Pf(ParticleFilter),
}

impl Estimator {
    pub fn kind(&self) -> EstimatorKind {
        match self {
            Estimator::SdreKf(_) => EstimatorKind::SdreKf,
            Estimator::Ekf(_) => EstimatorKind::Ekf,
            Estimator::Pf(_) => EstimatorKind::Pf,
        }
    }

    pub fn estimate(&self) -> &Vector {
        match self {
            Estimator::SdreKf(f) => &f.state.xhat,
            Estimator::Ekf(f) => &f.state.xhat,
            Estimator::Pf(f) => &f.estimate,
        }
    }

    /// Covariance carried by the Kalman-type filters.
    pub fn covariance(&self) -> Option<&Mat> {
        match self {
            Estimator::SdreKf(f) => Some(&f.state.p),
            Estimator::Ekf(f) => Some(&f.state.p),
            Estimator::Pf(_) => None,
        }
    }

    pub fn step(
        &mut self,
        u: &Vector,
        y: &Vector,
        model: &dyn SystemModel,
        noise: &NoiseConfig,
        dt: f64,
    ) -> Result<StepReport, EstimatorError> {
        match self {
            Estimator::SdreKf(f) => f.step(u, y, model, noise, dt),
            Estimator::Ekf(f) => f.step(u, y, model, noise, dt),
            Estimator::Pf(f) => f.step(u, y, model, noise, dt),
        }
    }
}
