//! Pointwise SDRE state feedback.

use crate::models::SystemModel;
use crate::numerics::{
    controllability_rank, solve_care, CareProblem, Mat, NumericsError, Vector, DEFAULT_CARE_TOL,
    DEFAULT_RANK_TOL,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControlError {
    #[error("controller CARE failed: {0}")]
    CareFailure(#[from] NumericsError),
    #[error("controller dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    /// State weight (PSD).
    pub qw: Mat,
    /// Input weight (PD).
    pub rw: Mat,
    pub care_tol: f64,
    pub rank_tol: f64,
}

impl ControllerConfig {
    pub fn new(qw: Mat, rw: Mat) -> Self {
        Self {
            qw,
            rw,
            care_tol: DEFAULT_CARE_TOL,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }

    /// Checks weights and tolerances; the weight checks are the same ones
    /// the Riccati solver applies.
    pub fn validate(&self, n: usize, m: usize) -> Result<(), ControlError> {
        if self.qw.shape() != (n, n) || self.rw.shape() != (m, m) {
            return Err(ControlError::DimensionMismatch(format!(
                "Qw is {:?} and Rw is {:?} for a model with {n} states and {m} inputs",
                self.qw.shape(),
                self.rw.shape()
            )));
        }
        if !(self.care_tol > 0.0 && self.rank_tol > 0.0) {
            return Err(ControlError::CareFailure(NumericsError::BadWeights(
                "tolerances must be positive".into(),
            )));
        }
        CareProblem::new(
            Mat::zeros(n, n),
            Mat::zeros(n, m),
            self.qw.clone(),
            self.rw.clone(),
        )
        .validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub u: Vector,
    /// `K = R⁻¹BᵀP`, zero when the pair was not controllable.
    pub gain: Mat,
    pub p: Mat,
    pub controllable: bool,
}

/// SDRE feedback `u = −R⁻¹Bᵀ(e)P(e)·e` with `e = x − x_ref`.
///
/// When `(A(e), B(e))` loses controllability rank the output is `u = 0`
/// with `controllable = false`; for the Van der Pol plant this happens only
/// where `B(e) = 0` and the input has no effect anyway.
pub fn sdre_control(
    x: &Vector,
    x_ref: &Vector,
    model: &dyn SystemModel,
    cfg: &ControllerConfig,
) -> Result<ControlOutput, ControlError> {
    let n = model.n_states();
    let m = model.n_inputs();
    if x.len() != n || x_ref.len() != n {
        return Err(ControlError::DimensionMismatch(format!(
            "state has {} entries and reference {}, model has {n} states",
            x.len(),
            x_ref.len()
        )));
    }
    let e = x - x_ref;
    let sdc = model.sdc(&e);
    if controllability_rank(&sdc.a, &sdc.b, cfg.rank_tol) < n {
        return Ok(ControlOutput {
            u: Vector::zeros(m),
            gain: Mat::zeros(m, n),
            p: Mat::zeros(n, n),
            controllable: false,
        });
    }
    let problem = CareProblem::new(sdc.a, sdc.b, cfg.qw.clone(), cfg.rw.clone());
    let sol = solve_care(&problem, cfg.care_tol)?;
    Ok(ControlOutput {
        u: -(&sol.gain * &e),
        gain: sol.gain,
        p: sol.p,
        controllable: true,
    })
}

/// Integrand `½(eᵀQe + uᵀRu)` of the quadratic cost.
pub fn running_cost(e: &Vector, u: &Vector, cfg: &ControllerConfig) -> f64 {
    0.5 * ((e.transpose() * &cfg.qw * e)[0] + (u.transpose() * &cfg.rw * u)[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Pendulum, PendulumParams, VanDerPol, VdpParams};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn pendulum_cfg() -> ControllerConfig {
        ControllerConfig::new(Mat::identity(2, 2) * 10.0, Mat::from_element(1, 1, 0.1))
    }

    #[test]
    fn zero_error_gives_zero_input() {
        let model = Pendulum::new(PendulumParams::default()).unwrap();
        let x = model.equilibrium();
        let out = sdre_control(&x, &x, &model, &pendulum_cfg()).unwrap();
        assert!(out.controllable);
        assert_eq!(out.u[0], 0.0);
    }

    #[test]
    fn vdp_loses_control_on_x1_zero() {
        let model = VanDerPol::new(VdpParams::default()).unwrap();
        let cfg = ControllerConfig::new(Mat::identity(2, 2), Mat::from_element(1, 1, 0.1));
        let out = sdre_control(&v(&[0.0, 0.8]), &v(&[0.0, 0.0]), &model, &cfg).unwrap();
        assert!(!out.controllable);
        assert_eq!(out.u[0], 0.0);
    }

    #[test]
    fn running_cost_values() {
        assert_eq!(
            running_cost(&v(&[0.0, 0.0]), &v(&[0.0]), &pendulum_cfg()),
            0.0
        );
        assert_eq!(
            running_cost(&v(&[1.0, 0.0]), &v(&[0.0]), &pendulum_cfg()),
            5.0
        );
        let vdp = ControllerConfig::new(Mat::identity(2, 2), Mat::from_element(1, 1, 0.1));
        assert!((running_cost(&v(&[1.0, 1.0]), &v(&[2.0]), &vdp) - 1.2).abs() < 1e-15);
    }

    #[test]
    fn validate_rejects_wrong_shapes() {
        assert!(matches!(
            pendulum_cfg().validate(3, 1),
            Err(ControlError::DimensionMismatch(_))
        ));
        let mut bad = pendulum_cfg();
        bad.rw[(0, 0)] = 0.0;
        assert!(bad.validate(2, 1).is_err());
    }
}
