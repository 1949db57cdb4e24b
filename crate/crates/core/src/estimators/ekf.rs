use super::{diverged, EstimatorError, KalmanState, NoiseConfig, StepReport};
use crate::models::SystemModel;
use crate::numerics::{rk4_step, symmetrize, Mat, Vector};

/// One continuous-time EKF step.
///
/// With `A = ∂f/∂x(x̂, u)` and `K = PCᵀRn⁻¹` frozen at the start of the
/// step, the pair
///
/// ```text
/// ẋ̂ = f(x̂, u)
/// Ṗ = AP + PAᵀ − K Rn Kᵀ + Qd
/// ```
///
/// is advanced jointly by one RK4 step, after which the sampled innovation
/// `K·dt·(y − C x̂⁻)` is added. Noise enters additively, so the noise
/// Jacobians are identities and `Qd`, `Rn` are used as given.
pub fn ekf_step(
    st: &KalmanState,
    u: &Vector,
    y: &Vector,
    model: &dyn SystemModel,
    noise: &NoiseConfig,
    dt: f64,
) -> Result<KalmanState, EstimatorError> {
    let n = model.n_states();
    let a = model.jacobian(&st.xhat, u);
    let c = model.output_matrix();
    let gain = &st.p * c.transpose() * noise.rn_inverse()?;
    let gain_term = &gain * &noise.rn * gain.transpose();

    let mut z = Vector::zeros(n + n * n);
    z.rows_mut(0, n).copy_from(&st.xhat);
    z.rows_mut(n, n * n).copy_from_slice(st.p.as_slice());
    let z = rk4_step(
        |z| {
            let x = z.rows(0, n).into_owned();
            let p = Mat::from_column_slice(n, n, z.rows(n, n * n).as_slice());
            let pdot = &a * &p + &p * a.transpose() - &gain_term + &noise.qd;
            let mut dz = Vector::zeros(n + n * n);
            dz.rows_mut(0, n).copy_from(&model.dynamics(&x, u));
            dz.rows_mut(n, n * n).copy_from_slice(pdot.as_slice());
            dz
        },
        &z,
        dt,
    )?;

    let x_pred = z.rows(0, n).into_owned();
    let p = symmetrize(&Mat::from_column_slice(n, n, z.rows(n, n * n).as_slice()));
    let xhat = &x_pred + &gain * (y - &c * &x_pred) * dt;
    if diverged(&xhat) || diverged(&Vector::from_column_slice(p.as_slice())) {
        return Err(EstimatorError::NonFiniteState);
    }
    Ok(KalmanState { xhat, p })
}

#[derive(Debug, Clone)]
pub struct ExtendedKalmanFilter {
    pub state: KalmanState,
}

impl ExtendedKalmanFilter {
    pub fn new(xhat0: Vector, p0: Mat) -> Self {
        Self {
            state: KalmanState::new(xhat0, p0),
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
        self.state = ekf_step(&self.state, u, y, model, noise, dt)?;
        Ok(StepReport::default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Pendulum, PendulumParams};
    use std::f64::consts::PI;

    #[test]
    fn jacobian_at_inverted_position() {
        let model = Pendulum::new(PendulumParams::default()).unwrap();
        let a = model.jacobian(&Vector::from_vec(vec![PI, 0.0]), &Vector::zeros(1));
        let p = PendulumParams::default();
        assert!((a[(1, 0)] - p.g / p.l).abs() < 1e-15);
        assert_eq!(a[(1, 1)], -p.k / p.m);
    }

    #[test]
    fn divergence_is_reported() {
        let model = Pendulum::new(PendulumParams::default()).unwrap();
        let noise = NoiseConfig::new(Mat::identity(2, 2), Mat::identity(1, 1));
        let st = KalmanState::new(Vector::from_vec(vec![2e6, 0.0]), Mat::identity(2, 2));
        let y = Vector::from_vec(vec![2e6]);
        assert_eq!(
            ekf_step(&st, &Vector::zeros(1), &y, &model, &noise, 0.01),
            Err(EstimatorError::NonFiniteState)
        );
    }
}
