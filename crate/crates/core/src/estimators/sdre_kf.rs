use super::{diverged, EstimatorError, KalmanState, NoiseConfig, StepReport};
use crate::models::SystemModel;
use crate::numerics::{
    observability_rank, rk4_step, solve_filter_care, Mat, Vector, DEFAULT_CARE_TOL,
    DEFAULT_RANK_TOL,
};

/// Result of one SDRE-KF step.
#[derive(Debug, Clone, PartialEq)]
pub struct SdreKfStep {
    pub state: KalmanState,
    /// Filter gain used over the step.
    pub gain: Mat,
    /// The pair `(A(ê), C)` was rank deficient and `prev_gain` was reused.
    pub observability_loss: bool,
    /// `y − C x̂⁻`, measured against the predicted estimate.
    pub innovation: Vector,
}

/// One SDRE Kalman filter step.
///
/// The filter works in error coordinates `ê = x̂ − x_ref`. At `ê` it solves
/// the filter CARE `PAᵀ + AP − PCᵀRn⁻¹CP + Qd = 0` and forms `Kf = PCᵀRn⁻¹`.
/// The prediction integrates `A(z)z + B(z)u` (the SDC form of the drift,
/// re-evaluated at each RK4 stage); the innovation uses the shifted
/// measurement `y − C x_ref` against the predicted estimate.
///
/// If `(A(ê), C)` is not observable the Riccati solve is skipped and
/// `prev_gain` is reused; without a previous gain the step fails.
#[allow(clippy::too_many_arguments)]
pub fn sdre_kf_step(
    st: &KalmanState,
    prev_gain: Option<&Mat>,
    u: &Vector,
    y: &Vector,
    model: &dyn SystemModel,
    noise: &NoiseConfig,
    dt: f64,
    care_tol: f64,
    rank_tol: f64,
) -> Result<SdreKfStep, EstimatorError> {
    let x_ref = model.equilibrium();
    let e = &st.xhat - &x_ref;
    let sdc = model.sdc(&e);

    let (gain, p, observability_loss) =
        if observability_rank(&sdc.a, &sdc.c, rank_tol) < model.n_states() {
            let gain = prev_gain.ok_or(EstimatorError::ObservabilityLoss)?.clone();
            (gain, st.p.clone(), true)
        } else {
            let sol = solve_filter_care(&sdc.a, &sdc.c, &noise.qd, &noise.rn, care_tol)?;
            (sol.gain, sol.p, false)
        };

    let e_pred = rk4_step(|z| model.error_drift(z, u), &e, dt)?;
    let innovation = y - &sdc.c * &x_ref - &sdc.c * &e_pred;
    let xhat = e_pred + &gain * &innovation * dt + x_ref;
    if diverged(&xhat) {
        return Err(EstimatorError::NonFiniteState);
    }
    Ok(SdreKfStep {
        state: KalmanState { xhat, p },
        gain,
        observability_loss,
        innovation,
    })
}

/// Stateful SDRE-KF holding the last gain for observability-loss steps.
#[derive(Debug, Clone)]
pub struct SdreKalmanFilter {
    pub state: KalmanState,
    pub gain: Option<Mat>,
    pub care_tol: f64,
    pub rank_tol: f64,
}

impl SdreKalmanFilter {
    pub fn new(xhat0: Vector, p0: Mat) -> Self {
        Self {
            state: KalmanState::new(xhat0, p0),
            gain: None,
            care_tol: DEFAULT_CARE_TOL,
            rank_tol: DEFAULT_RANK_TOL,
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
        let out = sdre_kf_step(
            &self.state,
            self.gain.as_ref(),
            u,
            y,
            model,
            noise,
            dt,
            self.care_tol,
            self.rank_tol,
        )?;
        self.state = out.state;
        self.gain = Some(out.gain);
        Ok(StepReport {
            observability_loss: out.observability_loss,
            ..Default::default()
        })
    }
}
