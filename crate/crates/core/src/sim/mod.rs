//! Closed-loop stochastic simulation and the Monte-Carlo batch runner.
//!
//! Each step `k` proceeds as: measure `y_k = C x_k + v_k`, let the estimator
//! consume `(u_{k−1}, y_k)`, compute `u_k` from the estimate, then advance
//! the truth by one RK4 step under zero-order-hold `u_k` and add the process
//! noise increment `w_k ∼ N(0, Qd·dt)`.

mod metrics;
pub mod rng;

pub use metrics::{compute_metrics, BatchMetrics, RunMetrics};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::control::{running_cost, sdre_control, ControlError, ControllerConfig};
use crate::estimators::{
    check_psd, Estimator, EstimatorError, EstimatorKind, ExtendedKalmanFilter, NoiseConfig,
    ParticleFilter, PfPropagation, SdreKalmanFilter, DIVERGENCE_LIMIT,
};
use crate::models::{
    LinearModel, ModelError, Pendulum, PendulumParams, SystemModel, VanDerPol, VdpParams,
};
use crate::numerics::{
    asymmetry, covariance_sqrt, min_symmetric_eigenvalue, rk4_step, Mat, Vector,
};
use rng::{stream, StreamRole};

/// Fraction of diverged runs above which a batch is rejected.
pub const MAX_DIVERGED_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("{diverged} of {total} runs diverged (limit is 10%)")]
    TooManyDiverged { diverged: usize, total: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no runs to aggregate")]
    NoRuns,
}

/// Which plant to simulate.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Pendulum(PendulumParams),
    Vdp(VdpParams),
    Linear(LinearModel),
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Pendulum(_) => "pendulum",
            ModelSpec::Vdp(_) => "vdp",
            ModelSpec::Linear(_) => "linear",
        }
    }

    /// Registered model with default parameters.
    pub fn by_name(name: &str) -> Result<Self, ModelError> {
        match name {
            "pendulum" => Ok(ModelSpec::Pendulum(PendulumParams::default())),
            "vdp" => Ok(ModelSpec::Vdp(VdpParams::default())),
            other => Err(ModelError::UnknownModel(other.to_string())),
        }
    }

    pub fn build(&self) -> Result<Box<dyn SystemModel>, ModelError> {
        Ok(match self {
            ModelSpec::Pendulum(p) => Box::new(Pendulum::new(*p)?),
            ModelSpec::Vdp(p) => Box::new(VanDerPol::new(*p)?),
            ModelSpec::Linear(m) => Box::new(m.clone()),
        })
    }
}

/// Noise actually injected into the truth and the measurements when it
/// should differ from what the filters assume. Both may be singular.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectedNoise {
    pub qd: Mat,
    pub rn: Mat,
}

/// State fed to the controller.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ControlSource {
    #[default]
    Estimate,
    /// The true state, with the estimator still running alongside.
    Truth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub model: ModelSpec,
    pub estimator: EstimatorKind,
    pub dt: f64,
    pub horizon: f64,
    pub n_runs: usize,
    pub seed: u64,
    /// Noise assumed by the filters; also injected unless `injected` is set.
    pub noise: NoiseConfig,
    pub injected: Option<InjectedNoise>,
    pub controller: ControllerConfig,
    pub pf_particles: usize,
    pub pf_propagation: PfPropagation,
    pub control_source: ControlSource,
    pub x0: Vector,
    pub x0_hat: Vector,
    pub p0: Mat,
}

impl SimConfig {
    fn benchmark(model: ModelSpec, x0: Vector, qw: Mat) -> Self {
        Self {
            model,
            estimator: EstimatorKind::SdreKf,
            dt: 0.01,
            horizon: 10.0,
            n_runs: 30,
            seed: 0,
            noise: NoiseConfig::new(Mat::identity(2, 2) * 0.1, Mat::from_element(1, 1, 0.1)),
            injected: None,
            controller: ControllerConfig::new(qw, Mat::from_element(1, 1, 0.1)),
            pf_particles: 500,
            pf_propagation: PfPropagation::Euler,
            control_source: ControlSource::Estimate,
            x0_hat: x0.clone(),
            x0,
            p0: Mat::identity(2, 2) * 0.1,
        }
    }

    /// Pendulum benchmark: l = 1.5, m = 0.5, k = 0.5, Qw = 10·I, Rw = 0.1,
    /// Qd = 0.1·I, Rn = 0.1, dt = 0.01, 30 runs, 10 s, from `[π + 0.5, 0]`.
    pub fn pendulum_benchmark() -> Self {
        Self::benchmark(
            ModelSpec::Pendulum(PendulumParams::default()),
            Vector::from_vec(vec![std::f64::consts::PI + 0.5, 0.0]),
            Mat::identity(2, 2) * 10.0,
        )
    }

    /// Van der Pol benchmark: μ = 0.7, Qw = I, Rw = 0.1, otherwise as the
    /// pendulum, from `[1, 1]`.
    pub fn vdp_benchmark() -> Self {
        Self::benchmark(
            ModelSpec::Vdp(VdpParams::default()),
            Vector::from_vec(vec![1.0, 1.0]),
            Mat::identity(2, 2),
        )
    }

    /// Number of integration steps; the trajectory has one more sample.
    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn injected_noise(&self) -> (&Mat, &Mat) {
        match &self.injected {
            Some(inj) => (&inj.qd, &inj.rn),
            None => (&self.noise.qd, &self.noise.rn),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |msg: String| Err(SimError::InvalidConfig(msg));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return invalid(format!("dt must be positive (got {})", self.dt));
        }
        if !(self.horizon.is_finite() && self.horizon >= self.dt) {
            return invalid(format!(
                "horizon must be at least dt (got horizon {} with dt {})",
                self.horizon, self.dt
            ));
        }
        if self.n_runs == 0 {
            return invalid("n_runs must be at least 1".into());
        }
        if self.estimator == EstimatorKind::Pf && self.pf_particles == 0 {
            return invalid("pf_particles must be at least 1 for the particle filter".into());
        }
        let model = self.model.build()?;
        let (n, m, p) = (model.n_states(), model.n_inputs(), model.n_outputs());
        for (name, v) in [("x0", &self.x0), ("x0_hat", &self.x0_hat)] {
            if v.len() != n || v.iter().any(|x| !x.is_finite()) {
                return invalid(format!("{name} must hold {n} finite entries"));
            }
        }
        if self.p0.shape() != (n, n) {
            return invalid(format!("P0 must be {n}x{n}"));
        }
        check_psd(&self.p0, "P0", false)?;
        self.noise.validate(n, p)?;
        if let Some(inj) = &self.injected {
            if inj.qd.shape() != (n, n) || inj.rn.shape() != (p, p) {
                return invalid(format!(
                    "injected noise must be {n}x{n} (Qd) and {p}x{p} (Rn)"
                ));
            }
            check_psd(&inj.qd, "injected Qd", false)?;
            check_psd(&inj.rn, "injected Rn", false)?;
        }
        self.controller.validate(n, m)?;
        Ok(())
    }
}

/// Events recorded at one time step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepFlags {
    pub controllability_loss: bool,
    pub observability_loss: bool,
    pub weight_collapse: bool,
    /// The controller CARE failed and the previous gain was held.
    pub held_gain: bool,
}

/// Worst-case invariant measurements over one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunDiagnostics {
    pub max_cov_asymmetry: f64,
    pub min_cov_eigenvalue: f64,
    pub max_weight_sum_error: f64,
}

impl Default for RunDiagnostics {
    fn default() -> Self {
        Self {
            max_cov_asymmetry: 0.0,
            min_cov_eigenvalue: f64::INFINITY,
            max_weight_sum_error: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub step: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub run_index: usize,
    pub times: Vec<f64>,
    pub x_true: Vec<Vector>,
    pub x_hat: Vec<Vector>,
    pub y: Vec<Vector>,
    pub u: Vec<Vector>,
    pub flags: Vec<StepFlags>,
    /// Trapezoidal integral of `½(eᵀQw e + uᵀRw u)` along the true error.
    pub accumulated_cost: f64,
    pub diagnostics: RunDiagnostics,
    /// Set when the run stopped early; the sequences hold the samples up to
    /// and including the failing step.
    pub diverged: Option<Divergence>,
}

impl RunResult {
    pub fn empty(run_index: usize) -> Self {
        Self {
            run_index,
            times: Vec::new(),
            x_true: Vec::new(),
            x_hat: Vec::new(),
            y: Vec::new(),
            u: Vec::new(),
            flags: Vec::new(),
            accumulated_cost: 0.0,
            diagnostics: RunDiagnostics::default(),
            diverged: None,
        }
    }

    pub fn count(&self, pick: impl Fn(&StepFlags) -> bool) -> usize {
        self.flags.iter().filter(|f| pick(f)).count()
    }
}

fn gaussian(rng: &mut ChaCha8Rng, sqrt_cov: &Mat) -> Vector {
    let z = Vector::from_fn(sqrt_cov.ncols(), |_, _| rng.sample(StandardNormal));
    sqrt_cov * z
}

fn out_of_range(x: &Vector) -> bool {
    x.iter()
        .any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT)
}

struct Controller<'a> {
    model: &'a dyn SystemModel,
    cfg: &'a ControllerConfig,
    x_ref: Vector,
    last_gain: Option<Mat>,
}

impl Controller<'_> {
    fn act(&mut self, x: &Vector, flags: &mut StepFlags) -> Result<Vector, SimError> {
        match sdre_control(x, &self.x_ref, self.model, self.cfg) {
            Ok(out) => {
                flags.controllability_loss = !out.controllable;
                if out.controllable {
                    self.last_gain = Some(out.gain);
                }
                Ok(out.u)
            }
            Err(ControlError::CareFailure(e)) => match &self.last_gain {
                Some(k) => {
                    flags.held_gain = true;
                    Ok(-(k * (x - &self.x_ref)))
                }
                None => Err(ControlError::CareFailure(e).into()),
            },
            Err(e) => Err(e.into()),
        }
    }
}

fn build_estimator(cfg: &SimConfig, run_index: usize) -> Result<Option<Estimator>, SimError> {
    Ok(match cfg.estimator {
        EstimatorKind::None => None,
        EstimatorKind::SdreKf => Some(Estimator::SdreKf(SdreKalmanFilter::new(
            cfg.x0_hat.clone(),
            cfg.p0.clone(),
        ))),
        EstimatorKind::Ekf => Some(Estimator::Ekf(ExtendedKalmanFilter::new(
            cfg.x0_hat.clone(),
            cfg.p0.clone(),
        ))),
        EstimatorKind::Pf => Some(Estimator::Pf(ParticleFilter::new(
            &cfg.x0_hat,
            &cfg.p0,
            cfg.pf_particles,
            stream(cfg.seed, run_index, StreamRole::Filter),
            cfg.pf_propagation,
        )?)),
    })
}

/// Simulates one seeded closed-loop run.
///
/// Divergence (truth or estimate beyond 1e6, or an estimator failure
/// mid-run) ends the run early with `diverged` set instead of an error.
pub fn run_closed_loop(cfg: &SimConfig, run_index: usize) -> Result<RunResult, SimError> {
    cfg.validate()?;
    let model = cfg.model.build()?;
    let model = model.as_ref();
    let n_steps = cfg.n_steps();
    let (inj_qd, inj_rn) = cfg.injected_noise();
    let process_sqrt =
        covariance_sqrt(&(inj_qd * cfg.dt)).map_err(EstimatorError::BadCovariance)?;
    let meas_sqrt = covariance_sqrt(inj_rn).map_err(EstimatorError::BadCovariance)?;
    let mut process_rng = stream(cfg.seed, run_index, StreamRole::ProcessNoise);
    let mut meas_rng = stream(cfg.seed, run_index, StreamRole::MeasurementNoise);

    let mut estimator = build_estimator(cfg, run_index)?;
    let mut controller = Controller {
        model,
        cfg: &cfg.controller,
        x_ref: model.equilibrium(),
        last_gain: None,
    };

    let mut res = RunResult::empty(run_index);
    let mut x = cfg.x0.clone();
    let mut u_prev = Vector::zeros(model.n_inputs());
    let mut prev_cost: Option<f64> = None;

    for k in 0..=n_steps {
        let mut flags = StepFlags::default();
        let y = model.measure(&x) + gaussian(&mut meas_rng, &meas_sqrt);

        if k > 0 {
            if let Some(est) = estimator.as_mut() {
                match est.step(&u_prev, &y, model, &cfg.noise, cfg.dt) {
                    Ok(report) => {
                        flags.observability_loss = report.observability_loss;
                        flags.weight_collapse = report.weight_collapse;
                        let d = &mut res.diagnostics;
                        d.max_weight_sum_error =
                            d.max_weight_sum_error.max(report.weight_sum_error);
                    }
                    Err(e) => {
                        res.diverged = Some(Divergence {
                            step: k,
                            reason: e.to_string(),
                        });
                        break;
                    }
                }
            }
        }
        let xhat = estimator
            .as_ref()
            .map_or_else(|| x.clone(), |est| est.estimate().clone());
        if let Some(p) = estimator.as_ref().and_then(Estimator::covariance) {
            let d = &mut res.diagnostics;
            d.max_cov_asymmetry = d.max_cov_asymmetry.max(asymmetry(p));
            d.min_cov_eigenvalue = d.min_cov_eigenvalue.min(min_symmetric_eigenvalue(p));
        }

        let feedback = match (cfg.control_source, estimator.is_some()) {
            (ControlSource::Estimate, true) => &xhat,
            _ => &x,
        };
        let u = match controller.act(feedback, &mut flags) {
            Ok(u) => u,
            Err(e) => {
                res.diverged = Some(Divergence {
                    step: k,
                    reason: e.to_string(),
                });
                break;
            }
        };

        let cost = running_cost(&(&x - &controller.x_ref), &u, &cfg.controller);
        if let Some(prev) = prev_cost {
            res.accumulated_cost += 0.5 * (prev + cost) * cfg.dt;
        }
        prev_cost = Some(cost);

        res.times.push(k as f64 * cfg.dt);
        res.x_true.push(x.clone());
        res.x_hat.push(xhat);
        res.y.push(y);
        res.u.push(u.clone());
        res.flags.push(flags);

        if k == n_steps {
            break;
        }
        let drift = rk4_step(|z| model.dynamics(z, &u), &x, cfg.dt);
        let noise = gaussian(&mut process_rng, &process_sqrt);
        match drift {
            Ok(next) if !out_of_range(&(&next + &noise)) => x = next + noise,
            _ => {
                res.diverged = Some(Divergence {
                    step: k + 1,
                    reason: "true state left the finite range".into(),
                });
                break;
            }
        }
        u_prev = u;
    }
    Ok(res)
}

/// Output of [`monte_carlo`]: pooled metrics plus every run in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub metrics: BatchMetrics,
    pub runs: Vec<RunResult>,
}

/// Runs `cfg.n_runs` seeded runs in parallel and pools their errors.
///
/// Diverged runs are excluded from the metrics and listed in
/// `metrics.excluded`; more than 10% diverged fails the batch. The result
/// does not depend on the number of worker threads.
pub fn monte_carlo(cfg: &SimConfig) -> Result<BatchOutcome, SimError> {
    cfg.validate()?;
    let runs: Vec<RunResult> = (0..cfg.n_runs)
        .into_par_iter()
        .map(|r| run_closed_loop(cfg, r))
        .collect::<Result<_, _>>()?;
    let excluded: Vec<usize> = runs
        .iter()
        .filter(|r| r.diverged.is_some())
        .map(|r| r.run_index)
        .collect();
    if excluded.len() as f64 > MAX_DIVERGED_FRACTION * cfg.n_runs as f64 {
        return Err(SimError::TooManyDiverged {
            diverged: excluded.len(),
            total: cfg.n_runs,
        });
    }
    let kept: Vec<RunResult> = runs
        .iter()
        .filter(|r| r.diverged.is_none())
        .cloned()
        .collect();
    let mut metrics = compute_metrics(cfg.estimator, &kept)?;
    metrics.excluded = excluded;
    Ok(BatchOutcome { metrics, runs })
}
