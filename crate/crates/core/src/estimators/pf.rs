use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{check_psd, EstimatorError, NoiseConfig, StepReport};
use crate::models::SystemModel;
use crate::numerics::{covariance_sqrt, rk4_step, Mat, Vector};

/// Likelihoods below this count as zero when testing for weight collapse.
const COLLAPSE_LIKELIHOOD: f64 = 1e-300;

/// How particles are advanced through the process model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum PfPropagation {
    /// `x + f(x, u)·dt + w`, the Euler–Maruyama step.
    #[default]
    Euler,
    /// RK4 drift plus the same additive noise.
    Rk4,
}

#[derive(Debug, Clone)]
pub struct ParticleSet {
    pub particles: Vec<Vector>,
    pub weights: Vec<f64>,
    pub rng: ChaCha8Rng,
}

impl ParticleSet {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn mean(&self) -> Vector {
        let n = self.particles[0].len();
        self.particles
            .iter()
            .zip(&self.weights)
            .fold(Vector::zeros(n), |acc, (p, w)| acc + p * *w)
    }
}

fn gaussian(rng: &mut ChaCha8Rng, sqrt_cov: &Mat) -> Vector {
    let z = Vector::from_fn(sqrt_cov.ncols(), |_, _| rng.sample(StandardNormal));
    sqrt_cov * z
}

/// `vᵀMv` without temporaries.
fn quad_form(m: &Mat, v: &Vector) -> f64 {
    let mut acc = 0.0;
    for j in 0..v.len() {
        for i in 0..v.len() {
            acc += v[i] * m[(i, j)] * v[j];
        }
    }
    acc
}

/// `n` draws from `N(x0_mean, p0)` with uniform weights.
pub fn pf_init(
    x0_mean: &Vector,
    p0: &Mat,
    n: usize,
    mut rng: ChaCha8Rng,
) -> Result<ParticleSet, EstimatorError> {
    if n == 0 {
        return Err(EstimatorError::DimensionMismatch(
            "particle count must be at least 1".into(),
        ));
    }
    check_psd(p0, "P0", false)?;
    let l = covariance_sqrt(p0).map_err(EstimatorError::BadCovariance)?;
    let particles = (0..n).map(|_| x0_mean + gaussian(&mut rng, &l)).collect();
    Ok(ParticleSet {
        particles,
        weights: vec![1.0 / n as f64; n],
        rng,
    })
}

/// Indices picked by systematic resampling with offset `u0 ∈ [0, 1)`.
///
/// Particle `i` is selected `⌊N·wᵢ⌋` or `⌈N·wᵢ⌉` times.
pub fn systematic_resample(weights: &[f64], u0: f64) -> Vec<usize> {
    let n = weights.len();
    let mut out = Vec::with_capacity(n);
    let mut cumulative = weights[0];
    let mut j = 0;
    for i in 0..n {
        let pos = (u0 + i as f64) / n as f64;
        while pos >= cumulative && j + 1 < n {
            j += 1;
            cumulative += weights[j];
        }
        out.push(j);
    }
    out
}

/// Result of one particle-filter step.
#[derive(Debug, Clone, PartialEq)]
pub struct PfStep {
    pub estimate: Vector,
    /// All likelihoods fell below 1e-300 and uniform weights were used.
    pub weight_collapse: bool,
    /// `|Σwᵢ − 1|` after normalization.
    pub weight_sum_error: f64,
}

/// Propagate, weight by the Gaussian measurement likelihood, normalize,
/// resample systematically, and return the mean of the resampled set.
#[allow(clippy::too_many_arguments)]
pub fn pf_step(
    ps: &mut ParticleSet,
    u: &Vector,
    y: &Vector,
    model: &dyn SystemModel,
    noise: &NoiseConfig,
    dt: f64,
    propagation: PfPropagation,
) -> Result<PfStep, EstimatorError> {
    let n = ps.len();
    let l = covariance_sqrt(&(&noise.qd * dt)).map_err(EstimatorError::BadCovariance)?;
    let rn_inv = noise.rn_inverse()?;
    let p = noise.rn.nrows();
    let log_norm =
        -0.5 * (p as f64 * (2.0 * std::f64::consts::PI).ln() + noise.rn.determinant().ln());
    let c = model.output_matrix();

    let mut log_lik = Vec::with_capacity(n);
    let mut z = Vector::zeros(l.ncols());
    let mut r = Vector::zeros(p);
    for particle in ps.particles.iter_mut() {
        match propagation {
            PfPropagation::Euler => {
                let f = model.dynamics(particle, u);
                particle.axpy(dt, &f, 1.0);
            }
            PfPropagation::Rk4 => *particle = rk4_step(|x| model.dynamics(x, u), particle, dt)?,
        }
        z.iter_mut()
            .for_each(|zi| *zi = ps.rng.sample(StandardNormal));
        particle.gemv(1.0, &l, &z, 1.0);
        r.copy_from(y);
        r.gemv(-1.0, &c, particle, 1.0);
        log_lik.push(log_norm - 0.5 * quad_form(&rn_inv, &r));
    }

    // Weights are formed relative to the best particle so that moderate
    // innovations do not underflow; the collapse test uses the raw scale.
    let best = log_lik.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weight_collapse = best.is_nan() || best < COLLAPSE_LIKELIHOOD.ln();
    if weight_collapse {
        ps.weights.fill(1.0 / n as f64);
    } else {
        for (w, ll) in ps.weights.iter_mut().zip(&log_lik) {
            *w = (ll - best).exp();
        }
        let total: f64 = ps.weights.iter().sum();
        ps.weights.iter_mut().for_each(|w| *w /= total);
    }
    let weight_sum_error = (ps.weights.iter().sum::<f64>() - 1.0).abs();

    let u0: f64 = ps.rng.random();
    let picks = systematic_resample(&ps.weights, u0);
    ps.particles = picks.iter().map(|&i| ps.particles[i].clone()).collect();
    ps.weights.fill(1.0 / n as f64);

    let estimate = ps.mean();
    if super::diverged(&estimate) {
        return Err(EstimatorError::NonFiniteState);
    }
    Ok(PfStep {
        estimate,
        weight_collapse,
        weight_sum_error,
    })
}

#[derive(Debug, Clone)]
pub struct ParticleFilter {
    pub set: ParticleSet,
    pub estimate: Vector,
    pub propagation: PfPropagation,
}

impl ParticleFilter {
    pub fn new(
        x0_mean: &Vector,
        p0: &Mat,
        n: usize,
        rng: ChaCha8Rng,
        propagation: PfPropagation,
    ) -> Result<Self, EstimatorError> {
        let set = pf_init(x0_mean, p0, n, rng)?;
        let estimate = set.mean();
        Ok(Self {
            set,
            estimate,
            propagation,
        })
    }

    pub fn step(
        &mut self,
        u: &Vector,
        y: &Vector,
        model: &dyn SystemModel,
        noise: &NoiseConfig,
        dt: f64,
    ) -> Result<StepReport, EstimatorError> {
        let out = pf_step(&mut self.set, u, y, model, noise, dt, self.propagation)?;
        self.estimate = out.estimate;
        Ok(StepReport {
            weight_collapse: out.weight_collapse,
            weight_sum_error: out.weight_sum_error,
            ..Default::default()
        })
    }
}
