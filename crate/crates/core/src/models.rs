//! Benchmark plants: true dynamics, SDC factorizations and Jacobians.
//!
//! Every model exposes its state-dependent coefficient form in *error
//! coordinates* `e = x − x_ref`, so `A(e)·e + B(e)·u` equals the true drift
//! at `x_ref + e`. For the Van der Pol oscillator the reference is the
//! origin and the two coordinate systems coincide.

use std::f64::consts::PI;
use std::fmt::Debug;

use crate::numerics::{Mat, Vector};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("blend parameter {0} is outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
}

/// State-dependent coefficient matrices evaluated at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct SdcMatrices {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
}

/// A controlled plant `ẋ = f(x, u)` with linear measurement `y = C x`.
pub trait SystemModel: Debug + Send + Sync {
    fn name(&self) -> &str;
    fn n_states(&self) -> usize;
    fn n_inputs(&self) -> usize;
    fn n_outputs(&self) -> usize;

    fn dynamics(&self, x: &Vector, u: &Vector) -> Vector;

    /// SDC factorization at the error state `e = x − equilibrium()`.
    fn sdc(&self, e: &Vector) -> SdcMatrices;

    /// `∂f/∂x` at `(x, u)`.
    fn jacobian(&self, x: &Vector, u: &Vector) -> Mat;

    /// Measurement matrix. All models here measure linearly.
    fn output_matrix(&self) -> Mat;

    /// Regulation target.
    fn equilibrium(&self) -> Vector;

    fn initial_state(&self) -> Vector;

    fn measure(&self, x: &Vector) -> Vector {
        self.output_matrix() * x
    }

    /// Drift in error coordinates, computed from the SDC form.
    fn error_drift(&self, e: &Vector, u: &Vector) -> Vector {
        let sdc = self.sdc(e);
        &sdc.a * e + &sdc.b * u
    }
}

/// `sin(z)/z` with the removable singularity at zero filled in.
pub fn sinc_stable(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        let z2 = z * z;
        1.0 - z2 / 6.0 + z2 * z2 / 120.0
    } else {
        z.sin() / z
    }
}

/// Convex combination `α·A1 + (1−α)·A2` of two factorizations.
pub fn blend_sdc(a1: &Mat, a2: &Mat, alpha: f64) -> Result<Mat, ModelError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ModelError::AlphaOutOfRange(alpha));
    }
    assert_eq!(a1.shape(), a2.shape(), "blend_sdc: shape mismatch");
    Ok(a1 * alpha + a2 * (1.0 - alpha))
}

fn measure_first_state() -> Mat {
    Mat::from_row_slice(1, 2, &[1.0, 0.0])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumParams {
    /// Rod length (m).
    pub l: f64,
    /// Bob mass (kg).
    pub m: f64,
    /// Viscous friction coefficient.
    pub k: f64,
    /// Gravity (m/s²).
    pub g: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            l: 1.5,
            m: 0.5,
            k: 0.5,
            g: 9.81,
        }
    }
}

impl PendulumParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = self.l > 0.0 && self.m > 0.0 && self.k >= 0.0 && self.g > 0.0;
        let finite = [self.l, self.m, self.k, self.g]
            .iter()
            .all(|v| v.is_finite());
        if ok && finite {
            Ok(())
        } else {
            Err(ModelError::InvalidParameter(format!(
                "pendulum requires l > 0, m > 0, k >= 0, g > 0 (got {self:?})"
            )))
        }
    }
}

/// Damped pendulum regulated about the inverted position `[π, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pendulum {
    pub params: PendulumParams,
}

impl Pendulum {
    pub fn new(params: PendulumParams) -> Result<Self, ModelError> {
        params.validate()?;
        Ok(Self { params })
    }
}

pub fn pendulum_dynamics(x: &Vector, torque: f64, p: &PendulumParams) -> Vector {
    Vector::from_vec(vec![
        x[1],
        -(p.g / p.l) * x[0].sin() - (p.k / p.m) * x[1] + torque / (p.m * p.l * p.l),
    ])
}

/// SDC form about `[π, 0]`, using `sin(e₁ + π) = −sin(e₁)`.
pub fn pendulum_sdc(e: &Vector, p: &PendulumParams) -> SdcMatrices {
    SdcMatrices {
        a: Mat::from_row_slice(
            2,
            2,
            &[0.0, 1.0, (p.g / p.l) * sinc_stable(e[0]), -p.k / p.m],
        ),
        b: Mat::from_column_slice(2, 1, &[0.0, 1.0 / (p.m * p.l * p.l)]),
        c: measure_first_state(),
    }
}

pub fn pendulum_jacobian(x: &Vector, p: &PendulumParams) -> Mat {
    Mat::from_row_slice(2, 2, &[0.0, 1.0, -(p.g / p.l) * x[0].cos(), -p.k / p.m])
}

impl SystemModel for Pendulum {
    fn name(&self) -> &str {
        "pendulum"
    }
    fn n_states(&self) -> usize {
        2
    }
    fn n_inputs(&self) -> usize {
        1
    }
    fn n_outputs(&self) -> usize {
        1
    }
    fn dynamics(&self, x: &Vector, u: &Vector) -> Vector {
        pendulum_dynamics(x, u[0], &self.params)
    }
    fn sdc(&self, e: &Vector) -> SdcMatrices {
        pendulum_sdc(e, &self.params)
    }
    fn jacobian(&self, x: &Vector, _u: &Vector) -> Mat {
        pendulum_jacobian(x, &self.params)
    }
    fn output_matrix(&self) -> Mat {
        measure_first_state()
    }
    fn equilibrium(&self) -> Vector {
        Vector::from_vec(vec![PI, 0.0])
    }
    fn initial_state(&self) -> Vector {
        Vector::from_vec(vec![PI + 0.5, 0.0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VdpParams {
    pub mu: f64,
}

impl Default for VdpParams {
    fn default() -> Self {
        Self { mu: 0.7 }
    }
}

/// Van der Pol oscillator with multiplicative input `x₁·u` on the second
/// state.
///
/// The damping term carries the sign `−μ(1 − x₁²)x₂`, so the origin is
/// locally stable and the oscillation is driven for `|x₁| > 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct VanDerPol {
    pub params: VdpParams,
}

impl VanDerPol {
    pub fn new(params: VdpParams) -> Result<Self, ModelError> {
        if !params.mu.is_finite() {
            return Err(ModelError::InvalidParameter(format!(
                "mu must be finite (got {})",
                params.mu
            )));
        }
        Ok(Self { params })
    }
}

pub fn vdp_dynamics(x: &Vector, u: f64, p: &VdpParams) -> Vector {
    Vector::from_vec(vec![
        x[1],
        -x[0] - p.mu * (1.0 - x[0] * x[0]) * x[1] + x[0] * u,
    ])
}

pub fn vdp_sdc(x: &Vector, p: &VdpParams) -> SdcMatrices {
    SdcMatrices {
        a: Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -p.mu * (1.0 - x[0] * x[0])]),
        b: Mat::from_column_slice(2, 1, &[0.0, x[0]]),
        c: measure_first_state(),
    }
}

pub fn vdp_jacobian(x: &Vector, u: f64, p: &VdpParams) -> Mat {
    Mat::from_row_slice(
        2,
        2,
        &[
            0.0,
            1.0,
            -1.0 + 2.0 * p.mu * x[0] * x[1] + u,
            -p.mu * (1.0 - x[0] * x[0]),
        ],
    )
}

impl SystemModel for VanDerPol {
    fn name(&self) -> &str {
        "vdp"
    }
    fn n_states(&self) -> usize {
        2
    }
    fn n_inputs(&self) -> usize {
        1
    }
    fn n_outputs(&self) -> usize {
        1
    }
    fn dynamics(&self, x: &Vector, u: &Vector) -> Vector {
        vdp_dynamics(x, u[0], &self.params)
    }
    fn sdc(&self, e: &Vector) -> SdcMatrices {
        vdp_sdc(e, &self.params)
    }
    fn jacobian(&self, x: &Vector, u: &Vector) -> Mat {
        vdp_jacobian(x, u[0], &self.params)
    }
    fn output_matrix(&self) -> Mat {
        measure_first_state()
    }
    fn equilibrium(&self) -> Vector {
        Vector::zeros(2)
    }
    fn initial_state(&self) -> Vector {
        Vector::from_vec(vec![1.0, 1.0])
    }
}

/// Linear time-invariant plant `ẋ = A(x − x_ref) + Bu`, `y = Cx`.
///
/// Its SDC factorization is constant, which makes it the reference case
/// where SDRE control and filtering reduce to LQR and the Kalman filter.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub x_ref: Vector,
    pub x0: Vector,
}

impl LinearModel {
    pub fn new(a: Mat, b: Mat, c: Mat) -> Result<Self, ModelError> {
        let n = a.nrows();
        if !a.is_square() || b.nrows() != n || c.ncols() != n || b.ncols() == 0 || c.nrows() == 0 {
            return Err(ModelError::InvalidParameter(format!(
                "inconsistent shapes A {:?}, B {:?}, C {:?}",
                a.shape(),
                b.shape(),
                c.shape()
            )));
        }
        if a.iter()
            .chain(b.iter())
            .chain(c.iter())
            .any(|v| !v.is_finite())
        {
            return Err(ModelError::InvalidParameter("non-finite entry".into()));
        }
        Ok(Self {
            a,
            b,
            c,
            x_ref: Vector::zeros(n),
            x0: Vector::zeros(n),
        })
    }

    pub fn with_initial_state(mut self, x0: Vector) -> Self {
        self.x0 = x0;
        self
    }

    pub fn with_reference(mut self, x_ref: Vector) -> Self {
        self.x_ref = x_ref;
        self
    }
}

impl SystemModel for LinearModel {
    fn name(&self) -> &str {
        "linear"
    }
    fn n_states(&self) -> usize {
        self.a.nrows()
    }
    fn n_inputs(&self) -> usize {
        self.b.ncols()
    }
    fn n_outputs(&self) -> usize {
        self.c.nrows()
    }
    fn dynamics(&self, x: &Vector, u: &Vector) -> Vector {
        &self.a * (x - &self.x_ref) + &self.b * u
    }
    fn sdc(&self, _e: &Vector) -> SdcMatrices {
        SdcMatrices {
            a: self.a.clone(),
            b: self.b.clone(),
            c: self.c.clone(),
        }
    }
    fn jacobian(&self, _x: &Vector, _u: &Vector) -> Mat {
        self.a.clone()
    }
    fn output_matrix(&self) -> Mat {
        self.c.clone()
    }
    fn equilibrium(&self) -> Vector {
        self.x_ref.clone()
    }
    fn initial_state(&self) -> Vector {
        self.x0.clone()
    }
}
