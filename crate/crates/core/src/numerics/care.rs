//! Continuous algebraic Riccati equation
//!
//! ```text
//! AᵀP + PA − PBR⁻¹BᵀP + Q = 0
//! ```
//!
//! The primary path extracts the stable invariant subspace of the
//! Hamiltonian `[[A, −BR⁻¹Bᵀ], [−Q, −Aᵀ]]` from its eigenvectors and sets
//! `P = Re(X₂X₁⁻¹)`. If `X₁` is ill-conditioned, or the subspace solution
//! misses the residual tolerance, Newton–Kleinman iteration takes over,
//! seeded from the subspace solution when that is stabilizing and from a
//! Bass-type stabilizing gain otherwise.

use nalgebra::{Complex, DMatrix};

use super::linalg::{
    asymmetry, eigenvalues, is_finite, min_symmetric_eigenvalue, spectral_abscissa, svd, symmetrize,
};
use super::lyapunov::solve_lyapunov;
use super::{Mat, NumericsError};

type CMat = DMatrix<Complex<f64>>;

const MAX_SUBSPACE_COND: f64 = 1e10;
const MAX_NEWTON_ITERS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct CareProblem {
    pub a: Mat,
    pub b: Mat,
    pub q: Mat,
    pub r: Mat,
}

/// Which path produced a [`CareSolution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CareMethod {
    Subspace,
    /// Subspace solution polished by Newton–Kleinman steps.
    SubspaceRefined,
    NewtonKleinman,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CareSolution {
    /// Symmetric solution of the Riccati equation.
    pub p: Mat,
    /// Frobenius norm of the Riccati left-hand side at `p`.
    pub residual: f64,
    /// `R⁻¹BᵀP` for control problems, `PCᵀR⁻¹` for filter problems.
    pub gain: Mat,
    pub method: CareMethod,
}

impl CareProblem {
    pub fn new(a: Mat, b: Mat, q: Mat, r: Mat) -> Self {
        Self { a, b, q, r }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Checks shapes and the PSD/PD conditions on the weights.
    pub fn validate(&self) -> Result<(), NumericsError> {
        let n = self.a.nrows();
        let m = self.b.ncols();
        if n == 0 || !self.a.is_square() {
            return Err(NumericsError::DimensionMismatch(
                "A must be square and non-empty".into(),
            ));
        }
        if self.b.nrows() != n || m == 0 {
            return Err(NumericsError::DimensionMismatch(format!(
                "B is {:?}, expected {n}×m",
                self.b.shape()
            )));
        }
        if self.q.shape() != (n, n) {
            return Err(NumericsError::DimensionMismatch(format!(
                "Q is {:?}",
                self.q.shape()
            )));
        }
        if self.r.shape() != (m, m) {
            return Err(NumericsError::DimensionMismatch(format!(
                "R is {:?}",
                self.r.shape()
            )));
        }
        if ![&self.a, &self.b, &self.q, &self.r]
            .iter()
            .all(|m| is_finite(m))
        {
            return Err(NumericsError::BadWeights("non-finite entries".into()));
        }
        check_symmetric_weight(&self.q, "Q", -1e-10)?;
        check_symmetric_weight(&self.r, "R", 1e-10)?;
        Ok(())
    }

    /// Frobenius norm of `AᵀP + PA − PBR⁻¹BᵀP + Q`.
    pub fn residual(&self, p: &Mat) -> f64 {
        let r_inv = self.r_inverse();
        self.residual_with(p, &(&self.b * r_inv * self.b.transpose()))
    }

    fn residual_with(&self, p: &Mat, s: &Mat) -> f64 {
        (self.a.transpose() * p + p * &self.a - p * s * p + &self.q).norm()
    }

    fn r_inverse(&self) -> Mat {
        // R is validated symmetric PD.
        self.r
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .unwrap_or_else(|| {
                self.r
                    .clone()
                    .try_inverse()
                    .expect("R is positive definite")
            })
    }
}

fn check_symmetric_weight(m: &Mat, name: &str, min_eig: f64) -> Result<(), NumericsError> {
    if asymmetry(m) > 1e-12 * (1.0 + m.amax()) {
        return Err(NumericsError::BadWeights(format!(
            "{name} is not symmetric"
        )));
    }
    let lowest = min_symmetric_eigenvalue(m);
    if lowest < min_eig {
        let kind = if min_eig > 0.0 {
            "positive definite"
        } else {
            "positive semidefinite"
        };
        return Err(NumericsError::BadWeights(format!(
            "{name} must be {kind} (min eigenvalue {lowest:.3e})"
        )));
    }
    Ok(())
}

/// Solves the control CARE to Frobenius residual `tol`; the gain is `R⁻¹BᵀP`.
pub fn solve_care(problem: &CareProblem, tol: f64) -> Result<CareSolution, NumericsError> {
    problem.validate()?;
    let r_inv = problem.r_inverse();
    let s = &problem.b * &r_inv * problem.b.transpose();
    let gain_of = |p: &Mat| &r_inv * problem.b.transpose() * p;

    let subspace = match stable_subspace_solution(problem, &s) {
        Ok(p) => p,
        Err(NumericsError::NoConvergence(_)) => None,
        Err(e) => return Err(e),
    };
    let mut best: Option<(Mat, f64)> = None;

    if let Some(p) = subspace {
        let residual = problem.residual_with(&p, &s);
        if residual <= tol && closed_loop_stable(problem, &gain_of(&p)) {
            let gain = gain_of(&p);
            return Ok(CareSolution {
                p,
                residual,
                gain,
                method: CareMethod::Subspace,
            });
        }
        let k0 = gain_of(&p);
        if closed_loop_stable(problem, &k0) {
            if let Ok((p, residual)) = newton_kleinman(problem, &r_inv, &s, k0, tol) {
                if residual <= tol {
                    let gain = gain_of(&p);
                    return Ok(CareSolution {
                        p,
                        residual,
                        gain,
                        method: CareMethod::SubspaceRefined,
                    });
                }
                best = Some((p, residual));
            }
        }
    }

    let fallback =
        stabilizing_gain(problem).and_then(|k0| newton_kleinman(problem, &r_inv, &s, k0, tol));
    match fallback {
        Ok((p, residual)) if residual <= tol => {
            let gain = gain_of(&p);
            Ok(CareSolution {
                p,
                residual,
                gain,
                method: CareMethod::NewtonKleinman,
            })
        }
        Ok((_, residual)) => Err(NumericsError::SingularSubspace {
            residual: best.map_or(residual, |(_, r)| r.min(residual)),
        }),
        Err(_) => Err(NumericsError::SingularSubspace {
            residual: best.map_or(f64::INFINITY, |(_, r)| r),
        }),
    }
}

/// Solves the filter CARE `PAᵀ + AP − PCᵀRn⁻¹CP + Qn = 0` by duality.
///
/// The returned gain is the filter gain `PCᵀRn⁻¹` (n×p).
pub fn solve_filter_care(
    a: &Mat,
    c: &Mat,
    qn: &Mat,
    rn: &Mat,
    tol: f64,
) -> Result<CareSolution, NumericsError> {
    let dual = CareProblem::new(a.transpose(), c.transpose(), qn.clone(), rn.clone());
    let mut sol = solve_care(&dual, tol)?;
    sol.gain = sol.gain.transpose();
    Ok(sol)
}

fn closed_loop_stable(problem: &CareProblem, gain: &Mat) -> bool {
    let acl = &problem.a - &problem.b * gain;
    is_finite(&acl) && spectral_abscissa(&acl) < 0.0
}

/// Stable-subspace solution, or `None` when `X₁` is too ill-conditioned.
fn stable_subspace_solution(problem: &CareProblem, s: &Mat) -> Result<Option<Mat>, NumericsError> {
    let n = problem.n();
    let mut ham = Mat::zeros(2 * n, 2 * n);
    ham.view_mut((0, 0), (n, n)).copy_from(&problem.a);
    ham.view_mut((0, n), (n, n)).copy_from(&(-s));
    ham.view_mut((n, 0), (n, n)).copy_from(&(-&problem.q));
    ham.view_mut((n, n), (n, n))
        .copy_from(&(-problem.a.transpose()));

    let scale = 1.0 + ham.amax();
    let mut stable: Vec<Complex<f64>> = eigenvalues(&ham)?
        .into_iter()
        .filter(|z| z.re < -1e-12 * scale)
        .collect();
    if stable.len() != n {
        return Err(NumericsError::NotStabilizable {
            stable: stable.len(),
            required: n,
        });
    }
    stable.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));

    let hc: CMat = ham.map(|v| Complex::new(v, 0.0));
    let mut basis = CMat::zeros(2 * n, n);
    let mut col = 0;
    // Eigenvalues that agree to within the cluster radius share one null-space
    // computation; each cluster of size k contributes k singular vectors.
    let radius = 1e-8 * scale;
    let mut i = 0;
    while i < stable.len() {
        let mut j = i + 1;
        while j < stable.len() && (stable[j] - stable[i]).norm() < radius {
            j += 1;
        }
        let k = j - i;
        let shifted = &hc - CMat::identity(2 * n, 2 * n) * stable[i];
        let dec = svd(&shifted, false, true)?;
        let v_t = dec.v_t.expect("requested V^H");
        // try_new sorts singular values in decreasing order
        let len = dec.singular_values.len();
        for idx in (len - k)..len {
            let v = v_t.row(idx).transpose().map(|z| z.conj());
            basis.set_column(col, &v);
            col += 1;
        }
        i = j;
    }

    let x1 = basis.rows(0, n).into_owned();
    let x2 = basis.rows(n, n).into_owned();
    let sv = svd(&x1, false, false)?.singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if smin == 0.0 || smax / smin > MAX_SUBSPACE_COND {
        return Ok(None);
    }
    // P X₁ = X₂  ⇔  X₁ᵀ Pᵀ = X₂ᵀ
    let pt = match x1.transpose().lu().solve(&x2.transpose()) {
        Some(pt) => pt,
        None => return Ok(None),
    };
    let p = pt.transpose().map(|z| z.re);
    if !is_finite(&p) {
        return Ok(None);
    }
    Ok(Some(symmetrize(&p)))
}

/// Newton–Kleinman iteration from a stabilizing gain `k`.
///
/// Returns the last iterate and its residual; stops at `tol` or when the
/// residual stalls.
fn newton_kleinman(
    problem: &CareProblem,
    r_inv: &Mat,
    s: &Mat,
    mut k: Mat,
    tol: f64,
) -> Result<(Mat, f64), NumericsError> {
    let mut best: Option<(Mat, f64)> = None;
    for _ in 0..MAX_NEWTON_ITERS {
        let acl = &problem.a - &problem.b * &k;
        let rhs = &problem.q + k.transpose() * &problem.r * &k;
        let p = solve_lyapunov(&acl, &rhs)?;
        let residual = problem.residual_with(&p, s);
        k = r_inv * problem.b.transpose() * &p;
        let improved = best.as_ref().is_none_or(|(_, r)| residual < 0.5 * r);
        let done = residual <= tol || !improved;
        if best.as_ref().is_none_or(|(_, r)| residual < *r) {
            best = Some((p, residual));
        }
        if done {
            break;
        }
    }
    best.ok_or(NumericsError::SingularSubspace {
        residual: f64::INFINITY,
    })
}

/// Bass-type initial gain `K = BᵀZ⁻¹` where `Z` solves
/// `(A+βI)Z + Z(A+βI)ᵀ = 2BBᵀ` with `β` above the spectral radius.
fn stabilizing_gain(problem: &CareProblem) -> Result<Mat, NumericsError> {
    let n = problem.n();
    let a = &problem.a;
    if spectral_abscissa(a) < -1e-9 {
        return Ok(Mat::zeros(problem.b.ncols(), n));
    }
    let beta = 1.0 + a.row_iter().map(|r| r.abs().sum()).fold(0.0, f64::max);
    let shifted = -(a + Mat::identity(n, n) * beta);
    // solve_lyapunov handles XᵀZ + ZX + W = 0; pass X = shiftedᵀ.
    let w = &problem.b * problem.b.transpose() * 2.0;
    let z = solve_lyapunov(&shifted.transpose(), &w)?;
    let z_inv = z.try_inverse().ok_or(NumericsError::SingularSubspace {
        residual: f64::INFINITY,
    })?;
    Ok(problem.b.transpose() * z_inv)
}
