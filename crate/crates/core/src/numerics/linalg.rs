use nalgebra::{Complex, ComplexField, DMatrix, Schur, SymmetricEigen, SVD};

use super::{Mat, NumericsError};

/// Iteration cap for the QR-type decompositions. nalgebra's unbounded
/// variants can spin forever on some inputs.
const MAX_DECOMPOSITION_ITERS: usize = 10_000;

/// Eigenvalues of a general square real matrix.
///
/// The shifted QR iteration occasionally cycles on structured inputs such as
/// Hamiltonians; the transpose and a reversal permutation of the matrix have
/// the same spectrum and usually break the cycle.
pub(crate) fn eigenvalues(m: &Mat) -> Result<Vec<Complex<f64>>, NumericsError> {
    let n = m.nrows();
    let reversed = Mat::from_fn(n, n, |i, j| m[(n - 1 - i, n - 1 - j)]);
    [m.clone(), m.transpose(), reversed]
        .into_iter()
        .find_map(|cand| Schur::try_new(cand, f64::EPSILON, MAX_DECOMPOSITION_ITERS))
        .map(|s| s.complex_eigenvalues().iter().copied().collect())
        .ok_or(NumericsError::NoConvergence("real Schur decomposition"))
}

/// SVD with singular values sorted in decreasing order.
pub(crate) fn svd<T>(
    m: &DMatrix<T>,
    compute_u: bool,
    compute_v: bool,
) -> Result<SVD<T, nalgebra::Dyn, nalgebra::Dyn>, NumericsError>
where
    T: ComplexField<RealField = f64>,
{
    SVD::try_new(
        m.clone(),
        compute_u,
        compute_v,
        f64::EPSILON,
        MAX_DECOMPOSITION_ITERS,
    )
    .ok_or(NumericsError::NoConvergence("singular value decomposition"))
}

pub(crate) fn symmetric_eigen(
    m: &Mat,
) -> Result<SymmetricEigen<f64, nalgebra::Dyn>, NumericsError> {
    SymmetricEigen::try_new(symmetrize(m), f64::EPSILON, MAX_DECOMPOSITION_ITERS)
        .ok_or(NumericsError::NoConvergence("symmetric eigendecomposition"))
}

pub(crate) fn singular_values(m: &Mat) -> Result<Vec<f64>, NumericsError> {
    Ok(svd(m, false, false)?
        .singular_values
        .iter()
        .copied()
        .collect())
}

/// Returns `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Largest absolute entry of `M - Mᵀ`.
pub fn asymmetry(m: &Mat) -> f64 {
    (m - m.transpose()).amax()
}

pub fn is_finite(m: &Mat) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Smallest eigenvalue of the symmetric part of `m` (`-∞` if the
/// decomposition fails to converge).
pub fn min_symmetric_eigenvalue(m: &Mat) -> f64 {
    symmetric_eigen(m).map_or(f64::NEG_INFINITY, |e| {
        e.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    })
}

/// Largest real part over the spectrum of a square matrix.
///
/// Returns `+∞` when the eigenvalue iteration does not converge, so callers
/// testing for stability see an unstable matrix.
pub fn spectral_abscissa(m: &Mat) -> f64 {
    eigenvalues(m).map_or(f64::INFINITY, |ev| {
        ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    })
}

/// Square root `L` of a PSD covariance with `L Lᵀ = cov`.
///
/// Uses the symmetric eigendecomposition so that singular (and exactly zero)
/// covariances are accepted; eigenvalues down to `-1e-10` are clamped to zero.
pub fn covariance_sqrt(cov: &Mat) -> Result<Mat, NumericsError> {
    if !cov.is_square() {
        return Err(NumericsError::DimensionMismatch(format!(
            "covariance is {}x{}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    if !is_finite(cov) || asymmetry(cov) > 1e-12 * (1.0 + cov.amax()) {
        return Err(NumericsError::BadWeights(
            "covariance must be finite and symmetric".into(),
        ));
    }
    let eig = symmetric_eigen(cov)?;
    if eig.eigenvalues.iter().any(|&l| l < -1e-10) {
        return Err(NumericsError::BadWeights(
            "covariance must be positive semidefinite".into(),
        ));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * Mat::from_diagonal(&roots))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_sqrt_reconstructs() {
        let cov = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let l = covariance_sqrt(&cov).unwrap();
        assert!((&l * l.transpose() - &cov).amax() < 1e-14);
    }

    #[test]
    fn covariance_sqrt_accepts_zero() {
        let l = covariance_sqrt(&Mat::zeros(2, 2)).unwrap();
        assert_eq!(l.amax(), 0.0);
    }

    #[test]
    fn covariance_sqrt_rejects_indefinite() {
        let cov = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            covariance_sqrt(&cov),
            Err(NumericsError::BadWeights(_))
        ));
    }

    #[test]
    fn abscissa_of_rotation_generator() {
        let a = Mat::from_row_slice(2, 2, &[-1.0, 2.0, -2.0, -1.0]);
        assert!((spectral_abscissa(&a) + 1.0).abs() < 1e-12);
    }
}
