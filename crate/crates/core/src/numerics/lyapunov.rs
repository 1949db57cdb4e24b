use super::linalg::{spectral_abscissa, symmetrize};
use super::{Mat, NumericsError};

/// Solves `AᵀX + XA + Q = 0` for symmetric `X`.
///
/// The equation is vectorized (column-major) as
/// `(I ⊗ Aᵀ + Aᵀ ⊗ I) vec(X) = -vec(Q)` and solved by LU.
pub fn solve_lyapunov(a: &Mat, q: &Mat) -> Result<Mat, NumericsError> {
    let n = a.nrows();
    if !a.is_square() || q.shape() != (n, n) {
        return Err(NumericsError::DimensionMismatch(format!(
            "lyapunov: A is {:?}, Q is {:?}",
            a.shape(),
            q.shape()
        )));
    }
    let abscissa = spectral_abscissa(a);
    if abscissa >= -1e-12 {
        return Err(NumericsError::NotHurwitz { abscissa });
    }

    let at = a.transpose();
    let eye = Mat::identity(n, n);
    let op = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -nalgebra::DVector::from_column_slice(q.as_slice());
    let vec_x = op
        .lu()
        .solve(&rhs)
        .ok_or(NumericsError::NotHurwitz { abscissa })?;
    let x = Mat::from_column_slice(n, n, vec_x.as_slice());
    Ok(symmetrize(&x))
}
