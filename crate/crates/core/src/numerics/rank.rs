use super::linalg::singular_values;
use super::Mat;

/// Numerical rank of `[B, AB, …, Aⁿ⁻¹B]`.
///
/// Singular values below `tol` times the largest one are treated as zero.
pub fn controllability_rank(a: &Mat, b: &Mat, tol: f64) -> usize {
    let n = a.nrows();
    let m = b.ncols();
    let mut ctrb = Mat::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        ctrb.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    numerical_rank(&ctrb, tol)
}

/// Numerical rank of the stacked observability matrix `[C; CA; …; CAⁿ⁻¹]`.
pub fn observability_rank(a: &Mat, c: &Mat, tol: f64) -> usize {
    controllability_rank(&a.transpose(), &c.transpose(), tol)
}

fn numerical_rank(m: &Mat, tol: f64) -> usize {
    // A non-converged SVD is reported as rank-deficient.
    let Ok(sv) = singular_values(m) else {
        return 0;
    };
    let largest = sv.iter().copied().fold(0.0, f64::max);
    if largest == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * largest).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-9;

    fn double_integrator() -> Mat {
        Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])
    }

    #[test]
    fn double_integrator_is_controllable() {
        let b = Mat::from_column_slice(2, 1, &[0.0, 1.0]);
        assert_eq!(controllability_rank(&double_integrator(), &b, TOL), 2);
    }

    #[test]
    fn zero_input_matrix_has_rank_zero() {
        let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -0.7]);
        assert_eq!(controllability_rank(&a, &Mat::zeros(2, 1), TOL), 0);
    }

    #[test]
    fn position_measurement_observes_double_integrator() {
        let c = Mat::from_row_slice(1, 2, &[1.0, 0.0]);
        assert_eq!(observability_rank(&double_integrator(), &c, TOL), 2);
    }

    #[test]
    fn decoupled_mode_is_unobservable() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let c = Mat::from_row_slice(1, 2, &[0.0, 1.0]);
        assert_eq!(observability_rank(&a, &c, TOL), 1);
    }
}
