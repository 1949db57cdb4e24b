use super::{Mat, NumericsError, Vector};

fn checked(v: Vector) -> Result<Vector, NumericsError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(NumericsError::NonFiniteDerivative)
    }
}

/// One classical fourth-order Runge–Kutta step of `ẋ = f(x)`.
pub fn rk4_step<F>(f: F, x: &Vector, dt: f64) -> Result<Vector, NumericsError>
where
    F: Fn(&Vector) -> Vector,
{
    let half = 0.5 * dt;
    let k1 = checked(f(x))?;
    let k2 = checked(f(&(x + &k1 * half)))?;
    let k3 = checked(f(&(x + &k2 * half)))?;
    let k4 = checked(f(&(x + &k3 * dt)))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Central-difference Jacobian of `f` at `x`.
///
/// Each column uses the step `eps · max(1, |xⱼ|)`.
pub fn jacobian_fd<F>(f: F, x: &Vector, eps: f64) -> Result<Mat, NumericsError>
where
    F: Fn(&Vector) -> Vector,
{
    let rows = checked(f(x))?.len();
    let mut jac = Mat::zeros(rows, x.len());
    let mut probe = x.clone();
    for j in 0..x.len() {
        let h = eps * x[j].abs().max(1.0);
        probe[j] = x[j] + h;
        let plus = checked(f(&probe))?;
        probe[j] = x[j] - h;
        let minus = checked(f(&probe))?;
        probe[j] = x[j];
        jac.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    Ok(jac)
}
