use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;

/// `|analytic - numeric| / max(|numeric|, 1e-7)`.
///
/// Normalising by the numeric estimate makes a gradient that is off by a
/// factor of two score 1.0.
pub fn relative_error<T: Scalar>(analytic: T, numeric: T) -> T {
    (analytic - numeric).abs() / numeric.abs().max(T::of(1e-7))
}

/// Compare `grad` against central differences of `f` at `point` on every
/// coordinate; returns the worst relative error.
pub fn grad_check<T, F>(f: F, grad: &[T], point: &[T], step: T) -> Result<T>
where
    T: Scalar,
    F: Fn(&[T]) -> Result<T>,
{
    let coords: Vec<usize> = (0..point.len()).collect();
    grad_check_coords(f, grad, point, step, &coords)
}

/// As [`grad_check`], restricted to the listed coordinates.
pub fn grad_check_coords<T, F>(f: F, grad: &[T], point: &[T], step: T, coords: &[usize]) -> Result<T>
where
    T: Scalar,
    F: Fn(&[T]) -> Result<T>,
{
    check_len(point.len(), grad.len())?;
    let mut x = point.to_vec();
    let mut worst = T::zero();
    let two = T::of(2.0);
    for &i in coords {
        if i >= x.len() {
            return Err(Error::Shape {
                expected: x.len(),
                got: i + 1,
            });
        }
        let orig = x[i];
        x[i] = orig + step;
        let up = f(&x)?;
        x[i] = orig - step;
        let down = f(&x)?;
        x[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("function evaluation at coordinate {i}")));
        }
        let numeric = (up - down) / (two * step);
        worst = worst.max(relative_error(grad[i], numeric));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let err = grad_check(|x: &[f64]| Ok(x[0] * x[0]), &[6.0], &[3.0], 1e-5).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn wrong_gradient_detected() {
        let err = grad_check(|x: &[f64]| Ok(x[0] * x[0] + x[1].sin()), &[12.0, 2.0 * 0.5f64.cos()], &[3.0, 0.5], 1e-5)
            .unwrap();
        assert!((err - 1.0).abs() < 1e-6, "{err}");
    }

    #[test]
    fn non_finite_evaluation_is_error() {
        let r = grad_check(|x: &[f64]| Ok(1.0 / x[0]), &[0.0], &[0.0], 1e-5);
        assert!(r.is_ok());
        let r = grad_check(|x: &[f64]| Ok(x[0].ln()), &[1e5], &[0.0], 1e-5);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }
}
