use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Central-difference gradient of a scalar function, one coordinate at a time:
/// `(f(x + h e_k) - f(x - h e_k)) / 2h`.
pub fn finite_diff_grad<F>(mut f: F, x: &Tensor, step: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid("finite-difference step", format!("{step} is not positive")));
    }
    let mut probe = x.clone();
    let mut grad = Vec::with_capacity(x.numel());
    for k in 0..x.numel() {
        let orig = x.data()[k];
        probe.data_mut()[k] = orig + step;
        let plus = f(&probe)?;
        probe.data_mut()[k] = orig - step;
        let minus = f(&probe)?;
        probe.data_mut()[k] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("finite-difference probe at coordinate {k}")));
        }
        grad.push((plus - minus) / (2.0 * step));
    }
    Tensor::new(x.shape().to_vec(), grad)
}

/// Probe step scaled to the input magnitude: `base * max(1, |x|_inf)`.
pub fn scaled_step(x: &Tensor, base: f64) -> f64 {
    base * x.max_abs().max(1.0)
}

/// `|a - b|_inf / max(|a|_inf, |b|_inf, floor)`.
pub fn relative_error(a: &Tensor, b: &Tensor, floor: f64) -> f64 {
    let diff = a.data().iter().zip(b.data()).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    diff / a.max_abs().max(b.max_abs()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares() {
        let x = Tensor::row(vec![1.0, 2.0]).unwrap();
        let g = finite_diff_grad(|t| Ok(t.data().iter().map(|v| v * v).sum()), &x, 1e-5).unwrap();
        assert!((g.data()[0] - 2.0).abs() < 1e-8);
        assert!((g.data()[1] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn constant_function() {
        let x = Tensor::row(vec![3.0, -1.0, 0.5]).unwrap();
        let g = finite_diff_grad(|_| Ok(7.0), &x, 1e-5).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_bad_step_and_non_finite() {
        let x = Tensor::row(vec![1.0]).unwrap();
        assert!(finite_diff_grad(|_| Ok(0.0), &x, 0.0).is_err());
        let err = finite_diff_grad(|_| Ok(f64::NAN), &x, 1e-5).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }
}
