//! Central finite differences, the oracle for every analytic backward pass.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Central-difference gradient of a scalar function:
/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every element `i`.
pub fn finite_difference_grad<S, F>(mut f: F, x: &Tensor<S>, h: S) -> Result<Tensor<S>>
where
    S: Scalar,
    F: FnMut(&Tensor<S>) -> Result<S>,
{
    if !(h > S::zero()) {
        return Err(Error::invalid(format!("step must be positive, got {h}")));
    }
    let mut probe = x.clone();
    let mut grad = Tensor::zeros_like(x);
    let two_h = h + h;
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let down = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite function value while probing element {i}"
            )));
        }
        grad.data_mut()[i] = (up - down) / two_h;
    }
    Ok(grad)
}

/// Norm-wise relative error `|a - b| / max(|a|, |b|)`, with an absolute
/// floor so that two near-zero gradients compare as equal.
pub fn relative_error<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<f64> {
    let diff = a.sub(b)?.norm().as_f64();
    let scale = a.norm().as_f64().max(b.norm().as_f64());
    if scale < 1e-12 {
        return Ok(diff);
    }
    Ok(diff / scale)
}
