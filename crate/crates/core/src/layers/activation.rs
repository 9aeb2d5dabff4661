use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn relu<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    x.map(|v| if v > S::zero() { v } else { S::zero() })
}

/// Passes gradient where the input was positive.
pub fn relu_backward<S: Scalar>(x: &Tensor<S>, grad_out: &Tensor<S>) -> Result<Tensor<S>> {
    x.zip_map(grad_out, |v, g| if v > S::zero() { g } else { S::zero() })
}

pub fn sigmoid<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    x.map(|v| S::one() / (S::one() + (-v).exp()))
}

/// Uses the forward output: `dy/dx = y (1 - y)`.
pub fn sigmoid_backward<S: Scalar>(y: &Tensor<S>, grad_out: &Tensor<S>) -> Result<Tensor<S>> {
    y.zip_map(grad_out, |s, g| g * s * (S::one() - s))
}
