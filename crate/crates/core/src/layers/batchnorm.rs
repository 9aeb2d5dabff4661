//! Batch normalization over the spatial positions of each channel.
//!
//! With one sample per mini-batch the batch statistics are the per-channel
//! spatial mean and (biased) variance of that sample.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_STAT_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Clone, Debug)]
pub struct BatchNormParams<S = f32> {
    pub gamma: Tensor<S>,
    pub beta: Tensor<S>,
    pub running_mean: Tensor<S>,
    pub running_var: Tensor<S>,
    pub epsilon: S,
    pub momentum_stat: S,
}

impl<S: Scalar> BatchNormParams<S> {
    /// Identity transform for `channels` channels: `gamma = 1`, `beta = 0`,
    /// running mean 0 and running variance 1.
    pub fn identity(channels: usize) -> Self {
        Self {
            gamma: Tensor::new(&[channels], S::one()).expect("channels >= 1"),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::new(&[channels], S::one()).expect("channels >= 1"),
            epsilon: S::lit(DEFAULT_EPSILON),
            momentum_stat: S::lit(DEFAULT_STAT_MOMENTUM),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn validate(&self, channels: usize) -> Result<()> {
        for (name, t) in [
            ("gamma", &self.gamma),
            ("beta", &self.beta),
            ("running_mean", &self.running_mean),
            ("running_var", &self.running_var),
        ] {
            if t.shape() != [channels] {
                return Err(Error::shape(format!(
                    "batch-norm {name} has shape {:?}, input has {channels} channels",
                    t.shape()
                )));
            }
        }
        if !(self.epsilon > S::zero()) {
            return Err(Error::invalid("batch-norm epsilon must be positive"));
        }
        Ok(())
    }
}

/// Values kept from a training-mode forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache<S = f32> {
    /// Normalized input `(x - mean) / sqrt(var + eps)`.
    pub x_hat: Tensor<S>,
    /// `1 / sqrt(var + eps)` per channel.
    pub inv_std: Vec<S>,
    pub batch_mean: Vec<S>,
    pub batch_var: Vec<S>,
}

/// Output plus, in training mode, the cache and the updated running statistics.
#[derive(Clone, Debug)]
pub struct BatchNormOutput<S = f32> {
    pub y: Tensor<S>,
    pub cache: Option<BatchNormCache<S>>,
    pub running_mean: Tensor<S>,
    pub running_var: Tensor<S>,
}

pub fn batchnorm_forward<S: Scalar>(x: &Tensor<S>, p: &BatchNormParams<S>, mode: Mode) -> Result<BatchNormOutput<S>> {
    let (c, h, w) = x.chw()?;
    p.validate(c)?;
    let n = S::lit((h * w) as f64);
    let mut y = Tensor::zeros_like(x);
    match mode {
        Mode::Infer => {
            for ch in 0..c {
                let inv = S::one() / (p.running_var.data()[ch] + p.epsilon).sqrt();
                let (g, b, m) = (p.gamma.data()[ch], p.beta.data()[ch], p.running_mean.data()[ch]);
                for (o, &v) in y.plane_mut(ch).iter_mut().zip(x.plane(ch)) {
                    *o = g * (v - m) * inv + b;
                }
            }
            Ok(BatchNormOutput {
                y,
                cache: None,
                running_mean: p.running_mean.clone(),
                running_var: p.running_var.clone(),
            })
        }
        Mode::Train => {
            let mut x_hat = Tensor::zeros_like(x);
            let mut inv_std = Vec::with_capacity(c);
            let mut batch_mean = Vec::with_capacity(c);
            let mut batch_var = Vec::with_capacity(c);
            let mut rm = p.running_mean.clone();
            let mut rv = p.running_var.clone();
            let mom = p.momentum_stat;
            for ch in 0..c {
                let plane = x.plane(ch);
                let mean = plane.iter().copied().sum::<S>() / n;
                let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / n;
                let inv = S::one() / (var + p.epsilon).sqrt();
                let (g, b) = (p.gamma.data()[ch], p.beta.data()[ch]);
                for ((o, xh), &v) in y
                    .plane_mut(ch)
                    .iter_mut()
                    .zip(x_hat.plane_mut(ch).iter_mut())
                    .zip(plane)
                {
                    *xh = (v - mean) * inv;
                    *o = g * *xh + b;
                }
                rm.data_mut()[ch] = (S::one() - mom) * rm.data()[ch] + mom * mean;
                rv.data_mut()[ch] = (S::one() - mom) * rv.data()[ch] + mom * var;
                inv_std.push(inv);
                batch_mean.push(mean);
                batch_var.push(var);
            }
            Ok(BatchNormOutput {
                y,
                cache: Some(BatchNormCache {
                    x_hat,
                    inv_std,
                    batch_mean,
                    batch_var,
                }),
                running_mean: rm,
                running_var: rv,
            })
        }
    }
}

#[derive(Clone, Debug)]
pub struct BatchNormGrads<S = f32> {
    pub input: Tensor<S>,
    pub gamma: Tensor<S>,
    pub beta: Tensor<S>,
}

/// Backward of the training-mode transform (batch statistics depend on `x`).
pub fn batchnorm_backward<S: Scalar>(
    cache: &BatchNormCache<S>,
    gamma: &Tensor<S>,
    grad_out: &Tensor<S>,
) -> Result<BatchNormGrads<S>> {
    cache.x_hat.same_shape(grad_out)?;
    let (c, h, w) = grad_out.chw()?;
    let n = S::lit((h * w) as f64);
    let mut gx = Tensor::zeros_like(grad_out);
    let mut gg = Tensor::zeros(&[c]);
    let mut gb = Tensor::zeros(&[c]);
    for ch in 0..c {
        let dy = grad_out.plane(ch);
        let xh = cache.x_hat.plane(ch);
        let sum_dy: S = dy.iter().copied().sum();
        let sum_dy_xh: S = dy.iter().zip(xh).map(|(&a, &b)| a * b).sum();
        gg.data_mut()[ch] = sum_dy_xh;
        gb.data_mut()[ch] = sum_dy;
        let k = gamma.data()[ch] * cache.inv_std[ch] / n;
        for ((o, &d), &xv) in gx.plane_mut(ch).iter_mut().zip(dy).zip(xh) {
            *o = k * (n * d - sum_dy - xv * sum_dy_xh);
        }
    }
    Ok(BatchNormGrads {
        input: gx,
        gamma: gg,
        beta: gb,
    })
}

/// Backward of the inference-mode transform (a per-channel affine map).
pub fn batchnorm_backward_infer<S: Scalar>(
    x: &Tensor<S>,
    p: &BatchNormParams<S>,
    grad_out: &Tensor<S>,
) -> Result<BatchNormGrads<S>> {
    x.same_shape(grad_out)?;
    let (c, _, _) = x.chw()?;
    p.validate(c)?;
    let mut gx = Tensor::zeros_like(x);
    let mut gg = Tensor::zeros(&[c]);
    let mut gb = Tensor::zeros(&[c]);
    for ch in 0..c {
        let inv = S::one() / (p.running_var.data()[ch] + p.epsilon).sqrt();
        let m = p.running_mean.data()[ch];
        let g = p.gamma.data()[ch];
        let mut sg = S::zero();
        let mut sb = S::zero();
        for ((o, &d), &v) in gx.plane_mut(ch).iter_mut().zip(grad_out.plane(ch)).zip(x.plane(ch)) {
            *o = g * inv * d;
            sg += d * (v - m) * inv;
            sb += d;
        }
        gg.data_mut()[ch] = sg;
        gb.data_mut()[ch] = sb;
    }
    Ok(BatchNormGrads {
        input: gx,
        gamma: gg,
        beta: gb,
    })
}
