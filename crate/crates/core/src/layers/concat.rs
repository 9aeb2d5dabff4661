//! Channel concatenation, elementwise addition and spatial cropping, the
//! tensor plumbing of skip connections.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn concat_channels<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    let (ca, ha, wa) = a.chw()?;
    let (cb, hb, wb) = b.chw()?;
    if (ha, wa) != (hb, wb) {
        return Err(Error::shape(format!(
            "cannot concatenate {ha}x{wa} with {hb}x{wb}"
        )));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::from_vec(&[ca + cb, ha, wa], data)
}

/// Splits a gradient (or tensor) along channels at `first_channels`.
pub fn split_channels<S: Scalar>(t: &Tensor<S>, first_channels: usize) -> Result<(Tensor<S>, Tensor<S>)> {
    let (c, h, w) = t.chw()?;
    if first_channels == 0 || first_channels >= c {
        return Err(Error::shape(format!(
            "cannot split {c} channels at {first_channels}"
        )));
    }
    let cut = first_channels * h * w;
    Ok((
        Tensor::from_vec(&[first_channels, h, w], t.data()[..cut].to_vec())?,
        Tensor::from_vec(&[c - first_channels, h, w], t.data()[cut..].to_vec())?,
    ))
}

/// Keeps the top-left `h x w` window of every channel.
pub fn crop_spatial<S: Scalar>(x: &Tensor<S>, h: usize, w: usize) -> Result<Tensor<S>> {
    let (c, xh, xw) = x.chw()?;
    if h > xh || w > xw || h == 0 || w == 0 {
        return Err(Error::shape(format!("cannot crop {xh}x{xw} to {h}x{w}")));
    }
    if (h, w) == (xh, xw) {
        return Ok(x.clone());
    }
    let mut data = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        let p = x.plane(ch);
        for r in 0..h {
            data.extend_from_slice(&p[r * xw..r * xw + w]);
        }
    }
    Tensor::from_vec(&[c, h, w], data)
}

/// Adjoint of [`crop_spatial`]: zero-pads the gradient back to `in_shape`.
pub fn crop_spatial_backward<S: Scalar>(in_shape: &[usize], grad_out: &Tensor<S>) -> Result<Tensor<S>> {
    let (c, h, w) = grad_out.chw()?;
    if in_shape.len() != 3 || in_shape[0] != c || in_shape[1] < h || in_shape[2] < w {
        return Err(Error::shape(format!(
            "crop gradient {:?} inconsistent with input {in_shape:?}",
            grad_out.shape()
        )));
    }
    let xw = in_shape[2];
    let mut gx = Tensor::zeros(in_shape);
    for ch in 0..c {
        let g = grad_out.plane(ch);
        let dst = gx.plane_mut(ch);
        for r in 0..h {
            dst[r * xw..r * xw + w].copy_from_slice(&g[r * w..(r + 1) * w]);
        }
    }
    Ok(gx)
}
