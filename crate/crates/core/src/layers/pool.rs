//! Max pooling with argmax routing.
//!
//! Windows that overhang the bottom/right edge treat the missing cells as
//! negative infinity, so a 2x2/2 pool maps an extent `n` to `ceil(n / 2)`.
//! Ties go to the first element in row-major window order.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Flat input offset of the winning element for every output element.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolIndexMap {
    pub input_shape: Vec<usize>,
    pub indices: Vec<usize>,
}

pub fn pooled_extent(n: usize, window: usize, stride: usize) -> usize {
    if n <= window {
        1
    } else {
        (n - window).div_ceil(stride) + 1
    }
}

pub fn maxpool2d<S: Scalar>(x: &Tensor<S>, window: usize, stride: usize) -> Result<(Tensor<S>, PoolIndexMap)> {
    if window == 0 || stride == 0 {
        return Err(Error::invalid("pool window and stride must be at least 1"));
    }
    let (c, h, w) = x.chw()?;
    let (oh, ow) = (pooled_extent(h, window, stride), pooled_extent(w, window, stride));
    let mut y = Tensor::zeros(&[c, oh, ow]);
    let mut indices = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let plane = x.plane(ch);
        let out = y.plane_mut(ch);
        for i in 0..oh {
            for j in 0..ow {
                let mut best = S::neg_infinity();
                let mut arg = usize::MAX;
                for di in 0..window {
                    let r = i * stride + di;
                    if r >= h {
                        break;
                    }
                    for dj in 0..window {
                        let col = j * stride + dj;
                        if col >= w {
                            break;
                        }
                        let v = plane[r * w + col];
                        if arg == usize::MAX || v > best {
                            best = v;
                            arg = r * w + col;
                        }
                    }
                }
                out[i * ow + j] = best;
                indices.push(ch * h * w + arg);
            }
        }
    }
    Ok((
        y,
        PoolIndexMap {
            input_shape: x.shape().to_vec(),
            indices,
        },
    ))
}

/// Routes each output gradient to its argmax input; zeros elsewhere.
pub fn maxpool2d_backward<S: Scalar>(map: &PoolIndexMap, grad_out: &Tensor<S>) -> Result<Tensor<S>> {
    if grad_out.len() != map.indices.len() {
        return Err(Error::shape(format!(
            "pool gradient has {} elements, index map {}",
            grad_out.len(),
            map.indices.len()
        )));
    }
    let mut gx = Tensor::zeros(&map.input_shape);
    let data = gx.data_mut();
    for (&idx, &g) in map.indices.iter().zip(grad_out.data()) {
        data[idx] += g;
    }
    Ok(gx)
}
