//! Fixed (non-learned) upsampling.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpsampleAlgo {
    Nearest,
    /// Align-corners bilinear interpolation.
    Bilinear,
}

impl UpsampleAlgo {
    pub fn name(self) -> &'static str {
        match self {
            UpsampleAlgo::Nearest => "nearest",
            UpsampleAlgo::Bilinear => "bilinear",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(UpsampleAlgo::Nearest),
            "bilinear" => Ok(UpsampleAlgo::Bilinear),
            other => Err(Error::invalid(format!("unknown upsampling algorithm `{other}`"))),
        }
    }
}

/// Interpolation taps along one axis: for each output position, the two
/// source indices and the weight of the second.
fn taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    (0..n_out)
        .map(|i| {
            if n_in == 1 || n_out == 1 {
                return (0, 0, 0.0);
            }
            let pos = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
            let lo = (pos.floor() as usize).min(n_in - 1);
            let hi = (lo + 1).min(n_in - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

/// Resamples every channel plane to `oh x ow` with align-corners bilinear
/// interpolation. Shared by the upsampling layer and image resizing.
pub fn bilinear_resize<S: Scalar>(x: &Tensor<S>, oh: usize, ow: usize) -> Result<Tensor<S>> {
    let (c, h, w) = x.chw()?;
    if oh == 0 || ow == 0 {
        return Err(Error::shape("target extents must be positive"));
    }
    let rows = taps(h, oh);
    let cols = taps(w, ow);
    let mut y = Tensor::zeros(&[c, oh, ow]);
    for ch in 0..c {
        let src = x.plane(ch);
        let dst = y.plane_mut(ch);
        for (i, &(r0, r1, fr)) in rows.iter().enumerate() {
            let fr = S::lit(fr);
            for (j, &(c0, c1, fc)) in cols.iter().enumerate() {
                let fc = S::lit(fc);
                let top = src[r0 * w + c0] * (S::one() - fc) + src[r0 * w + c1] * fc;
                let bot = src[r1 * w + c0] * (S::one() - fc) + src[r1 * w + c1] * fc;
                dst[i * ow + j] = top * (S::one() - fr) + bot * fr;
            }
        }
    }
    Ok(y)
}

fn bilinear_resize_backward<S: Scalar>(in_shape: &[usize], grad_out: &Tensor<S>) -> Result<Tensor<S>> {
    let (c, oh, ow) = grad_out.chw()?;
    let (h, w) = (in_shape[1], in_shape[2]);
    let rows = taps(h, oh);
    let cols = taps(w, ow);
    let mut gx = Tensor::zeros(in_shape);
    for ch in 0..c {
        let g = grad_out.plane(ch);
        let dst = gx.plane_mut(ch);
        for (i, &(r0, r1, fr)) in rows.iter().enumerate() {
            let fr = S::lit(fr);
            for (j, &(c0, c1, fc)) in cols.iter().enumerate() {
                let fc = S::lit(fc);
                let v = g[i * ow + j];
                dst[r0 * w + c0] += v * (S::one() - fr) * (S::one() - fc);
                dst[r0 * w + c1] += v * (S::one() - fr) * fc;
                dst[r1 * w + c0] += v * fr * (S::one() - fc);
                dst[r1 * w + c1] += v * fr * fc;
            }
        }
    }
    Ok(gx)
}

pub fn upsample<S: Scalar>(x: &Tensor<S>, factor: usize, algo: UpsampleAlgo) -> Result<Tensor<S>> {
    if factor == 0 {
        return Err(Error::invalid("upsampling factor must be at least 1"));
    }
    let (c, h, w) = x.chw()?;
    let (oh, ow) = (h * factor, w * factor);
    match algo {
        UpsampleAlgo::Nearest => {
            let mut y = Tensor::zeros(&[c, oh, ow]);
            for ch in 0..c {
                let src = x.plane(ch);
                let dst = y.plane_mut(ch);
                for i in 0..oh {
                    for j in 0..ow {
                        dst[i * ow + j] = src[(i / factor) * w + j / factor];
                    }
                }
            }
            Ok(y)
        }
        UpsampleAlgo::Bilinear => bilinear_resize(x, oh, ow),
    }
}

pub fn upsample_backward<S: Scalar>(in_shape: &[usize], factor: usize, algo: UpsampleAlgo, grad_out: &Tensor<S>) -> Result<Tensor<S>> {
    let (c, oh, ow) = grad_out.chw()?;
    if in_shape.len() != 3 || in_shape[0] != c || in_shape[1] * factor != oh || in_shape[2] * factor != ow {
        return Err(Error::shape(format!(
            "upsample gradient {:?} inconsistent with input {in_shape:?} x{factor}",
            grad_out.shape()
        )));
    }
    match algo {
        UpsampleAlgo::Nearest => {
            let w = in_shape[2];
            let mut gx = Tensor::zeros(in_shape);
            for ch in 0..c {
                let g = grad_out.plane(ch);
                let dst = gx.plane_mut(ch);
                for i in 0..oh {
                    for j in 0..ow {
                        dst[(i / factor) * w + j / factor] += g[i * ow + j];
                    }
                }
            }
            Ok(gx)
        }
        UpsampleAlgo::Bilinear => bilinear_resize_backward(in_shape, grad_out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_difference_grad, relative_error};
    use crate::layers::pool::maxpool2d;
    use crate::rng::Rng;

    #[test]
    fn nearest_replicates() {
        let x = Tensor::<f32>::from_vec(&[1, 2, 2], vec![1., 2., 3., 4.]).unwrap();
        let y = upsample(&x, 2, UpsampleAlgo::Nearest).unwrap();
        assert_eq!(
            y.data(),
            &[1., 1., 2., 2., 1., 1., 2., 2., 3., 3., 4., 4., 3., 3., 4., 4.]
        );
    }

    #[test]
    fn bilinear_align_corners_1d() {
        let x = Tensor::<f64>::from_f64(&[1, 1, 2], &[1.0, 2.0]).unwrap();
        let y = bilinear_resize(&x, 1, 4).unwrap();
        let expect = [1.0, 4.0 / 3.0, 5.0 / 3.0, 2.0];
        for (a, b) in y.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn factor_one_is_identity() {
        let mut rng = Rng::new(1);
        let x = Tensor::<f32>::randn(&[2, 3, 4], 0.0, 1.0, &mut rng).unwrap();
        for algo in [UpsampleAlgo::Nearest, UpsampleAlgo::Bilinear] {
            assert!(upsample(&x, 1, algo).unwrap().bit_eq(&x));
        }
        assert!(upsample(&x, 0, UpsampleAlgo::Nearest).is_err());
    }

    #[test]
    fn nearest_then_pool_is_identity() {
        let mut rng = Rng::new(2);
        let x = Tensor::<f32>::randn(&[3, 5, 4], 0.0, 1.0, &mut rng).unwrap();
        let (y, _) = maxpool2d(&upsample(&x, 2, UpsampleAlgo::Nearest).unwrap(), 2, 2).unwrap();
        assert!(y.bit_eq(&x));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = Rng::new(3);
        let x = Tensor::<f64>::randn(&[2, 3, 3], 0.0, 1.0, &mut rng).unwrap();
        for algo in [UpsampleAlgo::Nearest, UpsampleAlgo::Bilinear] {
            let w = Tensor::<f64>::randn(&[2, 6, 6], 0.0, 1.0, &mut rng).unwrap();
            let g = upsample_backward(x.shape(), 2, algo, &w).unwrap();
            let fd = finite_difference_grad(|t| upsample(t, 2, algo)?.dot(&w), &x, 1e-5).unwrap();
            assert!(relative_error(&g, &fd).unwrap() < 1e-8);
        }
    }
}
