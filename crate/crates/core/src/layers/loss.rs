//! Class-weighted pixel cross-entropy over the two scored classes, with
//! background pixels masked out.

use crate::error::{Error, Result};
use crate::label::{LabelMap, BACKGROUND, LESION, SKIN};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Clone, Debug)]
pub struct LossOutput<S = f32> {
    pub loss: S,
    /// Gradient with respect to the `2 x H x W` logits.
    pub grad: Tensor<S>,
    /// Number of non-background pixels that contributed.
    pub valid_pixels: usize,
}

impl<S> LossOutput<S> {
    /// True when every pixel was background, so no learning signal exists.
    pub fn is_empty_sample(&self) -> bool {
        self.valid_pixels == 0
    }
}

/// Softmax over the two logit channels, returning `(p_skin, p_lesion)`.
#[inline]
pub fn softmax2<S: Scalar>(z_skin: S, z_lesion: S) -> (S, S) {
    let p_lesion = S::one() / (S::one() + (z_skin - z_lesion).exp());
    (S::one() - p_lesion, p_lesion)
}

/// `loss = -(1/N) * sum_valid w[label] * log p[label]`, with `p` clamped to
/// `[1e-7, 1 - 1e-7]` and `N` the number of non-background pixels.
pub fn weighted_pixel_cross_entropy<S: Scalar>(
    logits: &Tensor<S>,
    labels: &LabelMap,
    class_weights: [S; 2],
) -> Result<LossOutput<S>> {
    let (c, h, w) = logits.chw()?;
    if c != 2 {
        return Err(Error::shape(format!("loss expects 2 logit channels, got {c}")));
    }
    if labels.dims() != (h, w) {
        return Err(Error::shape(format!(
            "labels {:?} do not match logits {h}x{w}",
            labels.dims()
        )));
    }
    if class_weights.iter().any(|&v| !(v >= S::zero())) {
        return Err(Error::invalid("class weights must be non-negative"));
    }
    let valid = labels.valid_pixels();
    let mut grad = Tensor::zeros_like(logits);
    if valid == 0 {
        return Ok(LossOutput {
            loss: S::zero(),
            grad,
            valid_pixels: 0,
        });
    }
    let hw = h * w;
    let inv_n = S::one() / S::lit(valid as f64);
    let (lo, hi) = (S::lit(PROB_CLAMP), S::lit(1.0 - PROB_CLAMP));
    let z = logits.data();
    let g = grad.data_mut();
    let mut total = 0.0f64;
    for (px, &label) in labels.data().iter().enumerate() {
        let k = match label {
            BACKGROUND => continue,
            SKIN => 0,
            LESION => 1,
            _ => unreachable!("label maps hold only 0, 1, 2"),
        };
        let (p0, p1) = softmax2(z[px], z[hw + px]);
        let p = [p0, p1];
        let wk = class_weights[k];
        let pk = p[k];
        let clamped = pk < lo || pk > hi;
        total += (wk * -pk.max(lo).min(hi).ln()).as_f64();
        if !clamped {
            for (j, &pj) in p.iter().enumerate() {
                let onehot = if j == k { S::one() } else { S::zero() };
                g[j * hw + px] = wk * (pj - onehot) * inv_n;
            }
        }
    }
    Ok(LossOutput {
        loss: S::lit(total / valid as f64),
        grad,
        valid_pixels: valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_difference_grad, relative_error};
    use crate::rng::Rng;

    #[test]
    fn perfect_prediction_near_zero() {
        let labels = LabelMap::new(1, 2, vec![1, 2]).unwrap();
        let logits = Tensor::<f32>::from_vec(&[2, 1, 2], vec![40.0, -40.0, -40.0, 40.0]).unwrap();
        let out = weighted_pixel_cross_entropy(&logits, &labels, [1.0, 1.0]).unwrap();
        assert!(out.loss <= 1e-6);
    }

    #[test]
    fn uniform_logits_give_ln2() {
        let labels = LabelMap::filled(3, 3, SKIN).unwrap();
        let logits = Tensor::<f64>::zeros(&[2, 3, 3]);
        let out = weighted_pixel_cross_entropy(&logits, &labels, [1.0, 1.0]).unwrap();
        assert!((out.loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn all_background_is_empty() {
        let labels = LabelMap::filled(2, 2, BACKGROUND).unwrap();
        let mut rng = Rng::new(1);
        let logits = Tensor::<f32>::randn(&[2, 2, 2], 0.0, 1.0, &mut rng).unwrap();
        let out = weighted_pixel_cross_entropy(&logits, &labels, [1.0, 3.0]).unwrap();
        assert_eq!(out.loss, 0.0);
        assert_eq!(out.grad.max_abs(), 0.0);
        assert!(out.is_empty_sample());
    }

    #[test]
    fn background_logits_do_not_matter() {
        let mut rng = Rng::new(2);
        let labels = LabelMap::new(2, 2, vec![0, 1, 2, 0]).unwrap();
        let a = Tensor::<f32>::randn(&[2, 2, 2], 0.0, 1.0, &mut rng).unwrap();
        let mut b = a.clone();
        for px in [0, 3] {
            b.data_mut()[px] = 9.0;
            b.data_mut()[4 + px] = -3.0;
        }
        let la = weighted_pixel_cross_entropy(&a, &labels, [1.0, 2.0]).unwrap();
        let lb = weighted_pixel_cross_entropy(&b, &labels, [1.0, 2.0]).unwrap();
        assert_eq!(la.loss, lb.loss);
        assert!(la.grad.bit_eq(&lb.grad));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = Rng::new(3);
        let labels = LabelMap::new(3, 3, vec![0, 1, 2, 2, 1, 1, 0, 2, 1]).unwrap();
        let logits = Tensor::<f64>::randn(&[2, 3, 3], 0.0, 1.0, &mut rng).unwrap();
        let out = weighted_pixel_cross_entropy(&logits, &labels, [0.6, 2.5]).unwrap();
        let fd = finite_difference_grad(
            |z| Ok(weighted_pixel_cross_entropy(z, &labels, [0.6, 2.5])?.loss),
            &logits,
            1e-5,
        )
        .unwrap();
        assert!(relative_error(&out.grad, &fd).unwrap() < 1e-7);
    }

    #[test]
    fn shape_checks() {
        let labels = LabelMap::filled(2, 2, SKIN).unwrap();
        assert!(weighted_pixel_cross_entropy(&Tensor::<f32>::zeros(&[3, 2, 2]), &labels, [1.0, 1.0]).is_err());
        assert!(weighted_pixel_cross_entropy(&Tensor::<f32>::zeros(&[2, 2, 3]), &labels, [1.0, 1.0]).is_err());
    }
}
