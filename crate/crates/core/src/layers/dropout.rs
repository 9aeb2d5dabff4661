use crate::error::{Error, Result};
use crate::layers::batchnorm::Mode;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Inverted dropout. Returns the output and the per-element multiplier
/// (`0` or `1 / (1 - rate)`), which is also the backward mask.
pub fn dropout<S: Scalar>(x: &Tensor<S>, rate: f64, rng: &mut Rng, mode: Mode) -> Result<(Tensor<S>, Tensor<S>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    if mode == Mode::Infer || rate == 0.0 {
        let ones = Tensor::new(x.shape(), S::one())?;
        return Ok((x.clone(), ones));
    }
    let keep = S::lit(1.0 / (1.0 - rate));
    let mut mask = Tensor::zeros_like(x);
    for m in mask.data_mut() {
        if !rng.bernoulli(rate) {
            *m = keep;
        }
    }
    let y = x.mul(&mask)?;
    Ok((y, mask))
}

pub fn dropout_backward<S: Scalar>(mask: &Tensor<S>, grad_out: &Tensor<S>) -> Result<Tensor<S>> {
    mask.mul(grad_out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_cases() {
        let mut rng = Rng::new(1);
        let x = Tensor::<f32>::randn(&[1, 4, 4], 0.0, 1.0, &mut rng).unwrap();
        assert!(dropout(&x, 0.0, &mut rng, Mode::Train).unwrap().0.bit_eq(&x));
        assert!(dropout(&x, 0.7, &mut rng, Mode::Infer).unwrap().0.bit_eq(&x));
        assert!(matches!(
            dropout(&x, 1.0, &mut rng, Mode::Train),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn zero_fraction_concentrates() {
        let mut rng = Rng::new(2);
        let x = Tensor::<f32>::new(&[1, 100, 100], 1.0).unwrap();
        let (y, mask) = dropout(&x, 0.5, &mut rng, Mode::Train).unwrap();
        let zeros = y.data().iter().filter(|v| **v == 0.0).count() as f64 / 1e4;
        assert!((zeros - 0.5).abs() < 0.02, "{zeros}");
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
        let g = dropout_backward(&mask, &x).unwrap();
        assert!(g.bit_eq(&y));
    }
}
