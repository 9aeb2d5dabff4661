use super::clamp01;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Additive and multiplicative noise models. Default strengths are those
/// of the augmented training set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseKind {
    /// `x + n`, `n ~ N(0, variance)`.
    Gaussian { variance: f64 },
    /// `x + n`, `n ~ N(0, variance * x / mean(x))`.
    LocalVariance { variance: f64 },
    /// `Poisson(255 x) / 255`.
    Poisson,
    /// `x + x n`, `n ~ N(0, variance)`.
    Speckle { variance: f64 },
    /// Each value replaced by 0 or 1 (equal odds) with probability `density`.
    SaltPepper { density: f64 },
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 5] = [
        NoiseKind::Gaussian { variance: 0.01 },
        NoiseKind::LocalVariance { variance: 0.01 },
        NoiseKind::Poisson,
        NoiseKind::Speckle { variance: 0.04 },
        NoiseKind::SaltPepper { density: 0.05 },
    ];

    pub fn name(&self) -> &'static str {
        match self {
            NoiseKind::Gaussian { .. } => "gaussian",
            NoiseKind::LocalVariance { .. } => "localvar",
            NoiseKind::Poisson => "poisson",
            NoiseKind::Speckle { .. } => "speckle",
            NoiseKind::SaltPepper { .. } => "saltpepper",
        }
    }

    /// Parses `name` or `name:strength`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, strength) = match s.split_once(':') {
            Some((n, v)) => (
                n,
                Some(
                    v.parse::<f64>()
                        .map_err(|_| Error::invalid(format!("bad noise strength in `{s}`")))?,
                ),
            ),
            None => (s, None),
        };
        let base = NoiseKind::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::invalid(format!("unknown noise kind `{name}`")))?;
        Ok(match (base, strength) {
            (k, None) => k,
            (NoiseKind::Gaussian { .. }, Some(v)) => NoiseKind::Gaussian { variance: v },
            (NoiseKind::LocalVariance { .. }, Some(v)) => NoiseKind::LocalVariance { variance: v },
            (NoiseKind::Speckle { .. }, Some(v)) => NoiseKind::Speckle { variance: v },
            (NoiseKind::SaltPepper { .. }, Some(v)) => NoiseKind::SaltPepper { density: v },
            (NoiseKind::Poisson, Some(_)) => return Err(Error::invalid("poisson noise takes no strength")),
        })
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseKind::Gaussian { variance } | NoiseKind::LocalVariance { variance } | NoiseKind::Speckle { variance } => {
                variance >= 0.0 && variance.is_finite()
            }
            NoiseKind::SaltPepper { density } => (0.0..=1.0).contains(&density),
            NoiseKind::Poisson => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid strength for {} noise", self.name())))
        }
    }
}

/// Applies one noise draw and clamps the result to `[0, 1]`.
pub fn add_noise(image: &Tensor<f32>, kind: NoiseKind, rng: &mut Rng) -> Result<Tensor<f32>> {
    kind.validate()?;
    let mut out = image.clone();
    match kind {
        NoiseKind::Gaussian { variance } => {
            let sd = variance.sqrt();
            if sd == 0.0 {
                return Ok(out);
            }
            for v in out.data_mut() {
                *v = clamp01(*v + (sd * rng.normal()) as f32);
            }
        }
        NoiseKind::LocalVariance { variance } => {
            let mean = image.mean() as f64;
            if mean <= 0.0 || variance == 0.0 {
                return Ok(out);
            }
            for v in out.data_mut() {
                let sd = (variance * (*v as f64).max(0.0) / mean).sqrt();
                *v = clamp01(*v + (sd * rng.normal()) as f32);
            }
        }
        NoiseKind::Poisson => {
            for v in out.data_mut() {
                let lambda = 255.0 * (*v as f64).max(0.0);
                *v = clamp01((rng.poisson(lambda) / 255.0) as f32);
            }
        }
        NoiseKind::Speckle { variance } => {
            let sd = variance.sqrt();
            for v in out.data_mut() {
                *v = clamp01(*v + *v * (sd * rng.normal()) as f32);
            }
        }
        NoiseKind::SaltPepper { density } => {
            for v in out.data_mut() {
                if rng.bernoulli(density) {
                    *v = if rng.bernoulli(0.5) { 1.0 } else { 0.0 };
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(v: f32, n: usize) -> Tensor<f32> {
        Tensor::new(&[1, 1, n], v).unwrap()
    }

    fn variance(a: &Tensor<f32>, b: &Tensor<f32>) -> f64 {
        let d: Vec<f64> = a.data().iter().zip(b.data()).map(|(&x, &y)| (x - y) as f64).collect();
        let m = d.iter().sum::<f64>() / d.len() as f64;
        d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / d.len() as f64
    }

    #[test]
    fn zero_variance_gaussian_is_identity() {
        let img = Tensor::rand_uniform(&[3, 4, 4], 0.0, 1.0, &mut Rng::new(1)).unwrap();
        let out = add_noise(&img, NoiseKind::Gaussian { variance: 0.0 }, &mut Rng::new(2)).unwrap();
        assert!(out.bit_eq(&img));
    }

    #[test]
    fn local_variance_scales_with_intensity() {
        // mean intensity 0.5 -> pixels at 0.25 get variance 0.005
        let mut data = vec![0.25f32; 50_000];
        data.extend(vec![0.75f32; 50_000]);
        let img = Tensor::from_vec(&[1, 1, 100_000], data).unwrap();
        let out = add_noise(&img, NoiseKind::LocalVariance { variance: 0.01 }, &mut Rng::new(3)).unwrap();
        let lo = Tensor::from_vec(&[50_000], out.data()[..50_000].to_vec()).unwrap();
        let v = variance(&lo, &Tensor::new(&[50_000], 0.25).unwrap());
        assert!((v / 0.005 - 1.0).abs() < 0.1, "{v}");
    }

    #[test]
    fn poisson_mean_is_preserved() {
        let img = constant(0.4, 100_000);
        let out = add_noise(&img, NoiseKind::Poisson, &mut Rng::new(4)).unwrap();
        assert!((out.mean() - 0.4).abs() < 1e-3);
        // Var = 255 x / 255^2
        let v = variance(&out, &img);
        assert!((v / (0.4 / 255.0) - 1.0).abs() < 0.1, "{v}");
    }

    #[test]
    fn parse_names_and_strengths() {
        assert_eq!(NoiseKind::parse("speckle").unwrap(), NoiseKind::Speckle { variance: 0.04 });
        assert_eq!(NoiseKind::parse("gaussian:0.02").unwrap(), NoiseKind::Gaussian { variance: 0.02 });
        assert!(NoiseKind::parse("pink").is_err());
        assert!(NoiseKind::parse("poisson:1").is_err());
        assert!(add_noise(&constant(0.5, 3), NoiseKind::SaltPepper { density: 2.0 }, &mut Rng::new(0)).is_err());
    }
}
