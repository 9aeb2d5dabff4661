use super::Checkpoint;
use crate::error::Result;
use crate::graph::{GraphSpec, ParamRole, ParamSpec};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// He initialization scale `sqrt(2 / fan_in)`.
pub fn he_stddev(fan_in: usize) -> f64 {
    (2.0 / fan_in.max(1) as f64).sqrt()
}

/// Fresh value of one parameter. Kernels draw from their own child stream
/// of `rng`, so the result does not depend on which other tensors exist.
pub(crate) fn init_param<S: Scalar>(p: &ParamSpec, rng: &Rng) -> Result<Tensor<S>> {
    match p.role {
        ParamRole::Kernel => {
            let mut r = rng.child(&p.name, 0);
            Tensor::randn(&p.shape, S::zero(), S::lit(he_stddev(p.fan_in)), &mut r)
        }
        ParamRole::Gamma | ParamRole::RunningVar => Tensor::new(&p.shape, S::one()),
        ParamRole::Bias | ParamRole::Beta | ParamRole::RunningMean => Ok(Tensor::zeros(&p.shape)),
    }
}

/// Random initialization of every parameter of `spec`: He-normal kernels,
/// zero biases, `gamma = 1`, `beta = 0`, running mean 0 and variance 1.
pub fn scratch_init<S: Scalar>(spec: &GraphSpec, rng: &Rng) -> Result<Checkpoint<S>> {
    let mut ckpt = Checkpoint::new();
    for p in spec.param_specs()? {
        let t = init_param(&p, rng)?;
        ckpt.push(p.name, t)?;
    }
    ckpt.metadata.arch = spec.to_text();
    ckpt.metadata.seed = rng.seed();
    Ok(ckpt)
}
