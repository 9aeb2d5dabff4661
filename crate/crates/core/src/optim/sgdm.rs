use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::graph::ParamRole;
use crate::scalar::Scalar;

/// Hyperparameters of momentum SGD. Defaults are the training-data
/// experiment settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdmConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub l2: f64,
    pub l1: f64,
    /// Multiplier applied to the learning rate by [`SgdmState::decay`].
    pub lr_decay: f64,
}

impl Default for SgdmConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.003,
            momentum: 0.9,
            l2: 0.0005,
            l1: 0.0,
            lr_decay: 1.0,
        }
    }
}

impl SgdmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning rate must be >= 0, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if !(self.l2 >= 0.0) || !(self.l1 >= 0.0) {
            return Err(Error::Config("L1/L2 factors must be >= 0".into()));
        }
        if !(self.lr_decay > 0.0) {
            return Err(Error::Config(format!("learning-rate decay must be > 0, got {}", self.lr_decay)));
        }
        Ok(())
    }
}

/// Velocity for every trainable parameter plus the current learning rate.
#[derive(Clone, Debug)]
pub struct SgdmState<S = f32> {
    pub velocity: Checkpoint<S>,
    pub learning_rate: f64,
    pub config: SgdmConfig,
}

impl<S: Scalar> SgdmState<S> {
    /// Zero velocity mirroring the trainable tensors of `params`
    /// (running statistics are not optimized).
    pub fn new(params: &Checkpoint<S>, config: SgdmConfig) -> Result<Self> {
        config.validate()?;
        let mut velocity = Checkpoint::new();
        for (name, t) in params.iter() {
            if ParamRole::of_name(name).is_none_or(|r| r.is_trainable()) {
                velocity.push(name, crate::tensor::Tensor::zeros_like(t))?;
            }
        }
        Ok(Self {
            velocity,
            learning_rate: config.learning_rate,
            config,
        })
    }

    /// Multiplies the learning rate by the configured decay factor.
    pub fn decay(&mut self) {
        self.learning_rate *= self.config.lr_decay;
    }
}

/// `g' = g + l2*w + l1*sign(w)` (decay on kernels only), `v = mu*v + g'`,
/// `w = w - lr*v`, for every tensor in `grads`.
pub fn sgdm_step<S: Scalar>(params: &mut Checkpoint<S>, grads: &Checkpoint<S>, state: &mut SgdmState<S>) -> Result<()> {
    if grads.len() != state.velocity.len() {
        return Err(Error::Contract(format!(
            "{} gradients for {} optimized tensors",
            grads.len(),
            state.velocity.len()
        )));
    }
    let mu = S::lit(state.config.momentum);
    let lr = S::lit(state.learning_rate);
    let l2 = S::lit(state.config.l2);
    let l1 = S::lit(state.config.l1);
    for (name, g) in grads.iter() {
        let v = state
            .velocity
            .get_mut(name)
            .ok_or_else(|| Error::Contract(format!("no velocity for gradient `{name}`")))?;
        let w = params
            .get_mut(name)
            .ok_or_else(|| Error::Contract(format!("no parameter for gradient `{name}`")))?;
        if w.shape() != g.shape() || v.shape() != g.shape() {
            return Err(Error::Contract(format!(
                "`{name}`: parameter {:?}, gradient {:?}, velocity {:?}",
                w.shape(),
                g.shape(),
                v.shape()
            )));
        }
        let decayed = ParamRole::of_name(name).is_some_and(|r| r.is_decayed());
        for ((wi, vi), &gi) in w.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
            let mut gp = gi;
            if decayed {
                gp += l2 * *wi;
                if *wi != S::zero() {
                    gp += l1 * wi.signum();
                }
            }
            *vi = mu * *vi + gp;
            *wi -= lr * *vi;
        }
    }
    Ok(())
}
