use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Patience counter over validation checks (higher metric is better).
#[derive(Clone, Debug)]
pub struct EarlyStopState<S = f32> {
    pub patience: usize,
    pub best_metric: f64,
    /// 1-based index of the check that produced `best_metric`.
    pub best_check: usize,
    pub checks: usize,
    pub checks_since_best: usize,
    pub best_checkpoint: Option<Checkpoint<S>>,
}

impl<S: Scalar> EarlyStopState<S> {
    pub fn new(patience: usize) -> Result<Self> {
        if patience == 0 {
            return Err(Error::Config("validation patience must be positive".into()));
        }
        Ok(Self {
            patience,
            best_metric: f64::NEG_INFINITY,
            best_check: 0,
            checks: 0,
            checks_since_best: 0,
            best_checkpoint: None,
        })
    }

    /// Records one validation check. A strict improvement resets the
    /// counter and snapshots `params`; otherwise the counter grows, and
    /// training stops once it exceeds the patience.
    pub fn update(&mut self, metric: f64, params: &Checkpoint<S>) -> Result<StopDecision> {
        if metric.is_nan() {
            return Err(Error::Numeric(format!("validation metric is NaN at check {}", self.checks + 1)));
        }
        self.checks += 1;
        if metric > self.best_metric {
            self.best_metric = metric;
            self.best_check = self.checks;
            self.checks_since_best = 0;
            self.best_checkpoint = Some(params.clone());
        } else {
            self.checks_since_best += 1;
        }
        Ok(if self.checks_since_best > self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        })
    }
}

pub fn early_stop_update<S: Scalar>(
    state: &mut EarlyStopState<S>,
    metric: f64,
    params: &Checkpoint<S>,
) -> Result<StopDecision> {
    state.update(metric, params)
}
