//! Training runs, evaluation of saved checkpoints, and prediction.

mod config;
mod eval;
mod report;
mod run;

pub use config::{InitPolicy, RunConfig, ValidationMetric};
pub use eval::{
    argmax_labels, evaluate, evaluate_as, evaluate_samples, evaluate_samples_as, network_for, overlay, predict, predict_image,
    Prediction,
};
pub use report::merge_valmetrics;
pub use run::{train, train_samples, train_with, write_run, EpochRecord, IterRecord, RunLog, StopReason, Validation};
