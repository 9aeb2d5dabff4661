use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use super::config::{InitPolicy, RunConfig, ValidationMetric};
use super::eval::evaluate_samples;
use crate::checkpoint::{self, scratch_init, transfer_init, Checkpoint, TransferPolicy, TransferTable};
use crate::data::{augment_geometric, class_weights, load_dataset, GeometricConfig, LoadOptions, Sample};
use crate::error::{Error, Result};
use crate::graph::Network;
use crate::layers::Mode;
use crate::metrics::{ClassMetrics, MetricsReport};
use crate::optim::{EarlyStopState, SgdmState, StopDecision};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
    TargetReached,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::MaxEpochs => "max_epochs",
            StopReason::EarlyStop => "early_stop",
            StopReason::TargetReached => "target_reached",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterRecord {
    /// 1-based over the whole run.
    pub iter: usize,
    pub epoch: usize,
    /// Mean loss over the mini-batch.
    pub loss: f32,
}

/// Outcome of one validation check.
#[derive(Clone, Debug, PartialEq)]
pub struct Validation {
    pub metric: f64,
    pub report: Option<MetricsReport>,
}

impl Validation {
    pub fn from_report(report: MetricsReport, metric: ValidationMetric) -> Self {
        let m = match metric {
            ValidationMetric::MeanAccuracy => report.mean_accuracy,
            ValidationMetric::LesionIou => report.classes[1].iou,
            ValidationMetric::MeanIou => report.mean.iou,
        };
        Validation {
            metric: m.unwrap_or(0.0),
            report: Some(report),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 0 is the check before any training.
    pub epoch: usize,
    /// Mean of the iteration losses of this epoch.
    pub train_loss: Option<f64>,
    pub metric: f64,
    /// `[skin, lesion]` when the check produced a full report.
    pub classes: Option<[ClassMetrics; 2]>,
}

#[derive(Clone, Debug)]
pub struct RunLog {
    pub iterations: Vec<IterRecord>,
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub best: Checkpoint<f32>,
    pub final_params: Checkpoint<f32>,
    pub wall_clock: Duration,
    pub config_hash: u64,
}

impl RunLog {
    /// `iter,epoch,loss`.
    pub fn runlog_csv(&self) -> String {
        let mut s = String::from("iter,epoch,loss\n");
        for r in &self.iterations {
            let _ = writeln!(s, "{},{},{}", r.iter, r.epoch, r.loss);
        }
        s
    }

    /// One row per validation check.
    pub fn valmetrics_csv(&self, metric: ValidationMetric) -> String {
        let mut s = format!(
            "epoch,train_loss,{},skin_acc,lesion_acc,skin_iou,lesion_iou,skin_bf1,lesion_bf1\n",
            metric.name()
        );
        let na = |v: Option<f64>| v.map_or("NA".to_string(), |v| format!("{v:.6}"));
        for e in &self.epochs {
            let c = e.classes.unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{:.6},{},{},{},{},{},{}",
                e.epoch,
                na(e.train_loss),
                e.metric,
                na(c[0].accuracy),
                na(c[1].accuracy),
                na(c[0].iou),
                na(c[1].iou),
                na(c[0].bf1),
                na(c[1].bf1)
            );
        }
        s
    }
}

/// Loads the dataset at `cfg.data_root` and trains on its training split.
/// Validation uses the validation split, or the test split when no
/// validation share was requested.
pub fn train(cfg: &RunConfig) -> Result<RunLog> {
    let root = cfg
        .data_root
        .as_ref()
        .ok_or_else(|| Error::Config("no data directory given".into()))?;
    let ds = load_dataset(
        root,
        &LoadOptions {
            split: cfg.split,
            seed: cfg.seed,
            target: cfg.input_size,
        },
    )?;
    for w in &ds.report.warnings {
        log::warn!("{w}");
    }
    for (p, why) in &ds.report.rejected {
        log::warn!("rejected {}: {why}", p.display());
    }
    if ds.train.is_empty() {
        return Err(Error::data(root, "training split is empty"));
    }
    let val = if ds.validation.is_empty() { &ds.test } else { &ds.validation };
    if val.is_empty() {
        return Err(Error::data(root, "no validation or test samples to validate on"));
    }
    train_samples(cfg, &ds.train, val)
}

/// Trains on in-memory samples, validating on `validation` each epoch.
pub fn train_samples(cfg: &RunConfig, train: &[Sample], validation: &[Sample]) -> Result<RunLog> {
    if validation.is_empty() {
        return Err(Error::Config("validation set is empty".into()));
    }
    let metric = cfg.metric;
    train_with(cfg, train, &mut |_, net, params| {
        Ok(Validation::from_report(evaluate_samples(net, params, validation)?, metric))
    })
}

fn initial_params(cfg: &RunConfig, rng: &Rng) -> Result<Checkpoint<f32>> {
    let init_rng = rng.child("init", 0);
    match &cfg.init {
        InitPolicy::Scratch => scratch_init(&cfg.arch, &init_rng),
        InitPolicy::Transfer(path) => {
            let donor: Checkpoint<f32> = checkpoint::load(path)?;
            let table = if donor.names().any(|n| n.starts_with("features.")) {
                TransferTable::vgg(&cfg.arch)?
            } else {
                TransferTable::identity(&cfg.arch)?
            };
            let (params, report) = transfer_init(&cfg.arch, &donor, &table, TransferPolicy::EncoderOnly, &init_rng)?;
            for w in &report.warnings {
                log::warn!("transfer: {w}");
            }
            log::info!(
                "transfer: {} copied, {} initialized, {} donor tensors unused",
                report.copied.len(),
                report.initialized.len(),
                report.skipped.len()
            );
            Ok(params)
        }
    }
}

/// The training loop with a caller-supplied validation check, invoked as
/// `validate(epoch, network, params)` before training (epoch 0) and after
/// every epoch.
pub fn train_with(
    cfg: &RunConfig,
    train: &[Sample],
    validate: &mut dyn FnMut(usize, &Network, &Checkpoint<f32>) -> Result<Validation>,
) -> Result<RunLog> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let started = Instant::now();
    let rng = Rng::new(cfg.seed);
    let net = Network::new(cfg.arch.clone())?;
    let mut params = initial_params(cfg, &rng)?;
    params.metadata.arch = cfg.arch.to_text();
    params.metadata.seed = cfg.seed;
    net.check_params(&params)?;

    let cw = class_weights(train.iter().map(|s| &s.label), cfg.weight_scheme);
    for w in &cw.warnings {
        log::warn!("{w}");
    }
    let weights = cw.weights.map(|w| w as f32);
    let mut opt = SgdmState::new(&params, cfg.sgdm)?;
    let mut stop = EarlyStopState::<f32>::new(cfg.patience)?;
    let augment = cfg.augment != GeometricConfig::none();
    let n = train.len();

    let mut log = RunLog {
        iterations: Vec::new(),
        epochs: Vec::new(),
        stop_reason: StopReason::MaxEpochs,
        best_epoch: 0,
        best_metric: f64::NEG_INFINITY,
        best: Checkpoint::new(),
        final_params: Checkpoint::new(),
        wall_clock: Duration::ZERO,
        config_hash: cfg.hash(),
    };

    let mut check = |epoch: usize,
                     train_loss: Option<f64>,
                     params: &Checkpoint<f32>,
                     log: &mut RunLog,
                     stop: &mut EarlyStopState<f32>|
     -> Result<Option<StopReason>> {
        let v = validate(epoch, &net, params)?;
        log::info!("epoch {epoch}: {} = {:.4}", cfg.metric.name(), v.metric);
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            metric: v.metric,
            classes: v.report.as_ref().map(|r| r.classes),
        });
        let decision = stop.update(v.metric, params)?;
        if cfg.stop_at.is_some_and(|t| v.metric >= t) {
            return Ok(Some(StopReason::TargetReached));
        }
        Ok((decision == StopDecision::Stop).then_some(StopReason::EarlyStop))
    };

    let mut outcome = check(0, None, &params, &mut log, &mut stop)?;
    let mut iter = 0usize;
    let mut epoch = 0usize;
    let mut diverged = None;
    while outcome.is_none() && epoch < cfg.epochs {
        epoch += 1;
        let mut order: Vec<usize> = (0..n).collect();
        if cfg.shuffle {
            rng.child("shuffle", epoch as u64).shuffle(&mut order);
        }
        let mut epoch_loss = 0.0f64;
        let mut epoch_iters = 0usize;
        'batches: for batch in order.chunks(cfg.batch_size) {
            iter += 1;
            let mut total: Option<Checkpoint<f32>> = None;
            let mut loss = 0.0f32;
            for &i in batch {
                let key = (epoch * n + i) as u64;
                let augmented;
                let s = if augment {
                    augmented = augment_geometric(&train[i], &cfg.augment, &mut rng.child("augment", key))?;
                    &augmented
                } else {
                    &train[i]
                };
                let acts = net.forward(&params, &s.image, Mode::Train, &mut rng.child("dropout", key))?;
                let g = net.backward(&params, &acts, &s.label, weights)?;
                if !g.loss.is_finite()
                    || g.grads.iter().any(|(_, t)| !t.all_finite())
                    || acts.running_stats.iter().any(|(_, t)| !t.all_finite())
                {
                    diverged = Some(format!(
                        "non-finite loss or gradient at iteration {iter} (epoch {epoch}, sample `{}`)",
                        s.source_id
                    ));
                    break 'batches;
                }
                net.commit_running_stats(&mut params, &acts)?;
                loss += g.loss;
                match &mut total {
                    None => total = Some(g.grads),
                    Some(t) => t.add_assign(&g.grads)?,
                }
            }
            let mut grads = total.expect("mini-batches are non-empty");
            let k = batch.len() as f32;
            if batch.len() > 1 {
                grads.scale(1.0 / k);
            }
            let last_good = params.clone();
            crate::optim::sgdm_step(&mut params, &grads, &mut opt)?;
            if params.iter().any(|(_, t)| !t.all_finite()) {
                params = last_good;
                diverged = Some(format!("parameters overflowed at iteration {iter} (epoch {epoch})"));
                break;
            }
            let mean = loss / k;
            log.iterations.push(IterRecord { iter, epoch, loss: mean });
            epoch_loss += mean as f64;
            epoch_iters += 1;
        }
        if diverged.is_some() {
            break;
        }
        opt.decay();
        let train_loss = (epoch_iters > 0).then(|| epoch_loss / epoch_iters as f64);
        outcome = check(epoch, train_loss, &params, &mut log, &mut stop)?;
    }

    log.stop_reason = outcome.unwrap_or(StopReason::MaxEpochs);
    log.best_epoch = stop.best_check.saturating_sub(1);
    log.best_metric = stop.best_metric;
    let mut best = stop.best_checkpoint.take().unwrap_or_else(|| params.clone());
    best.metadata.epoch = log.best_epoch as u64;
    best.metadata.metric = log.best_metric;
    params.metadata.epoch = epoch as u64;
    params.metadata.metric = log.epochs.last().map_or(f64::NAN, |e| e.metric);
    log.best = best;
    log.final_params = params;
    log.wall_clock = started.elapsed();

    if let Some(dir) = &cfg.out_dir {
        write_run(dir, cfg, &log, diverged.as_deref())?;
    }
    if let Some(msg) = diverged {
        let hint = cfg
            .out_dir
            .as_ref()
            .map_or(String::new(), |d| format!("; last good parameters in {}", d.join("final.segw").display()));
        return Err(Error::Numeric(format!("training diverged: {msg}{hint}")));
    }
    Ok(log)
}

/// Writes the run artifacts. Everything except `timing.txt` is a pure
/// function of the configuration and data.
pub fn write_run(dir: &Path, cfg: &RunConfig, log: &RunLog, diverged: Option<&str>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: &str| {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(p, e))
    };
    write("runlog.csv", &log.runlog_csv())?;
    write("valmetrics.csv", &log.valmetrics_csv(cfg.metric))?;
    let mut config = cfg.to_text();
    let _ = writeln!(config, "config_hash={:016x}", log.config_hash);
    let _ = writeln!(config, "stop_reason={}", diverged.map_or(log.stop_reason.name(), |_| "diverged"));
    let _ = writeln!(config, "best_epoch={}", log.best_epoch);
    let _ = writeln!(config, "best_metric={}", log.best_metric);
    if let Some(msg) = diverged {
        let _ = writeln!(config, "diagnostic={msg}");
    }
    write("config.txt", &config)?;
    write("arch.graph", &cfg.arch.to_text())?;
    write("timing.txt", &format!("wall_clock_seconds={:.3}\n", log.wall_clock.as_secs_f64()))?;
    checkpoint::save(&log.best, dir.join("best.segw"))?;
    checkpoint::save(&log.final_params, dir.join("final.segw"))
}
