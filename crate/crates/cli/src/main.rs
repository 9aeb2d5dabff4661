//! `lesionseg`: train, evaluate and apply skin lesion segmentation networks.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lesionseg::checkpoint;
use lesionseg::data::{
    crop_protocol, load_dataset, synth_lesion, write_samples, CropConfig, ExpandRecipe, GeometricConfig, LoadOptions,
    Sample, SampleWriter, SplitFractions, SynthConfig, WeightScheme,
};
use lesionseg::graph::{build_preset, GraphSpec, Preset, PRESET_NAMES};
use lesionseg::metrics::Aggregation;
use lesionseg::trainer::{self, InitPolicy, RunConfig, ValidationMetric};
use lesionseg::{Checkpoint32, Error};

#[derive(Parser, Debug)]
#[command(name = "lesionseg", version, about = "Encoder-decoder segmentation of skin lesion images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a network and write logs and checkpoints to --out.
    Train(TrainArgs),
    /// Score a checkpoint on a labeled dataset.
    Eval(EvalArgs),
    /// Segment one image.
    Predict(PredictArgs),
    /// Materialize the cropped or fully augmented training set.
    Augment(AugmentArgs),
    /// Generate synthetic lesion images with exact labels.
    Synth(SynthArgs),
    /// Merge the validation logs of several runs into one CSV table.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Protocol {
    /// 100 epochs, patience 10.
    TrainingData,
    /// 50 epochs, patience 25.
    Network,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Metric {
    MeanAccuracy,
    LesionIou,
    MeanIou,
}

impl From<Metric> for ValidationMetric {
    fn from(m: Metric) -> Self {
        match m {
            Metric::MeanAccuracy => ValidationMetric::MeanAccuracy,
            Metric::LesionIou => ValidationMetric::LesionIou,
            Metric::MeanIou => ValidationMetric::MeanIou,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Weighting {
    MedianFrequency,
    InverseFrequency,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Preset name (sgn1..sgn6, fcn8, fcn16, fcn32, vgg16, vgg19, sgnvgg16) or a graph file.
    #[arg(long)]
    arch: String,
    /// Dataset directory with images/ and labels/.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Default epochs and patience.
    #[arg(long, value_enum, default_value = "training-data")]
    protocol: Protocol,
    /// Maximum epochs [default: 100, or 50 with --protocol network].
    #[arg(long)]
    epochs: Option<usize>,
    /// Validation patience in epochs [default: 10, or 25 with --protocol network].
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long, default_value_t = 0.003)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 0.0005)]
    l2: f64,
    #[arg(long, default_value_t = 0.0)]
    l1: f64,
    /// Learning-rate multiplier applied after every epoch.
    #[arg(long, default_value_t = 1.0)]
    lr_decay: f64,
    /// Mini-batch size.
    #[arg(long, default_value_t = 1)]
    batch: usize,
    /// `scratch` or `transfer:PATH` (encoder weights from a checkpoint).
    #[arg(long, default_value = "scratch")]
    init: String,
    /// Training share of the split.
    #[arg(long, default_value_t = 0.7)]
    train_split: f64,
    /// Validation share; with 0 the test split is used for validation.
    #[arg(long, default_value_t = 0.0)]
    val_split: f64,
    /// Network input size `HxW`, or `native`.
    #[arg(long, default_value = "360x480")]
    size: String,
    #[arg(long, value_enum, default_value = "mean-accuracy")]
    metric: Metric,
    #[arg(long, value_enum, default_value = "median-frequency")]
    weighting: Weighting,
    /// Stop once the validation metric reaches this value.
    #[arg(long)]
    stop_at: Option<f64>,
    /// Disable on-the-fly geometric augmentation.
    #[arg(long)]
    no_augment: bool,
    /// Keep the sample order fixed across epochs.
    #[arg(long)]
    no_shuffle: bool,
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitPart {
    All,
    Train,
    Validation,
    Test,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Metrics CSV; the confusion matrices go next to it as `<stem>_confusion.csv`.
    #[arg(long)]
    out: PathBuf,
    /// Require the checkpoint to have this architecture.
    #[arg(long)]
    arch: Option<String>,
    /// Which part of the dataset to score.
    #[arg(long, value_enum, default_value = "all")]
    split: SplitPart,
    /// Split seed (match the training run).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.7)]
    train_split: f64,
    #[arg(long, default_value_t = 0.0)]
    val_split: f64,
    /// Input size `HxW`, or `native`.
    #[arg(long, default_value = "360x480")]
    size: String,
    /// Pool pixel counts over images instead of averaging per image.
    #[arg(long)]
    micro: bool,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Recipe {
    /// Crops of every --data image plus the --keep images whole.
    Crop,
    /// The crop set, each sample filtered and expanded with 50 noisy copies.
    Full,
}

#[derive(Args, Debug)]
struct AugmentArgs {
    /// Images to crop.
    #[arg(long)]
    data: PathBuf,
    /// Images added without cropping.
    #[arg(long)]
    keep: Option<PathBuf>,
    #[arg(long, value_enum)]
    recipe: Recipe,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    crops_per_image: usize,
    #[arg(long, default_value_t = 0.05)]
    min_lesion_frac: f64,
    /// Output size `HxW`.
    #[arg(long, default_value = "360x480")]
    size: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    /// `HxW`, at least 32x32.
    #[arg(long, default_value = "96x96")]
    size: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Surround each image with a background band.
    #[arg(long)]
    border: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Run directories containing valmetrics.csv.
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accepted for uniformity; reports are deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::Graph { .. } => 1,
        Error::Data { .. } | Error::Io { .. } | Error::Format { .. } | Error::Shape(_) => 2,
        Error::Numeric(_) | Error::Contract(_) => 3,
    }
}

fn parse_size(s: &str) -> Result<Option<(usize, usize)>, Error> {
    if s == "native" {
        return Ok(None);
    }
    let parsed = s
        .split_once('x')
        .and_then(|(h, w)| Some((h.parse::<usize>().ok()?, w.parse::<usize>().ok()?)))
        .filter(|&(h, w)| h > 0 && w > 0);
    parsed
        .map(Some)
        .ok_or_else(|| usage(format!("size must be `HxW` or `native`, got `{s}`")))
}

fn fixed_size(s: &str) -> Result<(usize, usize), Error> {
    parse_size(s)?.ok_or_else(|| usage("this command needs an explicit `HxW` size"))
}

/// A preset name, or a path to a graph file.
fn resolve_arch(arch: &str) -> Result<(String, GraphSpec), Error> {
    let path = Path::new(arch);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("custom").to_string();
        return Ok((name, GraphSpec::from_text(&text)?));
    }
    if Preset::parse(arch).is_err() {
        return Err(usage(format!(
            "`{arch}` is neither a graph file nor a preset ({})",
            PRESET_NAMES.join(", ").to_ascii_lowercase()
        )));
    }
    Ok((arch.to_ascii_lowercase(), build_preset(arch)?))
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run_train(a: TrainArgs) -> Result<(), Error> {
    let (name, spec) = resolve_arch(&a.arch)?;
    let mut cfg = RunConfig::new(name, spec);
    if let Protocol::Network = a.protocol {
        cfg = cfg.network_experiment();
    }
    cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
    cfg.patience = a.patience.unwrap_or(cfg.patience);
    cfg.data_root = Some(a.data);
    cfg.seed = a.seed;
    cfg.sgdm.learning_rate = a.lr;
    cfg.sgdm.momentum = a.momentum;
    cfg.sgdm.l2 = a.l2;
    cfg.sgdm.l1 = a.l1;
    cfg.sgdm.lr_decay = a.lr_decay;
    cfg.batch_size = a.batch;
    cfg.init = InitPolicy::parse(&a.init)?;
    cfg.split = SplitFractions {
        train: a.train_split,
        validation: a.val_split,
    };
    cfg.input_size = parse_size(&a.size)?;
    cfg.metric = a.metric.into();
    cfg.weight_scheme = match a.weighting {
        Weighting::MedianFrequency => WeightScheme::MedianFrequency,
        Weighting::InverseFrequency => WeightScheme::InverseFrequency,
    };
    cfg.stop_at = a.stop_at;
    if a.no_augment {
        cfg.augment = GeometricConfig::none();
    }
    cfg.shuffle = !a.no_shuffle;
    cfg.out_dir = Some(a.out.clone());
    let log = trainer::train(&cfg)?;
    println!(
        "stopped after {} epochs ({}); best {} = {:.4} at epoch {}; run written to {}",
        log.epochs.last().map_or(0, |e| e.epoch),
        log.stop_reason.name(),
        cfg.metric.name(),
        log.best_metric,
        log.best_epoch,
        a.out.display()
    );
    Ok(())
}

fn run_eval(a: EvalArgs) -> Result<(), Error> {
    let ckpt: Checkpoint32 = checkpoint::load(&a.ckpt)?;
    let expected = a.arch.as_deref().map(resolve_arch).transpose()?;
    let split = match a.split {
        SplitPart::All => SplitFractions {
            train: 1.0,
            validation: 0.0,
        },
        _ => SplitFractions {
            train: a.train_split,
            validation: a.val_split,
        },
    };
    let ds = load_dataset(
        &a.data,
        &LoadOptions {
            split,
            seed: a.seed,
            target: parse_size(&a.size)?,
        },
    )?;
    for w in &ds.report.warnings {
        log::warn!("{w}");
    }
    let samples = match a.split {
        SplitPart::All | SplitPart::Train => &ds.train,
        SplitPart::Validation => &ds.validation,
        SplitPart::Test => &ds.test,
    };
    if samples.is_empty() {
        return Err(Error::Data {
            path: a.data.clone(),
            msg: "no samples to evaluate".into(),
        });
    }
    let aggregation = if a.micro { Aggregation::Micro } else { Aggregation::Macro };
    let report = trainer::evaluate_as(&ckpt, samples, expected.as_ref().map(|(_, s)| s), aggregation)?;
    write_text(&a.out, &report.to_csv())?;
    let stem = a.out.file_stem().and_then(|s| s.to_str()).unwrap_or("metrics");
    write_text(&a.out.with_file_name(format!("{stem}_confusion.csv")), &report.confusion_csv())?;
    print!("{}", report.summary());
    Ok(())
}

fn run_predict(a: PredictArgs) -> Result<(), Error> {
    let ckpt: Checkpoint32 = checkpoint::load(&a.ckpt)?;
    let p = trainer::predict(&ckpt, &a.image, &a.out)?;
    let lesion = p.label.count(lesionseg::label::LESION);
    println!(
        "{}x{} prediction, lesion share {:.4}; written to {}",
        p.label.height(),
        p.label.width(),
        lesion as f64 / p.label.len() as f64,
        a.out.display()
    );
    Ok(())
}

fn load_all(dir: &Path) -> Result<Vec<Sample>, Error> {
    let ds = load_dataset(
        dir,
        &LoadOptions {
            split: SplitFractions {
                train: 1.0,
                validation: 0.0,
            },
            seed: 0,
            target: None,
        },
    )?;
    for w in &ds.report.warnings {
        log::warn!("{w}");
    }
    for (p, why) in &ds.report.rejected {
        log::warn!("rejected {}: {why}", p.display());
    }
    Ok(ds.train)
}

fn run_augment(a: AugmentArgs) -> Result<(), Error> {
    let target = fixed_size(&a.size)?;
    let crop = CropConfig {
        crops_per_image: a.crops_per_image,
        min_lesion_frac: a.min_lesion_frac,
        ..CropConfig::default()
    };
    let cropped = load_all(&a.data)?;
    let kept = match &a.keep {
        Some(dir) => load_all(dir)?,
        None => Vec::new(),
    };
    if cropped.is_empty() && kept.is_empty() {
        return Err(Error::Data {
            path: a.data.clone(),
            msg: "no image/label pairs to augment".into(),
        });
    }
    let base = crop_protocol(&cropped, &kept, &crop, target, a.seed)?;
    let written = match a.recipe {
        Recipe::Crop => write_samples(&a.out, &base)?,
        Recipe::Full => {
            let recipe = ExpandRecipe::standard();
            let mut w = SampleWriter::create(&a.out)?;
            for s in &base {
                for e in recipe.expand_source(s, a.seed)? {
                    w.write(&e)?;
                }
            }
            w.finish()?
        }
    };
    println!("{written} samples written to {}", a.out.display());
    Ok(())
}

fn run_synth(a: SynthArgs) -> Result<(), Error> {
    let (height, width) = fixed_size(&a.size)?;
    let samples = synth_lesion(
        a.n,
        &SynthConfig {
            height,
            width,
            border: a.border,
        },
        a.seed,
    )?;
    let n = write_samples(&a.out, &samples)?;
    println!("{n} samples written to {}", a.out.display());
    Ok(())
}

fn run_report(a: ReportArgs) -> Result<(), Error> {
    let mut runs = Vec::new();
    for dir in &a.runs {
        let path = dir.join("valmetrics.csv");
        let text = fs::read_to_string(&path).map_err(|e| Error::Io { path, source: e })?;
        let name = dir
            .file_name()
            .and_then(|s| s.to_str())
            .unwrap_or("run")
            .to_string();
        runs.push((name, text));
    }
    let table = trainer::merge_valmetrics(&runs)?;
    match &a.out {
        Some(p) => write_text(p, &table),
        None => {
            print!("{table}");
            Ok(())
        }
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("LESIONSEG_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("LESIONSEG_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| usage(format!("cannot configure {n} worker threads: {e}")))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::Predict(a) => run_predict(a),
        Command::Augment(a) => run_augment(a),
        Command::Synth(a) => run_synth(a),
        Command::Report(a) => run_report(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use lesionseg::data::WORKING_SIZE;

    #[test]
    fn sizes() {
        assert_eq!(parse_size("360x480").unwrap(), Some(WORKING_SIZE));
        assert_eq!(parse_size("native").unwrap(), None);
        assert!(parse_size("0x4").is_err());
        assert!(parse_size("12").is_err());
    }

    #[test]
    fn error_classes() {
        assert_eq!(exit_code(&usage("x")), 1);
        assert_eq!(exit_code(&Error::Numeric("x".into())), 3);
        let data = Error::Data {
            path: "p".into(),
            msg: "m".into(),
        };
        assert_eq!(exit_code(&data), 2);
    }

    #[test]
    fn every_preset_resolves() {
        for name in PRESET_NAMES {
            assert_eq!(resolve_arch(name).unwrap().0, name.to_ascii_lowercase());
        }
        assert!(resolve_arch("sgn9").is_err());
    }

    #[test]
    fn command_line_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
