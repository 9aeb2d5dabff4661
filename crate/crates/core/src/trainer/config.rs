use std::fmt::Write as _;
use std::path::PathBuf;

use crate::data::{GeometricConfig, SplitFractions, WeightScheme, WORKING_SIZE};
use crate::error::{Error, Result};
use crate::graph::{build_preset, GraphSpec};
use crate::optim::SgdmConfig;

/// How the network's parameters start out.
#[derive(Clone, Debug, PartialEq)]
pub enum InitPolicy {
    Scratch,
    /// Copy encoder weights from the checkpoint at this path.
    Transfer(PathBuf),
}

impl InitPolicy {
    /// `scratch` or `transfer:PATH`.
    pub fn parse(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "scratch" => Ok(InitPolicy::Scratch),
            Some(("transfer", p)) if !p.is_empty() => Ok(InitPolicy::Transfer(PathBuf::from(p))),
            _ => Err(Error::Config(format!("init must be `scratch` or `transfer:PATH`, got `{s}`"))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            InitPolicy::Scratch => "scratch".into(),
            InitPolicy::Transfer(p) => format!("transfer:{}", p.display()),
        }
    }
}

/// Quantity checked once per epoch for early stopping (higher is better).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ValidationMetric {
    #[default]
    MeanAccuracy,
    LesionIou,
    MeanIou,
}

impl ValidationMetric {
    pub fn name(self) -> &'static str {
        match self {
            ValidationMetric::MeanAccuracy => "mean_accuracy",
            ValidationMetric::LesionIou => "lesion_iou",
            ValidationMetric::MeanIou => "mean_iou",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [Self::MeanAccuracy, Self::LesionIou, Self::MeanIou]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown validation metric `{s}`")))
    }
}

/// Everything that determines a training run. Defaults are the
/// training-data experiment: SGDM with momentum 0.9, learning rate 0.003,
/// L2 0.0005, 100 epochs, mini-batch 1, patience 10, shuffling every epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Preset name or `custom`.
    pub arch_name: String,
    pub arch: GraphSpec,
    pub data_root: Option<PathBuf>,
    pub seed: u64,
    pub split: SplitFractions,
    /// Resize applied when loading; `None` keeps stored sizes.
    pub input_size: Option<(usize, usize)>,
    pub epochs: usize,
    pub batch_size: usize,
    pub sgdm: SgdmConfig,
    pub patience: usize,
    pub shuffle: bool,
    /// Drawn per sample and epoch.
    pub augment: GeometricConfig,
    pub weight_scheme: WeightScheme,
    pub metric: ValidationMetric,
    /// Stop as soon as the validation metric reaches this value.
    pub stop_at: Option<f64>,
    pub init: InitPolicy,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(arch_name: impl Into<String>, arch: GraphSpec) -> Self {
        Self {
            arch_name: arch_name.into(),
            arch,
            data_root: None,
            seed: 0,
            split: SplitFractions::default(),
            input_size: Some(WORKING_SIZE),
            epochs: 100,
            batch_size: 1,
            sgdm: SgdmConfig::default(),
            patience: 10,
            shuffle: true,
            augment: GeometricConfig::default(),
            weight_scheme: WeightScheme::default(),
            metric: ValidationMetric::default(),
            stop_at: None,
            init: InitPolicy::Scratch,
            out_dir: None,
        }
    }

    pub fn for_preset(name: &str) -> Result<Self> {
        Ok(Self::new(name.to_ascii_lowercase(), build_preset(name)?))
    }

    /// Network-structure experiment: 50 epochs, patience 25.
    pub fn network_experiment(mut self) -> Self {
        self.epochs = 50;
        self.patience = 25;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("mini-batch size must be positive".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("validation patience must be positive".into()));
        }
        self.sgdm.validate()?;
        self.augment.validate()?;
        self.arch.validate().map(|_| ())
    }

    /// `key=value` lines; everything that affects the numbers is listed.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let geo = &self.augment;
        let opt = |v: Option<(usize, usize)>| v.map_or("native".to_string(), |(h, w)| format!("{h}x{w}"));
        let _ = writeln!(s, "arch={}", self.arch_name);
        let _ = writeln!(
            s,
            "data={}",
            self.data_root.as_ref().map_or("-".into(), |p| p.display().to_string())
        );
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "split_train={}", self.split.train);
        let _ = writeln!(s, "split_validation={}", self.split.validation);
        let _ = writeln!(s, "input_size={}", opt(self.input_size));
        let _ = writeln!(s, "epochs={}", self.epochs);
        let _ = writeln!(s, "batch={}", self.batch_size);
        let _ = writeln!(s, "optimizer=sgdm");
        let _ = writeln!(s, "lr={}", self.sgdm.learning_rate);
        let _ = writeln!(s, "momentum={}", self.sgdm.momentum);
        let _ = writeln!(s, "l2={}", self.sgdm.l2);
        let _ = writeln!(s, "l1={}", self.sgdm.l1);
        let _ = writeln!(s, "lr_decay={}", self.sgdm.lr_decay);
        let _ = writeln!(s, "patience={}", self.patience);
        let _ = writeln!(s, "shuffle={}", self.shuffle);
        let _ = writeln!(s, "reflect={},{}", geo.reflect_x, geo.reflect_y);
        let _ = writeln!(s, "translate={},{}", geo.translate_px.0, geo.translate_px.1);
        let _ = writeln!(s, "rotate={},{}", geo.rotate_deg.0, geo.rotate_deg.1);
        let _ = writeln!(s, "scale={},{}", geo.scale.0, geo.scale.1);
        let _ = writeln!(s, "class_weights={:?}", self.weight_scheme);
        let _ = writeln!(s, "metric={}", self.metric.name());
        let _ = writeln!(s, "stop_at={}", self.stop_at.map_or("-".into(), |v| v.to_string()));
        let _ = writeln!(s, "init={}", self.init.name());
        s
    }

    /// FNV-1a of [`Self::to_text`] plus the graph text.
    pub fn hash(&self) -> u64 {
        let text = self.to_text() + &self.arch.to_text();
        text.bytes()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
    }
}
