//! Encoder-only weight transfer driven by an explicit donor-to-target
//! name table.

use std::collections::{HashMap, HashSet};

use super::init::init_param;
use super::Checkpoint;
use crate::error::{Error, Result};
use crate::graph::{GraphSpec, ParamRole, Preset};
use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TransferEntry {
    /// Copy donor tensor `donor` into target parameter `target`.
    Map { donor: String, target: String },
    /// Target parameter deliberately left to fresh initialization.
    Fresh(String),
}

/// Donor-to-target name table, one entry per line:
///
/// ```text
/// # donor name            target name
/// features.conv1_1.weight enc1_conv1.weight
/// - enc1_bn1.gamma
/// ```
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TransferTable {
    pub entries: Vec<TransferEntry>,
}

impl TransferTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.as_slice() {
                ["-", target] => entries.push(TransferEntry::Fresh(target.to_string())),
                [donor, target] => entries.push(TransferEntry::Map {
                    donor: donor.to_string(),
                    target: target.to_string(),
                }),
                _ => {
                    return Err(Error::Config(format!(
                        "transfer table line {}: expected `donor target` or `- target`",
                        i + 1
                    )))
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|e| match e {
                TransferEntry::Map { donor, target } => format!("{donor} {target}\n"),
                TransferEntry::Fresh(target) => format!("- {target}\n"),
            })
            .collect()
    }

    /// Every encoder parameter mapped onto itself, for donors of the same
    /// architecture.
    pub fn identity(spec: &GraphSpec) -> Result<Self> {
        Ok(Self {
            entries: spec
                .encoder_param_names()?
                .into_iter()
                .map(|n| TransferEntry::Map { donor: n.clone(), target: n })
                .collect(),
        })
    }

    /// Table for a VGG16/VGG19 classification donor: the encoder
    /// convolutions take `features.conv{s}_{k}` in stack order and the
    /// encoder normalization layers start fresh.
    pub fn vgg(spec: &GraphSpec) -> Result<Self> {
        let mut entries: Vec<TransferEntry> = crate::graph::vgg_donor_names(spec)
            .into_iter()
            .map(|(donor, target)| TransferEntry::Map { donor, target })
            .collect();
        let mapped: HashSet<String> = entries
            .iter()
            .filter_map(|e| match e {
                TransferEntry::Map { target, .. } => Some(target.clone()),
                TransferEntry::Fresh(_) => None,
            })
            .collect();
        for name in spec.encoder_param_names()? {
            if !mapped.contains(&name) && !matches!(ParamRole::of_name(&name), Some(ParamRole::Kernel | ParamRole::Bias)) {
                entries.push(TransferEntry::Fresh(name));
            }
        }
        Ok(Self { entries })
    }

    /// The table shipped for a spec: VGG donor names for the presets meant
    /// to start from a VGG network, the identity table otherwise.
    pub fn for_spec(spec: &GraphSpec) -> Result<Self> {
        match spec.preset_name.as_deref().map(Preset::parse) {
            Some(Ok(p)) if p.uses_transfer() => Self::vgg(spec),
            _ => Self::identity(spec),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TransferPolicy {
    /// Only encoder parameters are copied; everything else is freshly initialized.
    #[default]
    EncoderOnly,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TransferReport {
    /// `(donor, target)` pairs copied verbatim.
    pub copied: Vec<(String, String)>,
    /// Target parameters given fresh values.
    pub initialized: Vec<String>,
    /// Donor tensors not used.
    pub skipped: Vec<String>,
    pub warnings: Vec<String>,
}

impl TransferReport {
    pub fn copied_targets(&self) -> Vec<&str> {
        self.copied.iter().map(|(_, t)| t.as_str()).collect()
    }
}

/// Builds a checkpoint for `target`: encoder parameters named by `table`
/// are copied from `donor`, every other parameter is initialized as in
/// [`super::scratch_init`] with the same `rng`.
pub fn transfer_init<S: Scalar>(
    target: &GraphSpec,
    donor: &Checkpoint<S>,
    table: &TransferTable,
    policy: TransferPolicy,
    rng: &Rng,
) -> Result<(Checkpoint<S>, TransferReport)> {
    let TransferPolicy::EncoderOnly = policy;
    let specs = target.param_specs()?;
    let by_name: HashMap<&str, usize> = specs.iter().enumerate().map(|(i, p)| (p.name.as_str(), i)).collect();
    let mut source: HashMap<&str, &str> = HashMap::new();
    let mut fresh: HashSet<&str> = HashSet::new();
    let mut report = TransferReport::default();
    for e in &table.entries {
        match e {
            TransferEntry::Map { donor: d, target: t } => {
                let Some(&i) = by_name.get(t.as_str()) else {
                    return Err(Error::Config(format!("transfer table targets unknown parameter `{t}`")));
                };
                if !specs[i].section.is_encoder() {
                    report
                        .warnings
                        .push(format!("`{t}` is not an encoder parameter; it is initialized instead"));
                    continue;
                }
                if source.insert(t.as_str(), d.as_str()).is_some() {
                    return Err(Error::Config(format!("transfer table maps `{t}` twice")));
                }
            }
            TransferEntry::Fresh(t) => {
                fresh.insert(t.as_str());
            }
        }
    }

    let mut out = Checkpoint::new();
    let mut used: HashSet<&str> = HashSet::new();
    for p in &specs {
        let copied = match source.get(p.name.as_str()).map(|d| (*d, donor.get(d))) {
            Some((d, Some(t))) => {
                if t.shape() != p.shape.as_slice() {
                    return Err(Error::shape(format!(
                        "donor `{d}` has shape {:?} but target `{}` expects {:?}",
                        t.shape(),
                        p.name,
                        p.shape
                    )));
                }
                used.insert(d);
                report.copied.push((d.to_string(), p.name.clone()));
                Some(t.clone())
            }
            Some((d, None)) => {
                if !donor.is_empty() {
                    report.warnings.push(format!("donor has no `{d}`; `{}` is initialized", p.name));
                }
                None
            }
            None => {
                if p.section.is_encoder() && !fresh.contains(p.name.as_str()) {
                    report
                        .warnings
                        .push(format!("encoder parameter `{}` is unmapped; it is initialized", p.name));
                }
                None
            }
        };
        let t = match copied {
            Some(t) => t,
            None => {
                report.initialized.push(p.name.clone());
                init_param(p, rng)?
            }
        };
        out.push(p.name.clone(), t)?;
    }
    report.skipped = donor.names().filter(|n| !used.contains(n)).map(str::to_string).collect();
    out.metadata.arch = target.to_text();
    out.metadata.seed = rng.seed();
    Ok((out, report))
}
