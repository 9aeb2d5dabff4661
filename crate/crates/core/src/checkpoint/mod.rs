//! Named parameter collections, their on-disk format, and initialization
//! (from scratch or by transferring encoder weights from a donor).

mod format;
mod init;
mod transfer;

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use format::{decode, encode, load, save, MAGIC, VERSION};
pub use init::{he_stddev, scratch_init};
pub use transfer::{transfer_init, TransferPolicy, TransferReport, TransferTable};

/// Self-description stored alongside the tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metadata {
    /// Graph text of the architecture the tensors belong to.
    pub arch: String,
    pub seed: u64,
    pub epoch: u64,
    /// Validation metric at save time (NaN when unknown).
    pub metric: f64,
    /// Additional `key=value` pairs, kept in insertion order.
    pub extra: Vec<(String, String)>,
}

impl Metadata {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for line in self.arch.lines() {
            out.push_str("arch=");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(&format!("seed={}\n", self.seed));
        out.push_str(&format!("epoch={}\n", self.epoch));
        out.push_str(&format!("metric={}\n", self.metric));
        for (k, v) in &self.extra {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut meta = Metadata {
            metric: f64::NAN,
            ..Default::default()
        };
        let mut arch = Vec::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("metadata line without `=`: {line}")))?;
            let bad = |what: &str| Error::invalid(format!("bad metadata {what}: {v}"));
            match k {
                "arch" => arch.push(v),
                "seed" => meta.seed = v.parse().map_err(|_| bad("seed"))?,
                "epoch" => meta.epoch = v.parse().map_err(|_| bad("epoch"))?,
                "metric" => meta.metric = v.parse().map_err(|_| bad("metric"))?,
                _ => meta.extra.push((k.to_string(), v.to_string())),
            }
        }
        meta.arch = arch.join("\n");
        if !meta.arch.is_empty() {
            meta.arch.push('\n');
        }
        Ok(meta)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.extra
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// Ordered list of uniquely named tensors plus metadata.
#[derive(Clone, Debug, Default)]
pub struct Checkpoint<S = f32> {
    entries: Vec<(String, Tensor<S>)>,
    index: HashMap<String, usize>,
    pub metadata: Metadata,
}

impl<S: Scalar> Checkpoint<S> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
            index: HashMap::new(),
            metadata: Metadata {
                metric: f64::NAN,
                ..Default::default()
            },
        }
    }

    /// Appends a tensor; names must be unique.
    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<S>) -> Result<()> {
        let name = name.into();
        if name.is_empty() || name.len() > u16::MAX as usize {
            return Err(Error::invalid("tensor name must be 1..=65535 bytes"));
        }
        if self.index.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate tensor name `{name}`")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, tensor));
        Ok(())
    }

    /// Replaces an existing tensor of the same shape.
    pub fn replace(&mut self, name: &str, tensor: Tensor<S>) -> Result<()> {
        let slot = self
            .get_mut(name)
            .ok_or_else(|| Error::Contract(format!("no tensor named `{name}`")))?;
        if slot.shape() != tensor.shape() {
            return Err(Error::shape(format!(
                "`{name}` has shape {:?}, replacement {:?}",
                slot.shape(),
                tensor.shape()
            )));
        }
        *slot = tensor;
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        match self.index.get(name) {
            Some(&i) => Some(&mut self.entries[i].1),
            None => None,
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<S>)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    /// Total number of scalar values.
    pub fn parameter_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Zero tensors with the same names and shapes.
    pub fn zeros_like(&self) -> Self {
        let mut out = Self::new();
        for (n, t) in self.iter() {
            out.push(n, Tensor::zeros_like(t)).expect("names unique");
        }
        out
    }

    /// Multiplies every tensor by `k`.
    pub fn scale(&mut self, k: S) {
        for (_, t) in self.iter_mut() {
            for v in t.data_mut() {
                *v *= k;
            }
        }
    }

    /// Adds `other` tensor-by-tensor; names and shapes must agree.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Contract("checkpoints hold different tensor sets".into()));
        }
        for (name, t) in other.iter() {
            let dst = self
                .get_mut(name)
                .ok_or_else(|| Error::Contract(format!("missing tensor `{name}`")))?;
            dst.add_assign(t)?;
        }
        Ok(())
    }

    /// Bitwise equality of names, order and tensor contents (metadata ignored).
    pub fn bit_eq(&self, other: &Self) -> bool
    where
        S: crate::tensor::BitPattern,
    {
        self.len() == other.len()
            && self
                .iter()
                .zip(other.iter())
                .all(|((na, ta), (nb, tb))| na == nb && ta.bit_eq(tb))
    }

    /// Order-sensitive hash of names, shapes and value bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |v: u64| {
            h = (h ^ v).wrapping_mul(0x0000_0100_0000_01b3);
        };
        for (name, t) in self.iter() {
            name.bytes().for_each(|b| mix(b as u64));
            t.shape().iter().for_each(|&e| mix(e as u64));
            for v in t.data() {
                mix(v.as_f64().to_bits());
            }
        }
        h
    }

    pub fn cast<T: Scalar>(&self) -> Checkpoint<T> {
        let mut out = Checkpoint::new();
        for (n, t) in self.iter() {
            out.push(n, t.cast()).expect("names unique");
        }
        out.metadata = self.metadata.clone();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unique_names() {
        let mut c = Checkpoint::<f32>::new();
        c.push("a", Tensor::zeros(&[2])).unwrap();
        assert!(c.push("a", Tensor::zeros(&[2])).is_err());
        assert!(c.replace("a", Tensor::zeros(&[3])).is_err());
        assert!(c.replace("b", Tensor::zeros(&[2])).is_err());
        c.replace("a", Tensor::new(&[2], 1.0).unwrap()).unwrap();
        assert_eq!(c.get("a").unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn metadata_text_round_trip() {
        let meta = Metadata {
            arch: "line one\nline two\n".into(),
            seed: 7,
            epoch: 3,
            metric: 0.25,
            extra: vec![("preset".into(), "SGN1".into())],
        };
        let back = Metadata::from_text(&meta.to_text()).unwrap();
        assert_eq!(back, meta);
    }
}
