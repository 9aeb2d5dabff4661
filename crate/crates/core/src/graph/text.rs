//! Line-oriented text form of a [`GraphSpec`].
//!
//! ```text
//! preset SGN1
//! input_channels 3
//! encoder_depth 1
//! convs_per_section 2
//! channel_widths 64
//! skip_style sgn
//! upsampling transposed
//! node enc1_conv1 conv in=3 out=64 k=3 stride=1 pad=1 section=enc1 inputs=input
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Header lines are
//! optional; node lines keep their declaration order.

use std::collections::HashMap;

use super::{DecoderUpsampling, GraphSpec, LayerNode, NodeKind, Section, SkipStyle};
use crate::error::{Error, Result};
use crate::layers::UpsampleAlgo;

fn list(v: &[usize]) -> String {
    if v.is_empty() {
        "-".to_string()
    } else {
        v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
    }
}

fn parse_list(s: &str, line: usize) -> Result<Vec<usize>> {
    if s == "-" {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| Error::Config(format!("line {line}: bad integer list `{s}`")))
        })
        .collect()
}

fn kind_fields(kind: &NodeKind) -> String {
    match kind {
        NodeKind::Conv { in_ch, out_ch, kernel, stride, pad }
        | NodeKind::TransposedConv { in_ch, out_ch, kernel, stride, pad } => {
            format!(" in={in_ch} out={out_ch} k={kernel} stride={stride} pad={pad}")
        }
        NodeKind::BatchNorm { channels } => format!(" channels={channels}"),
        NodeKind::MaxPool { window, stride } => format!(" window={window} stride={stride}"),
        NodeKind::Upsample { factor, algo } => format!(" factor={factor} algo={}", algo.name()),
        NodeKind::Dropout { rate } => format!(" rate={rate}"),
        _ => String::new(),
    }
}

pub(super) fn to_text(g: &GraphSpec) -> String {
    let mut out = String::new();
    if let Some(name) = &g.preset_name {
        out.push_str(&format!("preset {name}\n"));
    }
    out.push_str(&format!("input_channels {}\n", g.input_channels));
    out.push_str(&format!("encoder_depth {}\n", g.encoder_depth));
    out.push_str(&format!("convs_per_section {}\n", list(&g.convs_per_section)));
    out.push_str(&format!("channel_widths {}\n", list(&g.channel_widths)));
    out.push_str(&format!("skip_style {}\n", g.skip_style.name()));
    out.push_str(&format!("upsampling {}\n", g.upsampling.name()));
    for n in &g.nodes {
        out.push_str(&format!(
            "node {} {}{} section={} inputs={}\n",
            n.id,
            n.kind.name(),
            kind_fields(&n.kind),
            n.section,
            n.inputs.join(",")
        ));
    }
    out
}

struct Fields<'a> {
    node: &'a str,
    map: HashMap<&'a str, &'a str>,
}

impl<'a> Fields<'a> {
    fn raw(&self, key: &str) -> Result<&'a str> {
        self.map
            .get(key)
            .copied()
            .ok_or_else(|| Error::graph(self.node, format!("missing field `{key}`")))
    }

    fn usize(&self, key: &str) -> Result<usize> {
        let v = self.raw(key)?;
        v.parse()
            .map_err(|_| Error::graph(self.node, format!("field `{key}` is not an integer: `{v}`")))
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        if self.map.contains_key(key) {
            self.usize(key)
        } else {
            Ok(default)
        }
    }
}

fn parse_node(rest: &[&str], line: usize) -> Result<LayerNode> {
    let (id, kind) = match rest {
        [id, kind, ..] => (*id, *kind),
        _ => return Err(Error::Config(format!("line {line}: node needs an id and a kind"))),
    };
    let mut map = HashMap::new();
    for tok in &rest[2..] {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::graph(id, format!("expected key=value, got `{tok}`")))?;
        if map.insert(k, v).is_some() {
            return Err(Error::graph(id, format!("field `{k}` given twice")));
        }
    }
    let f = Fields { node: id, map };
    let kind = match kind {
        "conv" | "transposed_conv" => {
            let (in_ch, out_ch, kernel) = (f.usize("in")?, f.usize("out")?, f.usize("k")?);
            let stride = f.usize_or("stride", 1)?;
            if kind == "conv" {
                let pad = f.usize_or("pad", kernel / 2)?;
                NodeKind::Conv { in_ch, out_ch, kernel, stride, pad }
            } else {
                let pad = f.usize_or("pad", 0)?;
                NodeKind::TransposedConv { in_ch, out_ch, kernel, stride, pad }
            }
        }
        "batchnorm" => NodeKind::BatchNorm { channels: f.usize("channels")? },
        "relu" => NodeKind::Relu,
        "sigmoid" => NodeKind::Sigmoid,
        "maxpool" => {
            let window = f.usize_or("window", 2)?;
            NodeKind::MaxPool { window, stride: f.usize_or("stride", window)? }
        }
        "upsample" => NodeKind::Upsample {
            factor: f.usize_or("factor", 2)?,
            algo: match f.map.get("algo") {
                Some(a) => UpsampleAlgo::parse(a).map_err(|e| Error::graph(id, e.to_string()))?,
                None => UpsampleAlgo::Bilinear,
            },
        },
        "concat" => NodeKind::Concat,
        "add" => NodeKind::Add,
        "dropout" => {
            let v = f.raw("rate")?;
            NodeKind::Dropout {
                rate: v
                    .parse()
                    .map_err(|_| Error::graph(id, format!("dropout rate is not a number: `{v}`")))?,
            }
        }
        "softmax_loss" => NodeKind::SoftmaxLoss,
        other => return Err(Error::graph(id, format!("unknown node kind `{other}`"))),
    };
    let section = match f.map.get("section") {
        Some(s) => Section::parse(s).map_err(|e| Error::graph(id, e.to_string()))?,
        None => Section::Other,
    };
    let inputs = f
        .raw("inputs")?
        .split(',')
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    let known = [
        "in", "out", "k", "stride", "pad", "channels", "window", "factor", "algo", "rate", "section", "inputs",
    ];
    if let Some(k) = f.map.keys().find(|k| !known.contains(k)) {
        return Err(Error::graph(id, format!("unknown field `{k}`")));
    }
    Ok(LayerNode { id: id.to_string(), kind, inputs, section })
}

pub(super) fn from_text(s: &str) -> Result<GraphSpec> {
    let mut g = GraphSpec {
        nodes: Vec::new(),
        input_channels: 3,
        encoder_depth: 0,
        convs_per_section: Vec::new(),
        channel_widths: Vec::new(),
        skip_style: SkipStyle::None,
        upsampling: DecoderUpsampling::Transposed,
        preset_name: None,
    };
    for (i, raw) in s.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        let value = || {
            toks.get(1)
                .copied()
                .ok_or_else(|| Error::Config(format!("line {line}: `{}` needs a value", toks[0])))
        };
        let int = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| Error::Config(format!("line {line}: expected an integer, got `{v}`")))
        };
        match toks[0] {
            "node" => g.nodes.push(parse_node(&toks[1..], line)?),
            "preset" => g.preset_name = Some(value()?.to_string()),
            "input_channels" => g.input_channels = int(value()?)?,
            "encoder_depth" => g.encoder_depth = int(value()?)?,
            "convs_per_section" => g.convs_per_section = parse_list(value()?, line)?,
            "channel_widths" => g.channel_widths = parse_list(value()?, line)?,
            "skip_style" => g.skip_style = SkipStyle::parse(value()?)?,
            "upsampling" => g.upsampling = DecoderUpsampling::parse(value()?)?,
            other => return Err(Error::Config(format!("line {line}: unknown directive `{other}`"))),
        }
    }
    g.validate()?;
    Ok(g)
}
