//! Declarative network graphs: node records, validation, shape inference
//! and the parameter layout a graph expects.

mod exec;
mod presets;
mod text;

use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::cmp::Reverse;
use std::fmt;

use crate::error::{Error, Result};
use crate::layers::{conv_output_extent, pooled_extent, transposed_output_extent, UpsampleAlgo};

pub use exec::{backward, forward, Activations, Gradients, Network};
pub use presets::{build_fcn, build_preset, build_sgn, build_vgg_unet, Preset, VggVariant, PRESET_NAMES};
pub(crate) use presets::vgg_donor_names;

/// Reserved id of the network input.
pub const INPUT: &str = "input";

/// Part of the encoder-decoder structure a node belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Section {
    /// Encoder section at the given depth (1-based).
    Encoder(usize),
    /// Convolutions between the deepest pool and the first upsampling.
    Bridge,
    Decoder(usize),
    Head,
    /// Untagged nodes of hand-written graphs.
    Other,
}

impl Section {
    pub fn is_encoder(self) -> bool {
        matches!(self, Section::Encoder(_))
    }

    pub fn parse(s: &str) -> Result<Self> {
        let depth = |rest: &str| {
            rest.parse::<usize>()
                .map_err(|_| Error::invalid(format!("bad section `{s}`")))
        };
        match s {
            "bridge" => Ok(Section::Bridge),
            "head" => Ok(Section::Head),
            "-" | "other" => Ok(Section::Other),
            _ if s.starts_with("enc") => Ok(Section::Encoder(depth(&s[3..])?)),
            _ if s.starts_with("dec") => Ok(Section::Decoder(depth(&s[3..])?)),
            _ => Err(Error::invalid(format!("bad section `{s}`"))),
        }
    }
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Section::Encoder(d) => write!(f, "enc{d}"),
            Section::Bridge => write!(f, "bridge"),
            Section::Decoder(d) => write!(f, "dec{d}"),
            Section::Head => write!(f, "head"),
            Section::Other => write!(f, "-"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NodeKind {
    Conv {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    BatchNorm {
        channels: usize,
    },
    Relu,
    Sigmoid,
    MaxPool {
        window: usize,
        stride: usize,
    },
    /// Learned upsampling. An optional second input only supplies the
    /// spatial size the output is cropped to.
    TransposedConv {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    /// Fixed upsampling; optional second input as for `TransposedConv`.
    Upsample {
        factor: usize,
        algo: UpsampleAlgo,
    },
    Concat,
    Add,
    Dropout {
        rate: f64,
    },
    /// Sink: its input is the 2-channel logit map scored by the loss.
    SoftmaxLoss,
}

impl NodeKind {
    pub fn name(&self) -> &'static str {
        match self {
            NodeKind::Conv { .. } => "conv",
            NodeKind::BatchNorm { .. } => "batchnorm",
            NodeKind::Relu => "relu",
            NodeKind::Sigmoid => "sigmoid",
            NodeKind::MaxPool { .. } => "maxpool",
            NodeKind::TransposedConv { .. } => "transposed_conv",
            NodeKind::Upsample { .. } => "upsample",
            NodeKind::Concat => "concat",
            NodeKind::Add => "add",
            NodeKind::Dropout { .. } => "dropout",
            NodeKind::SoftmaxLoss => "softmax_loss",
        }
    }

    fn arity(&self) -> (usize, usize) {
        match self {
            NodeKind::TransposedConv { .. } | NodeKind::Upsample { .. } => (1, 2),
            NodeKind::Concat | NodeKind::Add => (2, 2),
            _ => (1, 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamRole {
    Kernel,
    Bias,
    Gamma,
    Beta,
    RunningMean,
    RunningVar,
}

impl ParamRole {
    pub fn suffix(self) -> &'static str {
        match self {
            ParamRole::Kernel => "weight",
            ParamRole::Bias => "bias",
            ParamRole::Gamma => "gamma",
            ParamRole::Beta => "beta",
            ParamRole::RunningMean => "running_mean",
            ParamRole::RunningVar => "running_var",
        }
    }

    /// Updated by the optimizer (running statistics are not).
    pub fn is_trainable(self) -> bool {
        !matches!(self, ParamRole::RunningMean | ParamRole::RunningVar)
    }

    /// Subject to L1/L2 weight decay.
    pub fn is_decayed(self) -> bool {
        matches!(self, ParamRole::Kernel)
    }

    /// Role of a parameter tensor from its `node.suffix` name.
    pub fn of_name(name: &str) -> Option<Self> {
        let suffix = name.rsplit_once('.')?.1;
        [
            ParamRole::Kernel,
            ParamRole::Bias,
            ParamRole::Gamma,
            ParamRole::Beta,
            ParamRole::RunningMean,
            ParamRole::RunningVar,
        ]
        .into_iter()
        .find(|r| r.suffix() == suffix)
    }
}

/// One parameter tensor a graph expects.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub node: String,
    pub shape: Vec<usize>,
    pub role: ParamRole,
    pub section: Section,
    /// `in_channels * kh * kw` for kernels.
    pub fan_in: usize,
}

pub fn param_name(node: &str, role: ParamRole) -> String {
    format!("{node}.{}", role.suffix())
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNode {
    pub id: String,
    pub kind: NodeKind,
    pub inputs: Vec<String>,
    pub section: Section,
}

impl LayerNode {
    pub fn new(id: impl Into<String>, kind: NodeKind, inputs: &[&str], section: Section) -> Self {
        Self {
            id: id.into(),
            kind,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            section,
        }
    }

    pub fn params(&self) -> Vec<ParamSpec> {
        let spec = |role, shape: Vec<usize>, fan_in| ParamSpec {
            name: param_name(&self.id, role),
            node: self.id.clone(),
            shape,
            role,
            section: self.section,
            fan_in,
        };
        match self.kind {
            NodeKind::Conv {
                in_ch,
                out_ch,
                kernel,
                ..
            } => vec![
                spec(ParamRole::Kernel, vec![out_ch, in_ch, kernel, kernel], in_ch * kernel * kernel),
                spec(ParamRole::Bias, vec![out_ch], 0),
            ],
            // kernel layout is the adjoint convolution's: in x out x k x k
            NodeKind::TransposedConv {
                in_ch,
                out_ch,
                kernel,
                ..
            } => vec![
                spec(ParamRole::Kernel, vec![in_ch, out_ch, kernel, kernel], in_ch * kernel * kernel),
                spec(ParamRole::Bias, vec![out_ch], 0),
            ],
            NodeKind::BatchNorm { channels } => vec![
                spec(ParamRole::Gamma, vec![channels], 0),
                spec(ParamRole::Beta, vec![channels], 0),
                spec(ParamRole::RunningMean, vec![channels], 0),
                spec(ParamRole::RunningVar, vec![channels], 0),
            ],
            _ => Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SkipStyle {
    /// Concatenate the same-depth encoder section output.
    Sgn,
    /// Add a 1x1 projection of the same-depth encoder section input.
    Fcn,
    /// No skip connections (hand-written graphs).
    None,
}

impl SkipStyle {
    pub fn name(self) -> &'static str {
        match self {
            SkipStyle::Sgn => "sgn",
            SkipStyle::Fcn => "fcn",
            SkipStyle::None => "none",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sgn" => Ok(SkipStyle::Sgn),
            "fcn" => Ok(SkipStyle::Fcn),
            "none" => Ok(SkipStyle::None),
            _ => Err(Error::invalid(format!("unknown skip style `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecoderUpsampling {
    Transposed,
    Bilinear,
}

impl DecoderUpsampling {
    pub fn name(self) -> &'static str {
        match self {
            DecoderUpsampling::Transposed => "transposed",
            DecoderUpsampling::Bilinear => "bilinear",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "transposed" => Ok(DecoderUpsampling::Transposed),
            "bilinear" => Ok(DecoderUpsampling::Bilinear),
            _ => Err(Error::invalid(format!("unknown decoder upsampling `{s}`"))),
        }
    }
}

/// Declarative description of a network.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphSpec {
    pub nodes: Vec<LayerNode>,
    pub input_channels: usize,
    pub encoder_depth: usize,
    pub convs_per_section: Vec<usize>,
    pub channel_widths: Vec<usize>,
    pub skip_style: SkipStyle,
    pub upsampling: DecoderUpsampling,
    pub preset_name: Option<String>,
}

impl GraphSpec {
    pub fn node(&self, id: &str) -> Option<&LayerNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn count_kind(&self, kind: &str) -> usize {
        self.nodes.iter().filter(|n| n.kind.name() == kind).count()
    }

    /// Number of spatial (kernel > 1) convolution layers; 1x1 projections,
    /// the classifier head and transposed convolutions are not counted.
    pub fn conv_layer_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Conv { kernel, .. } if kernel > 1))
            .count()
    }

    /// Fusion points where a skip connection joins the decoder.
    pub fn fusion_count(&self) -> usize {
        self.count_kind("concat") + self.count_kind("add")
    }

    /// Parameter tensors in topological order.
    pub fn param_specs(&self) -> Result<Vec<ParamSpec>> {
        let order = self.topo_order()?;
        Ok(order.iter().flat_map(|&i| self.nodes[i].params()).collect())
    }

    pub fn parameter_count(&self) -> Result<usize> {
        Ok(self
            .param_specs()?
            .iter()
            .filter(|p| p.role.is_trainable())
            .map(|p| p.shape.iter().product::<usize>())
            .sum())
    }

    /// Kahn's algorithm, ties broken by declaration order. Errors name a
    /// node on a cycle or with a dangling input.
    pub fn topo_order(&self) -> Result<Vec<usize>> {
        let mut ids: HashMap<&str, usize> = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id == INPUT || n.id.is_empty() || n.id.contains(char::is_whitespace) {
                return Err(Error::graph(&n.id, "reserved or malformed node id"));
            }
            if ids.insert(&n.id, i).is_some() {
                return Err(Error::graph(&n.id, "duplicate node id"));
            }
        }
        let mut indegree = vec![0usize; self.nodes.len()];
        let mut consumers: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            for inp in &n.inputs {
                if inp == INPUT {
                    continue;
                }
                let &src = ids
                    .get(inp.as_str())
                    .ok_or_else(|| Error::graph(&n.id, format!("input `{inp}` does not exist")))?;
                indegree[i] += 1;
                consumers[src].push(i);
            }
        }
        let mut ready: BinaryHeap<Reverse<usize>> = indegree
            .iter()
            .enumerate()
            .filter(|(_, &d)| d == 0)
            .map(|(i, _)| Reverse(i))
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(Reverse(i)) = ready.pop() {
            order.push(i);
            for &c in &consumers[i] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.push(Reverse(c));
                }
            }
        }
        if order.len() != self.nodes.len() {
            let stuck = (0..self.nodes.len())
                .find(|&i| indegree[i] > 0)
                .expect("some node is unresolved");
            return Err(Error::graph(&self.nodes[stuck].id, "node lies on a cycle"));
        }
        Ok(order)
    }

    /// Structural validation: ids, edges, acyclicity, arities and the single
    /// loss sink. Shape consistency is checked by [`GraphSpec::infer_shapes`].
    pub fn validate(&self) -> Result<Vec<usize>> {
        if self.input_channels == 0 {
            return Err(Error::graph(INPUT, "input must have at least one channel"));
        }
        let order = self.topo_order()?;
        let mut consumed: HashMap<&str, usize> = HashMap::new();
        for n in &self.nodes {
            let (lo, hi) = n.kind.arity();
            if n.inputs.len() < lo || n.inputs.len() > hi {
                return Err(Error::graph(
                    &n.id,
                    format!("{} takes {lo}..={hi} inputs, got {}", n.kind.name(), n.inputs.len()),
                ));
            }
            for inp in &n.inputs {
                *consumed.entry(inp.as_str()).or_default() += 1;
            }
            match n.kind {
                NodeKind::Conv { in_ch, out_ch, kernel, stride, .. }
                | NodeKind::TransposedConv { in_ch, out_ch, kernel, stride, .. } => {
                    if in_ch == 0 || out_ch == 0 || kernel == 0 || stride == 0 {
                        return Err(Error::graph(&n.id, "channels, kernel and stride must be positive"));
                    }
                }
                NodeKind::BatchNorm { channels } if channels == 0 => {
                    return Err(Error::graph(&n.id, "batch-norm needs at least one channel"));
                }
                NodeKind::MaxPool { window, stride } if window == 0 || stride == 0 => {
                    return Err(Error::graph(&n.id, "pool window and stride must be positive"));
                }
                NodeKind::Upsample { factor, .. } if factor == 0 => {
                    return Err(Error::graph(&n.id, "upsampling factor must be positive"));
                }
                NodeKind::Dropout { rate } if !(0.0..1.0).contains(&rate) => {
                    return Err(Error::graph(&n.id, format!("dropout rate {rate} outside [0, 1)")));
                }
                _ => {}
            }
        }
        let sinks: Vec<&LayerNode> = self
            .nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::SoftmaxLoss))
            .collect();
        match sinks.len() {
            1 => {}
            0 => return Err(Error::graph(INPUT, "graph has no softmax_loss sink")),
            _ => return Err(Error::graph(&sinks[1].id, "graph has more than one softmax_loss sink")),
        }
        for n in &self.nodes {
            let used = consumed.get(n.id.as_str()).copied().unwrap_or(0);
            let is_sink = matches!(n.kind, NodeKind::SoftmaxLoss);
            if is_sink && used > 0 {
                return Err(Error::graph(&n.id, "softmax_loss must be a sink"));
            }
            if !is_sink && used == 0 {
                return Err(Error::graph(&n.id, "output is never used"));
            }
        }
        if !consumed.contains_key(INPUT) {
            return Err(Error::graph(INPUT, "network input is never used"));
        }
        Ok(order)
    }

    /// Output shape of every node for a `C x H x W` input, keyed by node id.
    pub fn infer_shapes(&self, input: [usize; 3]) -> Result<BTreeMap<String, [usize; 3]>> {
        let order = self.validate()?;
        if input[0] != self.input_channels {
            return Err(Error::graph(
                INPUT,
                format!("graph expects {} input channels, got {}", self.input_channels, input[0]),
            ));
        }
        let mut shapes: HashMap<String, [usize; 3]> = HashMap::new();
        shapes.insert(INPUT.to_string(), input);
        for &i in &order {
            let n = &self.nodes[i];
            let ins: Vec<[usize; 3]> = n.inputs.iter().map(|id| shapes[id.as_str()]).collect();
            let fail = |msg: String| Error::graph(&n.id, msg);
            let [c, h, w] = ins[0];
            let crop = |out: [usize; 3]| -> Result<[usize; 3]> {
                match ins.get(1) {
                    None => Ok(out),
                    Some(&[_, rh, rw]) if rh <= out[1] && rw <= out[2] => Ok([out[0], rh, rw]),
                    Some(r) => Err(fail(format!("cannot crop {out:?} to reference {r:?}"))),
                }
            };
            let out = match n.kind {
                NodeKind::Conv { in_ch, out_ch, kernel, stride, pad } => {
                    if c != in_ch {
                        return Err(fail(format!("expects {in_ch} channels, got {c}")));
                    }
                    let oh = conv_output_extent(h, kernel, stride, pad).map_err(|e| fail(e.to_string()))?;
                    let ow = conv_output_extent(w, kernel, stride, pad).map_err(|e| fail(e.to_string()))?;
                    [out_ch, oh, ow]
                }
                NodeKind::TransposedConv { in_ch, out_ch, kernel, stride, pad } => {
                    if c != in_ch {
                        return Err(fail(format!("expects {in_ch} channels, got {c}")));
                    }
                    let oh = transposed_output_extent(h, kernel, stride, pad).map_err(|e| fail(e.to_string()))?;
                    let ow = transposed_output_extent(w, kernel, stride, pad).map_err(|e| fail(e.to_string()))?;
                    crop([out_ch, oh, ow])?
                }
                NodeKind::Upsample { factor, .. } => crop([c, h * factor, w * factor])?,
                NodeKind::BatchNorm { channels } => {
                    if c != channels {
                        return Err(fail(format!("expects {channels} channels, got {c}")));
                    }
                    [c, h, w]
                }
                NodeKind::MaxPool { window, stride } => {
                    [c, pooled_extent(h, window, stride), pooled_extent(w, window, stride)]
                }
                NodeKind::Concat => {
                    let [c2, h2, w2] = ins[1];
                    if (h, w) != (h2, w2) {
                        return Err(fail(format!("concat of {h}x{w} with {h2}x{w2}")));
                    }
                    [c + c2, h, w]
                }
                NodeKind::Add => {
                    if ins[0] != ins[1] {
                        return Err(fail(format!("add of {:?} and {:?}", ins[0], ins[1])));
                    }
                    ins[0]
                }
                NodeKind::SoftmaxLoss => {
                    if c != 2 {
                        return Err(fail(format!("loss expects 2 logit channels, got {c}")));
                    }
                    ins[0]
                }
                NodeKind::Relu | NodeKind::Sigmoid | NodeKind::Dropout { .. } => ins[0],
            };
            shapes.insert(n.id.clone(), out);
        }
        shapes.remove(INPUT);
        Ok(shapes.into_iter().collect())
    }

    /// The node whose output the loss scores.
    pub fn logits_node(&self) -> Option<&str> {
        self.nodes
            .iter()
            .find(|n| matches!(n.kind, NodeKind::SoftmaxLoss))
            .and_then(|n| n.inputs.first())
            .map(String::as_str)
    }

    /// Names of all parameters belonging to encoder sections.
    pub fn encoder_param_names(&self) -> Result<Vec<String>> {
        Ok(self
            .param_specs()?
            .into_iter()
            .filter(|p| p.section.is_encoder())
            .map(|p| p.name)
            .collect())
    }

    pub fn to_text(&self) -> String {
        text::to_text(self)
    }

    pub fn from_text(s: &str) -> Result<Self> {
        text::from_text(s)
    }
}
