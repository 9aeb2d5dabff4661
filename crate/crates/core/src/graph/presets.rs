//! The named network presets: SGN1-6, FCN8/16/32 and the VGG U-nets.

use super::{DecoderUpsampling, GraphSpec, LayerNode, NodeKind, Section, SkipStyle, INPUT};
use crate::error::{Error, Result};
use crate::layers::UpsampleAlgo;

pub const PRESET_NAMES: [&str; 12] = [
    "SGN1", "SGN2", "SGN3", "SGN4", "SGN5", "SGN6", "FCN8", "FCN16", "FCN32", "VGG16", "VGG19", "SGNVGG16",
];

const MAX_WIDTH: usize = 512;
const VGG_WIDTHS: [usize; 5] = [64, 128, 256, 512, 512];
const VGG16_CONVS: [usize; 5] = [2, 2, 3, 3, 3];
const VGG19_CONVS: [usize; 5] = [2, 2, 4, 4, 4];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VggVariant {
    Vgg16,
    Vgg19,
    SgnVgg16,
}

impl VggVariant {
    pub fn name(self) -> &'static str {
        match self {
            VggVariant::Vgg16 => "VGG16",
            VggVariant::Vgg19 => "VGG19",
            VggVariant::SgnVgg16 => "SGNVGG16",
        }
    }

    fn convs(self) -> [usize; 5] {
        match self {
            VggVariant::Vgg19 => VGG19_CONVS,
            _ => VGG16_CONVS,
        }
    }
}

/// A named preset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Sgn(usize),
    /// Encoder depth 1, 2 or 3 (FCN32, FCN16, FCN8).
    Fcn(usize),
    Vgg(VggVariant),
}

impl Preset {
    /// Case-insensitive lookup of a preset name.
    pub fn parse(name: &str) -> Result<Self> {
        let up = name.to_ascii_uppercase();
        let p = match up.as_str() {
            "FCN32" => Preset::Fcn(1),
            "FCN16" => Preset::Fcn(2),
            "FCN8" => Preset::Fcn(3),
            "VGG16" => Preset::Vgg(VggVariant::Vgg16),
            "VGG19" => Preset::Vgg(VggVariant::Vgg19),
            "SGNVGG16" => Preset::Vgg(VggVariant::SgnVgg16),
            _ => match up.strip_prefix("SGN").and_then(|d| d.parse().ok()) {
                Some(d @ 1..=6) => Preset::Sgn(d),
                _ => {
                    return Err(Error::invalid(format!(
                        "unknown preset `{name}` (expected one of {})",
                        PRESET_NAMES.join(", ")
                    )))
                }
            },
        };
        Ok(p)
    }

    pub fn name(self) -> String {
        match self {
            Preset::Sgn(d) => format!("SGN{d}"),
            Preset::Fcn(d) => format!("FCN{}", 64 >> d),
            Preset::Vgg(v) => v.name().to_string(),
        }
    }

    /// Whether the encoder is meant to start from a donor network rather
    /// than from scratch.
    pub fn uses_transfer(self) -> bool {
        matches!(self, Preset::Fcn(_) | Preset::Vgg(VggVariant::Vgg16 | VggVariant::Vgg19))
    }

    pub fn build(self, upsampling: DecoderUpsampling) -> Result<GraphSpec> {
        match self {
            Preset::Sgn(d) => sgn(d, 64, upsampling),
            Preset::Fcn(d) => fcn(d, upsampling),
            Preset::Vgg(v) => vgg_unet(v, upsampling),
        }
    }
}

/// Builds a preset by name with learned (transposed-convolution) upsampling.
pub fn build_preset(name: &str) -> Result<GraphSpec> {
    Preset::parse(name)?.build(DecoderUpsampling::Transposed)
}

/// SGN U-net of the given encoder depth; widths double from `base_width`
/// per depth, capped at 512.
pub fn build_sgn(depth: usize, base_width: usize) -> Result<GraphSpec> {
    sgn(depth, base_width, DecoderUpsampling::Transposed)
}

/// FCN32 (depth 1), FCN16 (depth 2) or FCN8 (depth 3).
pub fn build_fcn(depth: usize) -> Result<GraphSpec> {
    fcn(depth, DecoderUpsampling::Transposed)
}

pub fn build_vgg_unet(variant: VggVariant) -> Result<GraphSpec> {
    vgg_unet(variant, DecoderUpsampling::Transposed)
}

/// Accumulates nodes while keeping track of the running tensor.
struct Builder {
    nodes: Vec<LayerNode>,
    upsampling: DecoderUpsampling,
}

impl Builder {
    fn push(&mut self, id: String, kind: NodeKind, inputs: &[&str], section: Section) -> String {
        self.nodes.push(LayerNode::new(id.clone(), kind, inputs, section));
        id
    }

    /// conv -> batchnorm -> relu; returns the relu id.
    fn conv_bn_relu(&mut self, prefix: &str, k: usize, input: &str, cin: usize, cout: usize, section: Section) -> String {
        let conv = self.push(
            format!("{prefix}_conv{k}"),
            NodeKind::Conv { in_ch: cin, out_ch: cout, kernel: 3, stride: 1, pad: 1 },
            &[input],
            section,
        );
        let bn = self.push(format!("{prefix}_bn{k}"), NodeKind::BatchNorm { channels: cout }, &[&conv], section);
        self.push(format!("{prefix}_relu{k}"), NodeKind::Relu, &[&bn], section)
    }

    fn conv1x1(&mut self, id: String, input: &str, cin: usize, cout: usize, section: Section) -> String {
        self.push(
            id,
            NodeKind::Conv { in_ch: cin, out_ch: cout, kernel: 1, stride: 1, pad: 0 },
            &[input],
            section,
        )
    }

    /// Doubles the spatial size of `input`, cropped to the size of `reference`,
    /// and maps `cin` to `cout` channels.
    fn upsample(&mut self, prefix: &str, input: &str, reference: &str, cin: usize, cout: usize, section: Section) -> String {
        match self.upsampling {
            DecoderUpsampling::Transposed => self.push(
                format!("{prefix}_up"),
                NodeKind::TransposedConv { in_ch: cin, out_ch: cout, kernel: 2, stride: 2, pad: 0 },
                &[input, reference],
                section,
            ),
            DecoderUpsampling::Bilinear => {
                let up = self.push(
                    format!("{prefix}_up"),
                    NodeKind::Upsample { factor: 2, algo: UpsampleAlgo::Bilinear },
                    &[input, reference],
                    section,
                );
                self.conv1x1(format!("{prefix}_upproj"), &up, cin, cout, section)
            }
        }
    }

    fn head(&mut self, input: &str, cin: usize) {
        let head = self.conv1x1("head_conv".to_string(), input, cin, 2, Section::Head);
        self.push("loss".to_string(), NodeKind::SoftmaxLoss, &[&head], Section::Head);
    }
}

/// U-net with SGN skips: encoder sections of `convs[i]` conv-BN-ReLU blocks
/// followed by a 2x2 max pool, a two-conv bridge, and decoder sections that
/// concatenate the upsampled tensor with the matching encoder section output.
fn unet(name: String, convs: &[usize], widths: &[usize], upsampling: DecoderUpsampling) -> Result<GraphSpec> {
    let depth = convs.len();
    let mut b = Builder { nodes: Vec::new(), upsampling };
    let mut x = INPUT.to_string();
    let mut ch = 3;
    let mut skips = Vec::with_capacity(depth);
    for d in 1..=depth {
        let s = Section::Encoder(d);
        for k in 1..=convs[d - 1] {
            x = b.conv_bn_relu(&format!("enc{d}"), k, &x, ch, widths[d - 1], s);
            ch = widths[d - 1];
        }
        skips.push((x.clone(), ch));
        x = b.push(format!("enc{d}_pool"), NodeKind::MaxPool { window: 2, stride: 2 }, &[&x], s);
    }
    let bridge = (2 * widths[depth - 1]).min(MAX_WIDTH);
    for k in 1..=2 {
        x = b.conv_bn_relu("bridge", k, &x, ch, bridge, Section::Bridge);
        ch = bridge;
    }
    for d in (1..=depth).rev() {
        let s = Section::Decoder(d);
        let prefix = format!("dec{d}");
        let w = widths[d - 1];
        let (skip, skip_ch) = &skips[d - 1];
        let up = b.upsample(&prefix, &x, skip, ch, w, s);
        x = b.push(format!("{prefix}_concat"), NodeKind::Concat, &[&up, skip], s);
        ch = w + skip_ch;
        for k in 1..=convs[d - 1] {
            x = b.conv_bn_relu(&prefix, k, &x, ch, w, s);
            ch = w;
        }
    }
    b.head(&x, ch);
    let spec = GraphSpec {
        nodes: b.nodes,
        input_channels: 3,
        encoder_depth: depth,
        convs_per_section: convs.to_vec(),
        channel_widths: widths.to_vec(),
        skip_style: SkipStyle::Sgn,
        upsampling,
        preset_name: Some(name),
    };
    spec.validate()?;
    Ok(spec)
}

fn sgn(depth: usize, base_width: usize, upsampling: DecoderUpsampling) -> Result<GraphSpec> {
    if !(1..=6).contains(&depth) {
        return Err(Error::invalid(format!("SGN depth must be in 1..=6, got {depth}")));
    }
    if base_width == 0 {
        return Err(Error::invalid("SGN base width must be positive"));
    }
    let widths: Vec<usize> = (0..depth).map(|i| (base_width << i).min(MAX_WIDTH.max(base_width))).collect();
    unet(format!("SGN{depth}"), &vec![2; depth], &widths, upsampling)
}

fn vgg_unet(variant: VggVariant, upsampling: DecoderUpsampling) -> Result<GraphSpec> {
    unet(variant.name().to_string(), &variant.convs(), &VGG_WIDTHS, upsampling)
}

/// FCN-style network over the 13-conv VGG16 stack. The first `depth` VGG
/// sections end in a max pool; the remaining VGG convolutions run unpooled
/// as a final encoder stage, so every depth keeps all 13 convolutions.
/// Each decoder section adds the upsampled tensor from below to a 1x1
/// projection of the same-depth encoder section input.
fn fcn(depth: usize, upsampling: DecoderUpsampling) -> Result<GraphSpec> {
    if !(1..=3).contains(&depth) {
        return Err(Error::invalid(format!("FCN depth must be 1, 2 or 3, got {depth}")));
    }
    let mut b = Builder { nodes: Vec::new(), upsampling };
    let mut x = INPUT.to_string();
    let mut ch = 3;
    let mut section_inputs = Vec::with_capacity(depth);
    for d in 1..=depth {
        let s = Section::Encoder(d);
        section_inputs.push((x.clone(), ch));
        for k in 1..=VGG16_CONVS[d - 1] {
            x = b.conv_bn_relu(&format!("enc{d}"), k, &x, ch, VGG_WIDTHS[d - 1], s);
            ch = VGG_WIDTHS[d - 1];
        }
        x = b.push(format!("enc{d}_pool"), NodeKind::MaxPool { window: 2, stride: 2 }, &[&x], s);
    }
    let last = depth + 1;
    let mut k = 0;
    for vgg_section in depth..5 {
        for _ in 0..VGG16_CONVS[vgg_section] {
            k += 1;
            x = b.conv_bn_relu(&format!("enc{last}"), k, &x, ch, VGG_WIDTHS[vgg_section], Section::Encoder(last));
            ch = VGG_WIDTHS[vgg_section];
        }
    }
    for d in (1..=depth).rev() {
        let s = Section::Decoder(d);
        let prefix = format!("dec{d}");
        let w = VGG_WIDTHS[d - 1];
        let (skip, skip_ch) = &section_inputs[d - 1];
        let up = b.upsample(&prefix, &x, skip, ch, w, s);
        let proj = b.conv1x1(format!("{prefix}_skipproj"), skip, *skip_ch, w, s);
        x = b.push(format!("{prefix}_add"), NodeKind::Add, &[&up, &proj], s);
        ch = w;
    }
    b.head(&x, ch);
    let mut convs = VGG16_CONVS[..depth].to_vec();
    convs.push(k);
    let spec = GraphSpec {
        nodes: b.nodes,
        input_channels: 3,
        encoder_depth: depth,
        convs_per_section: convs,
        channel_widths: VGG_WIDTHS[..depth].to_vec(),
        skip_style: SkipStyle::Fcn,
        upsampling,
        preset_name: Some(format!("FCN{}", 64 >> depth)),
    };
    spec.validate()?;
    Ok(spec)
}

/// Donor-name mapping for the VGG-initialized presets: maps
/// `features.conv{s}_{k}.{weight,bias}` of a VGG16/VGG19 donor onto the
/// target encoder convolutions, in stack order.
pub(crate) fn vgg_donor_names(spec: &GraphSpec) -> Vec<(String, String)> {
    let convs = if spec.preset_name.as_deref() == Some("VGG19") { VGG19_CONVS } else { VGG16_CONVS };
    let donor: Vec<String> = (0..5)
        .flat_map(|s| (1..=convs[s]).map(move |k| format!("features.conv{}_{}", s + 1, k)))
        .collect();
    let target: Vec<&str> = spec
        .nodes
        .iter()
        .filter(|n| n.section.is_encoder() && matches!(n.kind, NodeKind::Conv { .. }))
        .map(|n| n.id.as_str())
        .collect();
    donor
        .iter()
        .zip(target)
        .flat_map(|(d, t)| {
            ["weight", "bias"].map(|suffix| (format!("{d}.{suffix}"), format!("{t}.{suffix}")))
        })
        .collect()
}
