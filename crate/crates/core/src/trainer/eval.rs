use std::path::Path;

use rayon::prelude::*;

use crate::checkpoint::Checkpoint;
use crate::data::{load_image, save_image, save_label, Sample};
use crate::error::{Error, Result};
use crate::graph::{GraphSpec, Network};
use crate::label::{LabelMap, LESION, SKIN};
use crate::metrics::{report, Aggregation, MetricsReport};
use crate::tensor::Tensor;

/// Per-pixel argmax of `2 x H x W` logits; ties go to skin.
pub fn argmax_labels(logits: &Tensor<f32>) -> Result<LabelMap> {
    let (c, h, w) = logits.chw()?;
    if c != 2 {
        return Err(Error::shape(format!("expected 2 logit channels, got {c}")));
    }
    let (skin, lesion) = (logits.plane(0), logits.plane(1));
    let data = skin
        .iter()
        .zip(lesion)
        .map(|(s, l)| if l > s { LESION } else { SKIN })
        .collect();
    LabelMap::new(h, w, data)
}

/// Inference-mode prediction for one image.
pub fn predict_image(net: &Network, params: &Checkpoint<f32>, image: &Tensor<f32>) -> Result<LabelMap> {
    argmax_labels(&net.infer(params, image)?)
}

/// Scores every sample (in parallel) and aggregates per image.
pub fn evaluate_samples(net: &Network, params: &Checkpoint<f32>, samples: &[Sample]) -> Result<MetricsReport> {
    evaluate_samples_as(net, params, samples, Aggregation::Macro)
}

pub fn evaluate_samples_as(
    net: &Network,
    params: &Checkpoint<f32>,
    samples: &[Sample],
    aggregation: Aggregation,
) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::Config("cannot evaluate on an empty dataset".into()));
    }
    let preds: Vec<LabelMap> = samples
        .par_iter()
        .map(|s| predict_image(net, params, &s.image))
        .collect::<Result<_>>()?;
    report(
        samples
            .iter()
            .zip(&preds)
            .map(|(s, p)| (s.source_id.as_str(), p, &s.label)),
        aggregation,
    )
}

/// The network described by a checkpoint's stored architecture.
pub fn network_for(ckpt: &Checkpoint<f32>) -> Result<Network> {
    if ckpt.metadata.arch.trim().is_empty() {
        return Err(Error::Config("checkpoint does not record its architecture".into()));
    }
    let net = Network::new(GraphSpec::from_text(&ckpt.metadata.arch)?)?;
    net.check_params(ckpt)?;
    Ok(net)
}

/// Evaluates `ckpt` on `samples`. With `expected`, the checkpoint's
/// architecture must match it.
pub fn evaluate(ckpt: &Checkpoint<f32>, samples: &[Sample], expected: Option<&GraphSpec>) -> Result<MetricsReport> {
    evaluate_as(ckpt, samples, expected, Aggregation::Macro)
}

pub fn evaluate_as(
    ckpt: &Checkpoint<f32>,
    samples: &[Sample],
    expected: Option<&GraphSpec>,
    aggregation: Aggregation,
) -> Result<MetricsReport> {
    let net = network_for(ckpt)?;
    if let Some(spec) = expected {
        if spec.to_text() != net.spec().to_text() {
            return Err(Error::Config(format!(
                "checkpoint architecture `{}` does not match the requested `{}`",
                net.spec().preset_name.as_deref().unwrap_or("custom"),
                spec.preset_name.as_deref().unwrap_or("custom")
            )));
        }
    }
    evaluate_samples_as(&net, ckpt, samples, aggregation)
}

/// Image with lesion pixels tinted red.
pub fn overlay(image: &Tensor<f32>, label: &LabelMap) -> Result<Tensor<f32>> {
    let (c, h, w) = image.chw()?;
    if c != 3 || label.dims() != (h, w) {
        return Err(Error::shape("overlay needs a 3-channel image of the label's size"));
    }
    let mut out = image.clone();
    let tint = [1.0f32, 0.0, 0.0];
    for (ch, t) in tint.iter().enumerate() {
        let plane = out.plane_mut(ch);
        for (v, &l) in plane.iter_mut().zip(label.data()) {
            if l == LESION {
                *v = 0.5 * *v + 0.5 * t;
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct Prediction {
    pub label: LabelMap,
    pub overlay: Tensor<f32>,
}

/// Predicts `image_path` at its stored size and writes `<stem>_label.png`
/// (values 1 and 2) and `<stem>_overlay.png` into `out_dir`.
pub fn predict(ckpt: &Checkpoint<f32>, image_path: &Path, out_dir: &Path) -> Result<Prediction> {
    let net = network_for(ckpt)?;
    let image = load_image(image_path)?;
    let label = predict_image(&net, ckpt, &image)?;
    let over = overlay(&image, &label)?;
    let stem = image_path.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
    save_label(&label, &out_dir.join(format!("{stem}_label.png")))?;
    save_image(&over, &out_dir.join(format!("{stem}_overlay.png")))?;
    Ok(Prediction { label, overlay: over })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_skin_on_ties() {
        let t = Tensor::from_vec(&[2, 1, 3], vec![0.0, 1.0, 2.0, 0.0, 2.0, 1.0]).unwrap();
        assert_eq!(argmax_labels(&t).unwrap().data(), &[SKIN, LESION, SKIN]);
        assert!(argmax_labels(&Tensor::zeros(&[3, 1, 1])).is_err());
    }

    #[test]
    fn overlay_only_touches_lesion() {
        let img = Tensor::new(&[3, 1, 2], 0.4f32).unwrap();
        let lab = LabelMap::new(1, 2, vec![SKIN, LESION]).unwrap();
        let o = overlay(&img, &lab).unwrap();
        assert_eq!(o.plane(0), &[0.4, 0.7]);
        assert_eq!(o.plane(1), &[0.4, 0.2]);
    }
}
