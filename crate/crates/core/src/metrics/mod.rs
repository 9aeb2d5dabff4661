//! Segmentation metrics over `{Skin, Lesion}` with background pixels of the
//! ground truth excluded. Undefined rates (zero denominators) are `None`.

mod boundary;
mod report;

use crate::error::{Error, Result};
use crate::label::{LabelMap, BACKGROUND, LESION, SKIN};

pub use boundary::{boundary_f1, boundary_mask, default_tolerance};
pub use report::{report, Aggregation, ClassMetrics, ImageMetrics, MetricsReport};

/// Index of a scored class in `[skin, lesion]` order.
fn class_index(c: u8) -> Option<usize> {
    match c {
        SKIN => Some(0),
        LESION => Some(1),
        _ => None,
    }
}

/// Pixel counts `counts[actual][predicted]` over non-background truth pixels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 2]; 2],
    /// Valid pixels predicted as background, per actual class.
    pub abstain: [u64; 2],
    pub valid_pixels: u64,
}

impl ConfusionMatrix {
    pub fn add(&mut self, other: &ConfusionMatrix) {
        for a in 0..2 {
            for p in 0..2 {
                self.counts[a][p] += other.counts[a][p];
            }
            self.abstain[a] += other.abstain[a];
        }
        self.valid_pixels += other.valid_pixels;
    }

    /// Actual positives of class index `k`.
    pub fn positives(&self, k: usize) -> u64 {
        self.counts[k][0] + self.counts[k][1] + self.abstain[k]
    }

    pub fn true_positives(&self, k: usize) -> u64 {
        self.counts[k][k]
    }

    /// Pixels of the other class predicted as `k`.
    pub fn false_positives(&self, k: usize) -> u64 {
        self.counts[1 - k][k]
    }

    /// Pixels of class `k` predicted as anything else (including abstain).
    pub fn false_negatives(&self, k: usize) -> u64 {
        self.positives(k) - self.true_positives(k)
    }
}

fn check_pair(pred: &LabelMap, truth: &LabelMap) -> Result<()> {
    if pred.dims() != truth.dims() {
        return Err(Error::shape(format!(
            "prediction {:?} and ground truth {:?} differ in size",
            pred.dims(),
            truth.dims()
        )));
    }
    Ok(())
}

pub fn confusion(pred: &LabelMap, truth: &LabelMap) -> Result<ConfusionMatrix> {
    check_pair(pred, truth)?;
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        let Some(a) = class_index(t) else { continue };
        cm.valid_pixels += 1;
        match class_index(p) {
            Some(k) => cm.counts[a][k] += 1,
            None => cm.abstain[a] += 1,
        }
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Per-class accuracy `TP / P` with unweighted and pixel-weighted means.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Accuracy {
    pub per_class: [Option<f64>; 2],
    pub mean: Option<f64>,
    pub weighted: Option<f64>,
}

pub fn accuracy(cm: &ConfusionMatrix) -> Accuracy {
    let per_class = [0, 1].map(|k| ratio(cm.true_positives(k), cm.positives(k)));
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    let tp = cm.true_positives(0) + cm.true_positives(1);
    let p = cm.positives(0) + cm.positives(1);
    Accuracy {
        per_class,
        mean,
        weighted: ratio(tp, p),
    }
}

/// Intersection over union of `class` among non-background truth pixels.
pub fn iou(pred: &LabelMap, truth: &LabelMap, class: u8) -> Result<Option<f64>> {
    let k = class_index(class).ok_or_else(|| Error::invalid(format!("class {class} is not scored")))?;
    Ok(iou_from(&confusion(pred, truth)?, k))
}

pub(crate) fn iou_from(cm: &ConfusionMatrix, k: usize) -> Option<f64> {
    let tp = cm.true_positives(k);
    ratio(tp, cm.positives(k) + cm.false_positives(k))
}

/// `(PPV, TPR, F1)` of class index `k` (0 skin, 1 lesion).
pub fn precision_recall_f1(cm: &ConfusionMatrix, k: usize) -> (Option<f64>, Option<f64>, Option<f64>) {
    let tp = cm.true_positives(k);
    let ppv = ratio(tp, tp + cm.false_positives(k));
    let tpr = ratio(tp, cm.positives(k));
    let f1 = match (ppv, tpr) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    (ppv, tpr, f1)
}

/// Mean per-class accuracy of one pair, the default validation metric.
pub fn mean_accuracy(pred: &LabelMap, truth: &LabelMap) -> Result<Option<f64>> {
    Ok(accuracy(&confusion(pred, truth)?).mean)
}

pub(crate) const BACKGROUND_CLASS: u8 = BACKGROUND;
