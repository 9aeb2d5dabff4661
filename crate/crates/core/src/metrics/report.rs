use std::fmt::Write as _;

use super::{accuracy, boundary_f1, confusion, default_tolerance, iou_from, precision_recall_f1, ConfusionMatrix};
use crate::error::Result;
use crate::label::{class_name, LabelMap, CLASSES};

/// How per-image results are combined into dataset figures.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Aggregation {
    /// Per-image metrics, then the mean over images where defined.
    #[default]
    Macro,
    /// Metrics of the pooled confusion matrix. Boundary F1 stays per-image.
    Micro,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ClassMetrics {
    pub accuracy: Option<f64>,
    pub iou: Option<f64>,
    pub ppv: Option<f64>,
    pub tpr: Option<f64>,
    pub f1: Option<f64>,
    pub bf1: Option<f64>,
}

impl ClassMetrics {
    fn from_confusion(cm: &ConfusionMatrix, k: usize) -> Self {
        let (ppv, tpr, f1) = precision_recall_f1(cm, k);
        ClassMetrics {
            accuracy: accuracy(cm).per_class[k],
            iou: iou_from(cm, k),
            ppv,
            tpr,
            f1,
            bf1: None,
        }
    }

    fn fields(&self) -> [Option<f64>; 6] {
        [self.accuracy, self.iou, self.ppv, self.tpr, self.f1, self.bf1]
    }

    fn from_fields(f: [Option<f64>; 6]) -> Self {
        ClassMetrics {
            accuracy: f[0],
            iou: f[1],
            ppv: f[2],
            tpr: f[3],
            f1: f[4],
            bf1: f[5],
        }
    }

    /// Field-wise mean ignoring undefined entries.
    fn mean_of<'a>(items: impl Iterator<Item = &'a ClassMetrics>) -> Self {
        let mut sum = [0.0; 6];
        let mut n = [0usize; 6];
        for m in items {
            for (j, v) in m.fields().into_iter().enumerate() {
                if let Some(v) = v {
                    sum[j] += v;
                    n[j] += 1;
                }
            }
        }
        Self::from_fields(std::array::from_fn(|j| (n[j] > 0).then(|| sum[j] / n[j] as f64)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageMetrics {
    pub source_id: String,
    pub confusion: ConfusionMatrix,
    /// `[skin, lesion]`.
    pub classes: [ClassMetrics; 2],
    pub mean_accuracy: Option<f64>,
    pub weighted_accuracy: Option<f64>,
}

impl ImageMetrics {
    pub fn compute(source_id: &str, pred: &LabelMap, truth: &LabelMap) -> Result<Self> {
        let cm = confusion(pred, truth)?;
        let (h, w) = truth.dims();
        let tol = default_tolerance(h, w);
        let mut classes = [0, 1].map(|k| ClassMetrics::from_confusion(&cm, k));
        for (k, &c) in CLASSES.iter().enumerate() {
            classes[k].bf1 = Some(boundary_f1(pred, truth, c, tol)?);
        }
        let acc = accuracy(&cm);
        Ok(ImageMetrics {
            source_id: source_id.to_string(),
            confusion: cm,
            classes,
            mean_accuracy: acc.mean,
            weighted_accuracy: acc.weighted,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub aggregation: Aggregation,
    /// Sorted by source id.
    pub images: Vec<ImageMetrics>,
    /// Dataset figures per class, `[skin, lesion]`.
    pub classes: [ClassMetrics; 2],
    /// Mean over the two classes of [`Self::classes`].
    pub mean: ClassMetrics,
    pub mean_accuracy: Option<f64>,
    pub weighted_accuracy: Option<f64>,
    /// Pooled over all images.
    pub confusion: ConfusionMatrix,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"))
}

fn mean_defined(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (s, n) = v.flatten().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Scores each `(source_id, pred, truth)` triple and aggregates them.
pub fn report<'a, I>(pairs: I, aggregation: Aggregation) -> Result<MetricsReport>
where
    I: IntoIterator<Item = (&'a str, &'a LabelMap, &'a LabelMap)>,
{
    let mut images = Vec::new();
    for (id, pred, truth) in pairs {
        images.push(ImageMetrics::compute(id, pred, truth)?);
    }
    images.sort_by(|a, b| a.source_id.cmp(&b.source_id));
    let mut pooled = ConfusionMatrix::default();
    for im in &images {
        pooled.add(&im.confusion);
    }
    let (classes, mean_accuracy, weighted_accuracy) = match aggregation {
        Aggregation::Macro => (
            [0, 1].map(|k| ClassMetrics::mean_of(images.iter().map(|im| &im.classes[k]))),
            mean_defined(images.iter().map(|im| im.mean_accuracy)),
            mean_defined(images.iter().map(|im| im.weighted_accuracy)),
        ),
        Aggregation::Micro => {
            let mut c = [0, 1].map(|k| ClassMetrics::from_confusion(&pooled, k));
            for (k, cls) in c.iter_mut().enumerate() {
                cls.bf1 = mean_defined(images.iter().map(|im| im.classes[k].bf1));
            }
            let acc = accuracy(&pooled);
            (c, acc.mean, acc.weighted)
        }
    };
    Ok(MetricsReport {
        aggregation,
        mean: ClassMetrics::mean_of(classes.iter()),
        classes,
        mean_accuracy,
        weighted_accuracy,
        confusion: pooled,
        images,
    })
}

impl MetricsReport {
    /// `source_id,class,accuracy,iou,ppv,tpr,f1,bf1`, one row per image and
    /// class, then `AGGREGATE` rows per class and for the class mean.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("source_id,class,accuracy,iou,ppv,tpr,f1,bf1\n");
        let row = |out: &mut String, id: &str, class: &str, m: &ClassMetrics| {
            let cells: Vec<String> = m.fields().into_iter().map(fmt_opt).collect();
            let _ = writeln!(out, "{id},{class},{}", cells.join(","));
        };
        for im in &self.images {
            for (k, &c) in CLASSES.iter().enumerate() {
                row(&mut out, &im.source_id, class_name(c), &im.classes[k]);
            }
        }
        for (k, &c) in CLASSES.iter().enumerate() {
            row(&mut out, "AGGREGATE", class_name(c), &self.classes[k]);
        }
        row(&mut out, "AGGREGATE", "mean", &self.mean);
        out
    }

    /// Rows `source_id,actual,pred_skin,pred_lesion,abstain` per image and
    /// for the pooled matrix.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("source_id,actual,pred_skin,pred_lesion,abstain\n");
        let mut rows = |id: &str, cm: &ConfusionMatrix| {
            for (k, &c) in CLASSES.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{id},{},{},{},{}",
                    class_name(c),
                    cm.counts[k][0],
                    cm.counts[k][1],
                    cm.abstain[k]
                );
            }
        };
        for im in &self.images {
            rows(&im.source_id, &im.confusion);
        }
        rows("AGGREGATE", &self.confusion);
        out
    }

    /// Short human-readable summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "images: {}", self.images.len());
        for (k, &c) in CLASSES.iter().enumerate() {
            let m = &self.classes[k];
            let _ = writeln!(
                s,
                "{:<7} acc {} iou {} f1 {} bf1 {}",
                class_name(c),
                fmt_opt(m.accuracy),
                fmt_opt(m.iou),
                fmt_opt(m.f1),
                fmt_opt(m.bf1)
            );
        }
        let _ = writeln!(
            s,
            "mean accuracy {} weighted accuracy {}",
            fmt_opt(self.mean_accuracy),
            fmt_opt(self.weighted_accuracy)
        );
        s
    }
}
