use crate::label::{LabelMap, LESION, SKIN};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum WeightScheme {
    /// `w_c = median(f) / f_c`.
    #[default]
    MedianFrequency,
    /// `w_c = 1 / f_c`.
    InverseFrequency,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassWeights {
    /// `[skin, lesion]`.
    pub weights: [f64; 2],
    /// Mean per-image frequency of each class over images containing it.
    pub frequencies: [f64; 2],
    pub warnings: Vec<String>,
}

/// Class weights from per-image frequencies. `f_c` is the share of class
/// `c` among the non-background pixels of an image, averaged over the
/// images that contain `c`. An absent class gets weight 0 and a warning.
pub fn class_weights<'a>(labels: impl IntoIterator<Item = &'a LabelMap>, scheme: WeightScheme) -> ClassWeights {
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    for l in labels {
        let valid = l.valid_pixels();
        if valid == 0 {
            continue;
        }
        for (k, class) in [SKIN, LESION].into_iter().enumerate() {
            let n = l.count(class);
            if n > 0 {
                sums[k] += n as f64 / valid as f64;
                counts[k] += 1;
            }
        }
    }
    let freq = [0, 1].map(|k| if counts[k] > 0 { sums[k] / counts[k] as f64 } else { 0.0 });
    let present: Vec<f64> = freq.iter().copied().filter(|&f| f > 0.0).collect();
    let median = match present.len() {
        0 => 0.0,
        1 => present[0],
        _ => 0.5 * (present[0] + present[1]),
    };
    let mut warnings = Vec::new();
    let weights = [0, 1].map(|k| {
        if freq[k] == 0.0 {
            0.0
        } else {
            match scheme {
                WeightScheme::MedianFrequency => median / freq[k],
                WeightScheme::InverseFrequency => 1.0 / freq[k],
            }
        }
    });
    for (k, name) in ["skin", "lesion"].into_iter().enumerate() {
        if freq[k] == 0.0 {
            warnings.push(format!("class {name} never occurs; its weight is 0"));
        }
    }
    ClassWeights {
        weights,
        frequencies: freq,
        warnings,
    }
}
