use std::f64::consts::PI;

use super::{clamp01, Sample};
use crate::error::{Error, Result};
use crate::label::{LabelMap, BACKGROUND, LESION, SKIN};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Lesion share among non-background pixels every synthetic sample meets.
pub const LESION_FRACTION_RANGE: (f64, f64) = (0.02, 0.30);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    /// Surround the image with a dark band labeled background.
    pub border: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            height: 96,
            width: 96,
            border: false,
        }
    }
}

struct Ellipse {
    cy: f64,
    cx: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
    tone: f64,
}

impl Ellipse {
    fn contains(&self, y: f64, x: f64) -> bool {
        let (dy, dx) = (y - self.cy, x - self.cx);
        let u = dx * self.cos + dy * self.sin;
        let v = -dx * self.sin + dy * self.cos;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }
}

fn one_sample(cfg: &SynthConfig, rng: &mut Rng, id: String) -> Result<Sample> {
    let (h, w) = (cfg.height, cfg.width);
    let band = if cfg.border { (h.min(w) / 16).max(2) } else { 0 };
    let inner = ((h - 2 * band) * (w - 2 * band)) as f64;

    // skin: warm base tone with a few low-frequency waves and fine grain
    let base = rng.uniform_in(0.65, 0.75);
    let tint = [0.06, 0.0, -0.06];
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let freq = rng.uniform_in(0.5, 2.5) * 2.0 * PI;
            let dir = rng.uniform_in(0.0, PI);
            (freq * dir.cos(), freq * dir.sin(), rng.uniform_in(0.0, 2.0 * PI), rng.uniform_in(0.01, 0.03))
        })
        .collect();

    let (lesions, labels) = loop {
        let k = 1 + rng.below(3);
        let total = rng.uniform_in(0.04, 0.22);
        let lesions: Vec<Ellipse> = (0..k)
            .map(|_| {
                let area = total / k as f64 * inner;
                let ratio = rng.uniform_in(0.6, 1.0);
                let a = (area / (PI * ratio)).sqrt();
                let theta = rng.uniform_in(0.0, PI);
                Ellipse {
                    cy: rng.uniform_in(0.25, 0.75) * h as f64,
                    cx: rng.uniform_in(0.25, 0.75) * w as f64,
                    a,
                    b: a * ratio,
                    cos: theta.cos(),
                    sin: theta.sin(),
                    tone: rng.uniform_in(0.2, 0.4),
                }
            })
            .collect();
        let mut labels = vec![SKIN; h * w];
        for r in 0..h {
            for c in 0..w {
                if r < band || c < band || r >= h - band || c >= w - band {
                    labels[r * w + c] = BACKGROUND;
                } else if lesions.iter().any(|e| e.contains(r as f64, c as f64)) {
                    labels[r * w + c] = LESION;
                }
            }
        }
        let map = LabelMap::new(h, w, labels)?;
        let f = map.lesion_fraction();
        if (LESION_FRACTION_RANGE.0..=LESION_FRACTION_RANGE.1).contains(&f) {
            break (lesions, map);
        }
    };

    let mut image = Tensor::zeros(&[3, h, w]);
    for r in 0..h {
        for c in 0..w {
            let (y, x) = (r as f64 / h as f64, c as f64 / w as f64);
            let label = labels.get(r, c);
            let tone = match label {
                BACKGROUND => 0.05,
                LESION => lesions
                    .iter()
                    .find(|e| e.contains(r as f64, c as f64))
                    .map_or(0.3, |e| e.tone),
                _ => base + waves.iter().map(|&(fx, fy, ph, amp)| amp * (fx * x + fy * y + ph).sin()).sum::<f64>(),
            };
            for (ch, t) in tint.iter().enumerate() {
                let shade = if label == SKIN { *t } else { t * 0.5 };
                let v = tone + shade + 0.01 * rng.normal();
                image.plane_mut(ch)[r * w + c] = clamp01(v as f32);
            }
        }
    }
    Sample::new(image, labels, id)
}

/// `n` synthetic skin images with 1-3 dark elliptical lesions and exact
/// labels. Sample `i` depends only on `seed` and `i`.
pub fn synth_lesion(n: usize, cfg: &SynthConfig, seed: u64) -> Result<Vec<Sample>> {
    if cfg.height < 32 || cfg.width < 32 {
        return Err(Error::invalid(format!(
            "synthetic samples need at least 32x32 pixels, got {}x{}",
            cfg.height, cfg.width
        )));
    }
    let root = Rng::new(seed);
    (0..n)
        .map(|i| one_sample(cfg, &mut root.child("synth", i as u64), format!("synth{i:04}")))
        .collect()
}
