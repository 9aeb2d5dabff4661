use super::{resize_label, resize_sample, Sample};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Random-crop sampling parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CropConfig {
    pub crops_per_image: usize,
    /// Minimum lesion share among the non-background pixels of a crop.
    pub min_lesion_frac: f64,
    /// Crop extents as fractions of the image extents, drawn uniformly.
    pub size_frac: (f64, f64),
    /// Draws rejected before falling back to an unconstrained crop.
    pub max_rejections: usize,
}

impl Default for CropConfig {
    fn default() -> Self {
        Self {
            crops_per_image: 10,
            min_lesion_frac: 0.05,
            size_frac: (0.4, 0.8),
            max_rejections: 100,
        }
    }
}

impl CropConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.size_frac;
        if !(0.0 < lo && lo <= hi && hi <= 1.0) {
            return Err(Error::Config(format!("crop size range [{lo}, {hi}] must lie in (0, 1]")));
        }
        if !(0.0..=1.0).contains(&self.min_lesion_frac) {
            return Err(Error::Config("minimum lesion fraction must be in [0, 1]".into()));
        }
        Ok(())
    }
}

fn crop_image(img: &Tensor<f32>, top: usize, left: usize, h: usize, w: usize) -> Result<Tensor<f32>> {
    let (c, _, iw) = img.chw()?;
    let mut data = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        let p = img.plane(ch);
        for r in top..top + h {
            data.extend_from_slice(&p[r * iw + left..r * iw + left + w]);
        }
    }
    Tensor::from_vec(&[c, h, w], data)
}

/// Random window `(top, left, height, width)` with each extent drawn
/// uniformly from the configured fraction of the image extent.
fn draw_window(h: usize, w: usize, cfg: &CropConfig, rng: &mut Rng) -> (usize, usize, usize, usize) {
    let extent = |n: usize, rng: &mut Rng| {
        let lo = ((cfg.size_frac.0 * n as f64).ceil().max(1.0) as usize).min(n);
        let hi = ((cfg.size_frac.1 * n as f64).floor() as usize).clamp(lo, n);
        lo + rng.below(hi - lo + 1)
    };
    let ch = extent(h, rng);
    let cw = extent(w, rng);
    (rng.below(h - ch + 1), rng.below(w - cw + 1), ch, cw)
}

/// `cfg.crops_per_image` random crops of `s`, each resized to `target`.
/// A crop is redrawn until its lesion share (after resizing) reaches
/// `min_lesion_frac`;
/// after `max_rejections` failed draws the next draw is accepted as is.
pub fn crop_sample(s: &Sample, cfg: &CropConfig, target: (usize, usize), rng: &mut Rng) -> Result<Vec<Sample>> {
    cfg.validate()?;
    let (h, w) = s.dims();
    let mut out = Vec::with_capacity(cfg.crops_per_image);
    for i in 0..cfg.crops_per_image {
        let mut rejected = 0;
        let (top, left, ch, cw) = loop {
            let (top, left, ch, cw) = draw_window(h, w, cfg, rng);
            if cfg.min_lesion_frac <= 0.0 || rejected >= cfg.max_rejections {
                break (top, left, ch, cw);
            }
            let resized = resize_label(&s.label.crop(top, left, ch, cw)?, target.0, target.1)?;
            if resized.lesion_fraction() >= cfg.min_lesion_frac {
                break (top, left, ch, cw);
            }
            rejected += 1;
        };
        let crop = Sample::new(
            crop_image(&s.image, top, left, ch, cw)?,
            s.label.crop(top, left, ch, cw)?,
            format!("{}|crop{i}", s.source_id),
        )?;
        out.push(resize_sample(&crop, target.0, target.1)?);
    }
    Ok(out)
}

/// The cropped-set protocol: every sample of `cropped` contributes
/// `cfg.crops_per_image` crops, every sample of `kept` is added whole
/// (resized to `target`). Each source draws from its own child stream.
pub fn crop_protocol(cropped: &[Sample], kept: &[Sample], cfg: &CropConfig, target: (usize, usize), seed: u64) -> Result<Vec<Sample>> {
    let root = Rng::new(seed);
    let mut out = Vec::with_capacity(cropped.len() * cfg.crops_per_image + kept.len());
    for s in cropped {
        let mut rng = root.child(&s.source_id, 0);
        out.extend(crop_sample(s, cfg, target, &mut rng)?);
    }
    for s in kept {
        out.push(resize_sample(s, target.0, target.1)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_lesion, SynthConfig};

    #[test]
    fn crops_meet_lesion_threshold() {
        let cfg = SynthConfig { height: 48, width: 64, ..Default::default() };
        let samples = synth_lesion(10, &cfg, 3).unwrap();
        let crop = CropConfig { crops_per_image: 100, ..Default::default() };
        let mut rng = Rng::new(1);
        let mut n = 0;
        for s in &samples {
            for c in crop_sample(s, &crop, (24, 32), &mut rng).unwrap() {
                assert!(c.label.lesion_fraction() >= 0.05, "{}", c.label.lesion_fraction());
                assert_eq!(c.dims(), (24, 32));
                n += 1;
            }
        }
        assert_eq!(n, 1000);
    }

    #[test]
    fn lesion_free_images_fall_back() {
        let s = synth_lesion(1, &SynthConfig { height: 50, width: 100, ..Default::default() }, 1).unwrap().remove(0);
        let cfg = CropConfig { crops_per_image: 1, min_lesion_frac: 0.0, ..Default::default() };
        let mut rng = Rng::new(2);
        let mut blank = s.clone();
        blank.label = crate::label::LabelMap::filled(50, 100, 1).unwrap();
        let strict = CropConfig { crops_per_image: 3, min_lesion_frac: 0.5, ..Default::default() };
        assert_eq!(crop_sample(&blank, &strict, (50, 100), &mut rng).unwrap().len(), 3);
        assert_eq!(crop_sample(&s, &cfg, (10, 10), &mut rng).unwrap().len(), 1);
    }

    #[test]
    fn windows_stay_inside_size_range() {
        let cfg = CropConfig::default();
        let mut rng = Rng::new(5);
        for _ in 0..1000 {
            let (t, l, h, w) = draw_window(50, 101, &cfg, &mut rng);
            assert!((20..=40).contains(&h) && (41..=80).contains(&w), "{h}x{w}");
            assert!(t + h <= 50 && l + w <= 101);
        }
    }

    #[test]
    fn protocol_count() {
        let cfg = SynthConfig { height: 32, width: 32, ..Default::default() };
        let a = synth_lesion(4, &cfg, 1).unwrap();
        let b = synth_lesion(3, &cfg, 2).unwrap();
        let out = crop_protocol(&a, &b, &CropConfig::default(), (16, 16), 0).unwrap();
        assert_eq!(out.len(), 43);
        assert!(out[0].source_id.ends_with("|crop0"));
    }
}
