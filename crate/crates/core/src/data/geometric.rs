use super::Sample;
use crate::error::{Error, Result};
use crate::label::{LabelMap, BACKGROUND};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Ranges of the random geometric transforms. Setting a range to a single
/// value (or a flag to false) disables that transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeometricConfig {
    pub reflect_x: bool,
    pub reflect_y: bool,
    /// Translation range in pixels, applied independently along x and y.
    pub translate_px: (f64, f64),
    pub rotate_deg: (f64, f64),
    pub scale: (f64, f64),
}

impl Default for GeometricConfig {
    fn default() -> Self {
        Self {
            reflect_x: true,
            reflect_y: true,
            translate_px: (-100.0, 100.0),
            rotate_deg: (-30.0, 30.0),
            scale: (0.75, 1.5),
        }
    }
}

impl GeometricConfig {
    /// No transform at all.
    pub fn none() -> Self {
        Self {
            reflect_x: false,
            reflect_y: false,
            translate_px: (0.0, 0.0),
            rotate_deg: (0.0, 0.0),
            scale: (1.0, 1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("translation", self.translate_px),
            ("rotation", self.rotate_deg),
            ("scale", self.scale),
        ] {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Config(format!("{name} range [{lo}, {hi}] is invalid")));
            }
        }
        if !(self.scale.0 > 0.0) {
            return Err(Error::Config("scale range must be positive".into()));
        }
        Ok(())
    }
}

/// One concrete draw of the geometric transforms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeometricDraw {
    pub flip_x: bool,
    pub flip_y: bool,
    pub tx: f64,
    pub ty: f64,
    pub angle_deg: f64,
    pub scale: f64,
}

impl GeometricDraw {
    pub fn identity() -> Self {
        Self {
            flip_x: false,
            flip_y: false,
            tx: 0.0,
            ty: 0.0,
            angle_deg: 0.0,
            scale: 1.0,
        }
    }

    pub fn sample(cfg: &GeometricConfig, rng: &mut Rng) -> Self {
        let mut range = |(lo, hi): (f64, f64)| if lo == hi { lo } else { rng.uniform_in(lo, hi) };
        let tx = range(cfg.translate_px);
        let ty = range(cfg.translate_px);
        let angle_deg = range(cfg.rotate_deg);
        let scale = range(cfg.scale);
        Self {
            flip_x: cfg.reflect_x && rng.bernoulli(0.5),
            flip_y: cfg.reflect_y && rng.bernoulli(0.5),
            tx,
            ty,
            angle_deg,
            scale,
        }
    }

    fn is_rigid_grid(&self) -> bool {
        self.tx == 0.0 && self.ty == 0.0 && self.angle_deg == 0.0 && self.scale == 1.0
    }
}

/// Applies a draw: reflect, then rotate and scale about the image centre,
/// then translate. Images are resampled bilinearly, labels by nearest
/// neighbor; regions exposed by the transform become 0 / background.
pub fn apply_geometric(s: &Sample, d: &GeometricDraw) -> Result<Sample> {
    let (h, w) = s.dims();
    let (c, _, _) = s.image.chw()?;
    let fx = |x: f64| if d.flip_x { (w - 1) as f64 - x } else { x };
    let fy = |y: f64| if d.flip_y { (h - 1) as f64 - y } else { y };
    let mut image = Tensor::zeros(&[c, h, w]);
    let mut labels = vec![BACKGROUND; h * w];

    if d.is_rigid_grid() {
        for r in 0..h {
            let sr = fy(r as f64) as usize;
            for col in 0..w {
                let sc = fx(col as f64) as usize;
                labels[r * w + col] = s.label.get(sr, sc);
                for ch in 0..c {
                    image.plane_mut(ch)[r * w + col] = s.image.plane(ch)[sr * w + sc];
                }
            }
        }
        return Sample::new(image, LabelMap::new(h, w, labels)?, s.source_id.clone());
    }

    let (cy, cx) = ((h - 1) as f64 / 2.0, (w - 1) as f64 / 2.0);
    let theta = d.angle_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let eps = 1e-9;
    for r in 0..h {
        for col in 0..w {
            // inverse map: output -> reflected source coordinates
            let ox = col as f64 - cx - d.tx;
            let oy = r as f64 - cy - d.ty;
            let qx = (cos * ox + sin * oy) / d.scale + cx;
            let qy = (-sin * ox + cos * oy) / d.scale + cy;
            let (sx, sy) = (fx(qx), fy(qy));
            if sx < -eps || sy < -eps || sx > (w - 1) as f64 + eps || sy > (h - 1) as f64 + eps {
                continue;
            }
            let sx = sx.clamp(0.0, (w - 1) as f64);
            let sy = sy.clamp(0.0, (h - 1) as f64);
            labels[r * w + col] = s.label.get(sy.round() as usize, sx.round() as usize);
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (ax, ay) = ((sx - x0 as f64) as f32, (sy - y0 as f64) as f32);
            for ch in 0..c {
                let p = s.image.plane(ch);
                let top = p[y0 * w + x0] * (1.0 - ax) + p[y0 * w + x1] * ax;
                let bot = p[y1 * w + x0] * (1.0 - ax) + p[y1 * w + x1] * ax;
                image.plane_mut(ch)[r * w + col] = top * (1.0 - ay) + bot * ay;
            }
        }
    }
    Sample::new(image, LabelMap::new(h, w, labels)?, s.source_id.clone())
}

/// One random draw per transform within `cfg`, applied to `s`.
pub fn augment_geometric(s: &Sample, cfg: &GeometricConfig, rng: &mut Rng) -> Result<Sample> {
    let d = GeometricDraw::sample(cfg, rng);
    apply_geometric(s, &d)
}
