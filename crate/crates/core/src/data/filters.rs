use super::clamp01;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Strength of the Laplacian sharpening in [`FilterKind::EdgeEnhance`].
pub const EDGE_ALPHA: f32 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterKind {
    /// Per-channel 256-bin histogram equalization.
    HistEq,
    /// Per-channel 3x3 median.
    Median,
    /// `x - alpha * laplacian(x)`.
    EdgeEnhance,
}

impl FilterKind {
    pub const ALL: [FilterKind; 3] = [FilterKind::HistEq, FilterKind::Median, FilterKind::EdgeEnhance];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::HistEq => "hist_eq",
            FilterKind::Median => "median",
            FilterKind::EdgeEnhance => "edge_enhance",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        FilterKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown filter `{s}`")))
    }
}

fn bin(v: f32) -> usize {
    ((v.clamp(0.0, 1.0) * 256.0) as usize).min(255)
}

fn hist_eq(plane: &mut [f32]) {
    let mut hist = [0usize; 256];
    for &v in plane.iter() {
        hist[bin(v)] += 1;
    }
    let mut cdf = [0usize; 256];
    let mut acc = 0;
    for (c, h) in cdf.iter_mut().zip(hist) {
        acc += h;
        *c = acc;
    }
    let n = plane.len();
    let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
    if n == cdf_min {
        return;
    }
    let denom = (n - cdf_min) as f32;
    for v in plane.iter_mut() {
        *v = (cdf[bin(*v)] - cdf_min) as f32 / denom;
    }
}

/// Applies one preprocessing filter to every channel of `image`.
pub fn preprocess_filter(image: &Tensor<f32>, kind: FilterKind) -> Result<Tensor<f32>> {
    let (c, h, w) = image.chw()?;
    let mut out = image.clone();
    let at = |p: &[f32], r: isize, col: isize| {
        let r = r.clamp(0, h as isize - 1) as usize;
        let col = col.clamp(0, w as isize - 1) as usize;
        p[r * w + col]
    };
    for ch in 0..c {
        let src = image.plane(ch);
        let dst = out.plane_mut(ch);
        match kind {
            FilterKind::HistEq => hist_eq(dst),
            FilterKind::Median => {
                let mut win = [0f32; 9];
                for r in 0..h as isize {
                    for col in 0..w as isize {
                        let mut k = 0;
                        for dr in -1..=1 {
                            for dc in -1..=1 {
                                win[k] = at(src, r + dr, col + dc);
                                k += 1;
                            }
                        }
                        win.sort_by(|a, b| a.total_cmp(b));
                        dst[r as usize * w + col as usize] = win[4];
                    }
                }
            }
            FilterKind::EdgeEnhance => {
                for r in 0..h as isize {
                    for col in 0..w as isize {
                        let x = at(src, r, col);
                        let lap = at(src, r - 1, col) + at(src, r + 1, col) + at(src, r, col - 1) + at(src, r, col + 1)
                            - 4.0 * x;
                        dst[r as usize * w + col as usize] = clamp01(x - EDGE_ALPHA * lap);
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn constant_image_is_fixed_by_median_and_edges() {
        let img = Tensor::new(&[3, 7, 9], 0.37f32).unwrap();
        for k in [FilterKind::Median, FilterKind::EdgeEnhance, FilterKind::HistEq] {
            assert!(preprocess_filter(&img, k).unwrap().bit_eq(&img), "{}", k.name());
        }
    }

    #[test]
    fn median_removes_isolated_salt() {
        let mut img = Tensor::new(&[1, 5, 5], 0.2f32).unwrap();
        img.set(&[0, 2, 2], 1.0);
        img.set(&[0, 0, 0], 0.0);
        let out = preprocess_filter(&img, FilterKind::Median).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.2));
    }

    #[test]
    fn uniform_histogram_is_nearly_fixed() {
        // every bin holds the same count, values at bin centres
        let mut data: Vec<f32> = (0..256 * 4).map(|i| ((i % 256) as f32 + 0.5) / 256.0).collect();
        Rng::new(1).shuffle(&mut data);
        let img = Tensor::from_vec(&[1, 32, 32], data).unwrap();
        let out = preprocess_filter(&img, FilterKind::HistEq).unwrap();
        let max = img.sub(&out).unwrap().max_abs();
        assert!(max <= 1.0 / 256.0 + 1e-6, "{max}");
    }

    #[test]
    fn edge_enhance_sharpens_a_step() {
        let data: Vec<f32> = (0..8).map(|i| if i < 4 { 0.4 } else { 0.6 }).collect();
        let img = Tensor::from_vec(&[1, 1, 8], data).unwrap();
        let out = preprocess_filter(&img, FilterKind::EdgeEnhance).unwrap();
        assert!(out.data()[3] < 0.4 && out.data()[4] > 0.6);
        assert_eq!(out.data()[0], 0.4);
    }

    #[test]
    fn filter_names_parse() {
        for k in FilterKind::ALL {
            assert_eq!(FilterKind::parse(k.name()).unwrap(), k);
        }
        assert!(FilterKind::parse("blur").is_err());
    }
}
