//! Per-pixel class labels.

use crate::error::{Error, Result};

pub const BACKGROUND: u8 = 0;
pub const SKIN: u8 = 1;
pub const LESION: u8 = 2;

/// The two scored classes, in logit-channel order.
pub const CLASSES: [u8; 2] = [SKIN, LESION];

pub fn class_name(class: u8) -> &'static str {
    match class {
        BACKGROUND => "background",
        SKIN => "skin",
        LESION => "lesion",
        _ => "invalid",
    }
}

/// `height x width` map of class ids in `{0, 1, 2}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabelMap {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::shape("label map extents must be positive"));
        }
        if data.len() != height * width {
            return Err(Error::shape(format!(
                "label map {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|&&v| v > LESION) {
            return Err(Error::invalid(format!("label value {bad} outside {{0,1,2}}")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, class: u8) -> Result<Self> {
        Self::new(height, width, vec![class; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.data[r * self.width + c]
    }

    /// Sets one pixel; panics on an out-of-range class id.
    pub fn set(&mut self, r: usize, c: usize, class: u8) {
        assert!(class <= LESION, "label value {class} outside {{0,1,2}}");
        self.data[r * self.width + c] = class;
    }

    pub fn count(&self, class: u8) -> usize {
        self.data.iter().filter(|&&v| v == class).count()
    }

    /// Number of non-background pixels.
    pub fn valid_pixels(&self) -> usize {
        self.data.len() - self.count(BACKGROUND)
    }

    /// Fraction of lesion pixels among non-background pixels (0 if none).
    pub fn lesion_fraction(&self) -> f64 {
        let valid = self.valid_pixels();
        if valid == 0 {
            0.0
        } else {
            self.count(LESION) as f64 / valid as f64
        }
    }

    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Self> {
        if top + h > self.height || left + w > self.width || h == 0 || w == 0 {
            return Err(Error::shape("label crop outside the map"));
        }
        let mut data = Vec::with_capacity(h * w);
        for r in top..top + h {
            data.extend_from_slice(&self.data[r * self.width + left..r * self.width + left + w]);
        }
        Self::new(h, w, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range() {
        assert!(LabelMap::new(1, 2, vec![0, 3]).is_err());
        assert!(LabelMap::new(2, 2, vec![0, 1, 2]).is_err());
        let m = LabelMap::new(1, 4, vec![0, 1, 2, 2]).unwrap();
        assert_eq!(m.valid_pixels(), 3);
        assert!((m.lesion_fraction() - 2.0 / 3.0).abs() < 1e-12);
    }
}
