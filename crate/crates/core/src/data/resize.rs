use super::Sample;
use crate::error::{Error, Result};
use crate::label::LabelMap;
use crate::layers::bilinear_resize;

/// Align-corners nearest-neighbor source index for each output position.
fn nearest(n_in: usize, n_out: usize) -> Vec<usize> {
    (0..n_out)
        .map(|i| {
            if n_out == 1 || n_in == 1 {
                0
            } else {
                let pos = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
                (pos.round() as usize).min(n_in - 1)
            }
        })
        .collect()
}

/// Nearest-neighbor resampling, so only existing class ids appear.
pub fn resize_label(label: &LabelMap, h: usize, w: usize) -> Result<LabelMap> {
    if h == 0 || w == 0 {
        return Err(Error::shape("target extents must be positive"));
    }
    if label.dims() == (h, w) {
        return Ok(label.clone());
    }
    let rows = nearest(label.height(), h);
    let cols = nearest(label.width(), w);
    let mut data = Vec::with_capacity(h * w);
    for &r in &rows {
        for &c in &cols {
            data.push(label.get(r, c));
        }
    }
    LabelMap::new(h, w, data)
}

/// Bilinear image and nearest-neighbor label resampling to `h x w`.
pub fn resize_sample(s: &Sample, h: usize, w: usize) -> Result<Sample> {
    if s.dims() == (h, w) {
        return Ok(s.clone());
    }
    let image = bilinear_resize(&s.image, h, w)?;
    let label = resize_label(&s.label, h, w)?;
    Sample::new(image, label, s.source_id.clone())
}
