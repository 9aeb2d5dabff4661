use super::{check_pair, class_index, BACKGROUND_CLASS};
use crate::error::{Error, Result};
use crate::label::LabelMap;

/// `ceil(0.0075 * diagonal)` pixels.
pub fn default_tolerance(height: usize, width: usize) -> usize {
    (0.0075 * ((height * height + width * width) as f64).sqrt()).ceil() as usize
}

/// Pixels of `mask` with a 4-neighbor outside the mask or on the image edge.
pub fn boundary_mask(mask: &[bool], h: usize, w: usize) -> Vec<bool> {
    let mut out = vec![false; h * w];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if !mask[i] {
                continue;
            }
            out[i] = r == 0
                || c == 0
                || r + 1 == h
                || c + 1 == w
                || !mask[i - w]
                || !mask[i + w]
                || !mask[i - 1]
                || !mask[i + 1];
        }
    }
    out
}

/// Fraction of `from` boundary pixels within Euclidean distance `tol` of a
/// `to` boundary pixel.
fn matched_fraction(from: &[bool], to: &[bool], h: usize, w: usize, offsets: &[(isize, isize)]) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for r in 0..h {
        for c in 0..w {
            if !from[r * w + c] {
                continue;
            }
            total += 1;
            let near = offsets.iter().any(|&(dr, dc)| {
                let (rr, cc) = (r as isize + dr, c as isize + dc);
                rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w && to[rr as usize * w + cc as usize]
            });
            hit += near as usize;
        }
    }
    hit as f64 / total as f64
}

/// Boundary F1 of `class` at distance tolerance `tol` (pixels). Class
/// masks only include pixels whose ground truth is not background. Both
/// boundaries empty gives 1, exactly one empty gives 0.
pub fn boundary_f1(pred: &LabelMap, truth: &LabelMap, class: u8, tol: usize) -> Result<f64> {
    check_pair(pred, truth)?;
    class_index(class).ok_or_else(|| Error::invalid(format!("class {class} is not scored")))?;
    let (h, w) = truth.dims();
    let pm: Vec<bool> = pred
        .data()
        .iter()
        .zip(truth.data())
        .map(|(&p, &t)| p == class && t != BACKGROUND_CLASS)
        .collect();
    let tm: Vec<bool> = truth.data().iter().map(|&t| t == class).collect();
    let pb = boundary_mask(&pm, h, w);
    let tb = boundary_mask(&tm, h, w);
    let (np, nt) = (pb.iter().any(|&b| b), tb.iter().any(|&b| b));
    match (np, nt) {
        (false, false) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let t = tol as isize;
    let offsets: Vec<(isize, isize)> = (-t..=t)
        .flat_map(|dr| (-t..=t).map(move |dc| (dr, dc)))
        .filter(|&(dr, dc)| dr * dr + dc * dc <= t * t)
        .collect();
    let precision = matched_fraction(&pb, &tb, h, w, &offsets);
    let recall = matched_fraction(&tb, &pb, h, w, &offsets);
    Ok(if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    })
}
