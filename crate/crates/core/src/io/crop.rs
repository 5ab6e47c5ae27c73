use super::image::Image;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::tracker::BBox;

/// Bilinearly resamples `bbox` to an `out × out × 3` tensor of raw 0..255
/// values. Output pixel `c` samples source coordinate
/// `x + (c + ½)·w/out − ½`; pixels outside the frame read as zero.
pub fn crop_resize_patch<T: Scalar>(frame: &Image, bbox: &BBox, out: usize) -> Result<Tensor<T>> {
    if out == 0 {
        return Err(Error::Geometry("output size must be >= 1".into()));
    }
    if !(bbox.w > 0.0 && bbox.h > 0.0) || !bbox.is_finite() {
        return Err(Error::Geometry(format!("degenerate box {bbox:?}")));
    }
    let (fw, fh) = (frame.width() as isize, frame.height() as isize);
    let sx = bbox.w / out as f64;
    let sy = bbox.h / out as f64;
    // Per-axis (index, weight) taps, precomputed once per row/column.
    let taps = |origin: f64, scale: f64, limit: isize| -> Vec<[(isize, f64); 2]> {
        (0..out)
            .map(|i| {
                let s = origin + (i as f64 + 0.5) * scale - 0.5;
                let lo = s.floor();
                let f = s - lo;
                let lo = lo as isize;
                let valid = |p: isize| if p >= 0 && p < limit { p } else { -1 };
                [(valid(lo), 1.0 - f), (valid(lo + 1), f)]
            })
            .collect()
    };
    let xs = taps(bbox.x, sx, fw);
    let ys = taps(bbox.y, sy, fh);
    let mut data = Vec::with_capacity(out * out * 3);
    for ytap in &ys {
        for xtap in &xs {
            let mut acc = [0.0f64; 3];
            for &(py, wy) in ytap {
                if py < 0 || wy == 0.0 {
                    continue;
                }
                for &(px, wx) in xtap {
                    if px < 0 || wx == 0.0 {
                        continue;
                    }
                    let p = frame.pixel(px as usize, py as usize);
                    let w = wx * wy;
                    for c in 0..3 {
                        acc[c] += w * f64::from(p[c]);
                    }
                }
            }
            data.extend(acc.iter().map(|&v| T::of(v)));
        }
    }
    Tensor::new(&[out, out, 3], data)
}
