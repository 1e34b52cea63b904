//! Roi-restricted binary morphology and Gaussian smoothing.
//!
//! Every operation here writes only pixels inside the roi. Neighborhood reads
//! outside the roi come from the unmodified input mask, so a roi-local edit
//! never sees an artificial edge at the roi border.

use crate::grid::{BinaryMask, Pixel, Roi};

/// Offsets `(dx, dy)` with `dx² + dy² ≤ radius²`.
pub fn disk_offsets(radius: usize) -> Vec<(i64, i64)> {
    let r = radius as i64;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Morphological closing (dilation then erosion) with a disk element.
///
/// The result inside `roi` equals the closing of the whole mask evaluated at
/// those pixels: out-of-image pixels are background for the dilation and
/// foreground for the erosion, which keeps the operation extensive and
/// idempotent. Pixels outside `roi` are returned unchanged.
pub fn close(mask: &BinaryMask, roi: &Roi, radius: usize) -> BinaryMask {
    let (w, h) = mask.dims();
    let disk = disk_offsets(radius.max(1));
    let r = radius.max(1);
    // Erosion at roi pixels reads the dilation up to `r` pixels away.
    let band = roi.expanded(r, w, h);
    let mut dilated = vec![false; band.area()];
    for p in band.pixels() {
        let hit = disk
            .iter()
            .any(|&(dx, dy)| mask.get_signed(p.x as i64 + dx, p.y as i64 + dy));
        dilated[(p.y - band.y) * band.w + (p.x - band.x)] = hit;
    }
    let read_dilated = |x: i64, y: i64| {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            return true;
        }
        let (x, y) = (x as usize, y as usize);
        dilated[(y - band.y) * band.w + (x - band.x)]
    };
    let mut out = mask.clone();
    for p in roi.pixels() {
        let keep = disk
            .iter()
            .all(|&(dx, dy)| read_dilated(p.x as i64 + dx, p.y as i64 + dy));
        out.set_at(p, keep);
    }
    out
}

/// Normalized 1-D Gaussian truncated at `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Blurred `{0,1}` field over `roi`, row-major with the roi's width.
///
/// Out-of-image taps are dropped and the remaining weights renormalized.
pub fn blur_field(mask: &BinaryMask, roi: &Roi, sigma: f64) -> Vec<f64> {
    let (w, h) = mask.dims();
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    // Horizontal pass over every row the vertical pass will read.
    let rows = roi.expanded(radius as usize, w, h);
    let mut horiz = vec![0.0; rows.h * roi.w];
    for (ry, y) in (rows.y..rows.y + rows.h).enumerate() {
        for (rx, x) in (roi.x..roi.x + roi.w).enumerate() {
            let (mut acc, mut norm) = (0.0, 0.0);
            for (i, &kv) in kernel.iter().enumerate() {
                let sx = x as i64 + i as i64 - radius;
                if sx < 0 || sx >= w as i64 {
                    continue;
                }
                norm += kv;
                if mask.get(sx as usize, y) {
                    acc += kv;
                }
            }
            horiz[ry * roi.w + rx] = acc / norm;
        }
    }
    let mut out = vec![0.0; roi.area()];
    for (oy, y) in (roi.y..roi.y + roi.h).enumerate() {
        for ox in 0..roi.w {
            let (mut acc, mut norm) = (0.0, 0.0);
            for (i, &kv) in kernel.iter().enumerate() {
                let sy = y as i64 + i as i64 - radius;
                if sy < 0 || sy >= h as i64 {
                    continue;
                }
                norm += kv;
                acc += kv * horiz[(sy as usize - rows.y) * roi.w + ox];
            }
            out[oy * roi.w + ox] = acc / norm;
        }
    }
    out
}

/// Gaussian blur of the mask followed by re-binarization at `thresh` (inclusive).
pub fn smooth(mask: &BinaryMask, roi: &Roi, sigma: f64, thresh: f64) -> BinaryMask {
    let field = blur_field(mask, roi, sigma);
    let mut out = mask.clone();
    for (i, p) in roi.pixels().enumerate() {
        out.set_at(p, field[i] >= thresh);
    }
    out
}

/// Copies `src` into `dst` at the pixels selected by `keep`, restricted to `roi`.
pub(crate) fn blend_where(dst: &mut BinaryMask, src: &BinaryMask, roi: &Roi, keep: impl Fn(Pixel) -> bool) {
    for p in roi.pixels() {
        if keep(p) {
            dst.set_at(p, src.at(p));
        }
    }
}
