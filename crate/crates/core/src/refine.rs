//! Directional EXPAND / SHRINK refinement.
//!
//! Each iteration highlights the part of the predicted boundary facing the
//! requested direction, places seed pairs just inside and just outside it,
//! grows a cluster from every seed and measures how much the inner and outer
//! regions overlap:
//!
//! ```text
//! A_in  = ∪ cluster(p_in)        A_out = ∪ cluster(p_out)
//! EXPAND: P ← P ∪ (A_in ∩ A_out)  SHRINK: P ← P \ (A_in ∩ A_out)
//! η = |A_in ∩ A_out| / |A_in ∪ A_out|
//! ```
//!
//! Seeds straddling a true edge grow into different regions and barely
//! overlap, so the iterate with the smallest η is the one whose boundary sits
//! closest to the true edge. [`refine`] returns that iterate.

use crate::cluster::{ClusterParams, Clusterer};
use crate::direction::{angle_deg, Direction};
use crate::grid::{centroid, BinaryMask, GridImage, Pixel, Roi};
use crate::region::extract_boundary;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RefineOp {
    Expand,
    Shrink,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineParams {
    /// Percentage of highlighted boundary pixels used as sample sites, in `(0, 100]`.
    pub sample_percent: f64,
    /// Distance in pixels from the boundary to each seed of a pair.
    pub offset: usize,
    pub max_iters: usize,
    pub cluster: ClusterParams,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            sample_percent: 20.0,
            offset: 2,
            max_iters: 15,
            cluster: ClusterParams::default(),
        }
    }
}

impl RefineParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.sample_percent > 0.0 && self.sample_percent <= 100.0) {
            return Err(format!("sample percent must be in (0, 100], got {}", self.sample_percent));
        }
        if self.offset < 1 {
            return Err("offset must be at least 1 pixel".into());
        }
        if self.max_iters < 1 {
            return Err("max iterations must be at least 1".into());
        }
        self.cluster.validate()
    }
}

/// Seeds sampled on either side of one boundary pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointPair {
    pub inner: Pixel,
    pub outer: Pixel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaEntry {
    /// 1-based iteration index.
    pub t: usize,
    pub eta: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EtaTrace {
    pub entries: Vec<EtaEntry>,
}

impl EtaTrace {
    /// Index into `entries` of the smallest η; ties go to the earliest iteration.
    pub fn argmin(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, e) in self.entries.iter().enumerate() {
            if best.is_none_or(|b| e.eta < self.entries[b].eta) {
                best = Some(i);
            }
        }
        best
    }

    /// `t,eta` CSV with a header row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,eta\n");
        for e in &self.entries {
            let _ = writeln!(s, "{},{}", e.t, e.eta);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementResult {
    /// The snapshot with minimal η.
    pub mask: BinaryMask,
    pub trace: EtaTrace,
    /// 1-based iteration of the returned snapshot.
    pub best_iter: usize,
    /// `snapshots[t - 1]` is the mask evaluated at iteration `t`.
    pub snapshots: Vec<BinaryMask>,
    pub warnings: Vec<String>,
}

/// Outcome of one EXPAND/SHRINK update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub mask: BinaryMask,
    pub eta: f64,
    pub pairs: usize,
    pub warning: Option<String>,
}

fn foreground_centroid(mask: &BinaryMask, roi: &Roi) -> Option<(f64, f64)> {
    let fg: Vec<Pixel> = mask.foreground_in(roi).collect();
    centroid(&fg)
}

/// Boundary pixels facing `dir` as seen from the roi's foreground centroid.
///
/// Pixels are ordered by angle, sweeping counter-clockwise from the start of
/// the sector (from −180° for `Overall`).
pub fn highlight_boundary(mask: &BinaryMask, roi: &Roi, dir: Direction) -> Vec<Pixel> {
    let Some(c) = foreground_centroid(mask, roi) else {
        return Vec::new();
    };
    let mut keyed: Vec<(f64, Pixel)> = extract_boundary(mask, roi)
        .into_iter()
        .filter_map(|p| {
            let a = angle_deg(c, (p.x as f64, p.y as f64));
            dir.contains_angle(a).then(|| (dir.sweep_key(a), p))
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, p)| p).collect()
}

/// Number of sample sites drawn from `len` highlighted pixels.
pub fn sample_count(len: usize, sample_percent: f64) -> usize {
    ((sample_percent / 100.0 * len as f64).round() as usize).max(1).min(len)
}

/// Evenly spaced sample sites along the highlighted boundary, each turned into
/// an inner/outer seed pair along the centroid ray.
///
/// Pairs whose inner seed is background, whose outer seed is foreground, or
/// whose seeds leave the roi are dropped rather than relocated.
pub fn sample_point_pairs(mask: &BinaryMask, roi: &Roi, highlighted: &[Pixel], params: &RefineParams) -> Vec<PointPair> {
    let Some(c) = foreground_centroid(mask, roi) else {
        return Vec::new();
    };
    if highlighted.is_empty() {
        return Vec::new();
    }
    let n = sample_count(highlighted.len(), params.sample_percent);
    let d = params.offset as f64;
    let mut pairs = Vec::with_capacity(n);
    for k in 0..n {
        let p = highlighted[k * highlighted.len() / n];
        let (vx, vy) = (p.x as f64 - c.0, p.y as f64 - c.1);
        let norm = (vx * vx + vy * vy).sqrt();
        if norm == 0.0 {
            continue;
        }
        let (ox, oy) = ((d * vx / norm).round() as i64, (d * vy / norm).round() as i64);
        let (px, py) = (p.x as i64, p.y as i64);
        let (outer, inner) = ((px + ox, py + oy), (px - ox, py - oy));
        if !roi.contains_signed(outer.0, outer.1) || !roi.contains_signed(inner.0, inner.1) {
            continue;
        }
        let inner = Pixel::new(inner.0 as usize, inner.1 as usize);
        let outer = Pixel::new(outer.0 as usize, outer.1 as usize);
        if !mask.at(inner) || mask.at(outer) {
            continue;
        }
        pairs.push(PointPair { inner, outer });
    }
    pairs
}

/// One EXPAND/SHRINK update. Returns the input unchanged with η = 1 and a
/// warning when no valid seed pair exists.
pub fn refine_step<C: Clusterer>(
    mask: &BinaryMask,
    img: &GridImage,
    roi: &Roi,
    dir: Direction,
    op: RefineOp,
    params: &RefineParams,
    clusterer: &C,
) -> StepOutcome {
    let highlighted = highlight_boundary(mask, roi, dir);
    let pairs = sample_point_pairs(mask, roi, &highlighted, params);
    if pairs.is_empty() {
        let why = if highlighted.is_empty() {
            "no boundary in the requested direction"
        } else {
            "every seed pair was discarded"
        };
        return StepOutcome {
            mask: mask.clone(),
            eta: 1.0,
            pairs: 0,
            warning: Some(format!("{op:?} {dir}: {why}")),
        };
    }
    let (w, h) = mask.dims();
    let mut a_in = BinaryMask::new(w, h);
    let mut a_out = BinaryMask::new(w, h);
    for pair in &pairs {
        // Seeds are inside the roi by construction.
        a_in.union_with(&clusterer.grow(img, roi, pair.inner).expect("seed inside roi"));
        a_out.union_with(&clusterer.grow(img, roi, pair.outer).expect("seed inside roi"));
    }
    let overlap = a_in.intersection(&a_out);
    let inter = overlap.count_in(roi);
    let union = roi.pixels().filter(|&p| a_in.at(p) || a_out.at(p)).count();
    let eta = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
    let updated = match op {
        RefineOp::Expand => mask.union(&overlap),
        RefineOp::Shrink => mask.difference(&overlap),
    };
    let mut out = mask.clone();
    out.copy_roi_from(&updated, roi);
    StepOutcome {
        mask: out,
        eta,
        pairs: pairs.len(),
        warning: None,
    }
}

/// Iterates [`refine_step`] up to `max_iters` times and returns the iterate with minimal η.
///
/// η at iteration `t` scores the mask the samples were drawn from, so the
/// trace entry `t` pairs with `snapshots[t - 1]`. The loop stops early at a
/// fixed point or when no seed pair survives.
pub fn refine<C: Clusterer>(
    mask: &BinaryMask,
    img: &GridImage,
    roi: &Roi,
    dir: Direction,
    op: RefineOp,
    params: &RefineParams,
    clusterer: &C,
) -> RefinementResult {
    let mut current = mask.clone();
    let mut trace = EtaTrace::default();
    let mut snapshots = Vec::new();
    let mut warnings = Vec::new();
    for t in 1..=params.max_iters.max(1) {
        let step = refine_step(&current, img, roi, dir, op, params, clusterer);
        trace.entries.push(EtaEntry { t, eta: step.eta });
        snapshots.push(current.clone());
        if let Some(w) = step.warning {
            warnings.push(format!("iteration {t}: {w}"));
            break;
        }
        if step.mask == current {
            break;
        }
        current = step.mask;
    }
    let best = trace.argmin().unwrap_or(0);
    RefinementResult {
        mask: snapshots[best].clone(),
        best_iter: best + 1,
        trace,
        snapshots,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::IntensityClusterer;

    fn disk(w: usize, h: usize, cx: f64, cy: f64, r: f64) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            dx * dx + dy * dy <= r * r
        })
    }

    #[test]
    fn highlight_right_of_disk_stays_in_sector() {
        let m = disk(31, 31, 15.0, 15.0, 10.0);
        let roi = Roi::full(31, 31);
        let h = highlight_boundary(&m, &roi, Direction::Right);
        assert!(!h.is_empty());
        for p in &h {
            let a = angle_deg((15.0, 15.0), (p.x as f64, p.y as f64));
            assert!((-22.5..22.5).contains(&a), "angle {a}");
        }
        let all = highlight_boundary(&m, &roi, Direction::Overall);
        assert_eq!(all.len(), extract_boundary(&m, &roi).len());
    }

    #[test]
    fn highlight_of_left_half_plane_facing_right_is_its_edge() {
        // Foreground x < 10 in a 20x21 roi: centroid (4.5, 10); the right edge is x = 9.
        let m = BinaryMask::from_fn(20, 21, |x, _| x < 10);
        let roi = Roi::full(20, 21);
        let h = highlight_boundary(&m, &roi, Direction::Right);
        let mut hs = h.clone();
        hs.sort();
        // Edge pixels within ±22.5° of the centroid: |y - 10| < tan(22.5°)·4.5 ≈ 1.86.
        let expected: Vec<Pixel> = (9..=11).map(|y| Pixel::new(9, y)).collect();
        assert_eq!(hs, expected);
        // Ordered by increasing angle: bottom (larger y) first.
        assert_eq!(h, vec![Pixel::new(9, 11), Pixel::new(9, 10), Pixel::new(9, 9)]);
    }

    #[test]
    fn sample_count_arithmetic() {
        assert_eq!(sample_count(40, 20.0), 8);
        assert_eq!(sample_count(3, 20.0), 1);
        assert_eq!(sample_count(10, 100.0), 10);
    }

    #[test]
    fn pairs_on_a_disk_straddle_the_boundary() {
        let m = disk(41, 41, 20.0, 20.0, 10.0);
        let roi = Roi::full(41, 41);
        let h = highlight_boundary(&m, &roi, Direction::Overall);
        let params = RefineParams {
            sample_percent: 100.0,
            ..RefineParams::default()
        };
        let pairs = sample_point_pairs(&m, &roi, &h, &params);
        assert_eq!(pairs.len(), h.len());
    }

    #[test]
    fn thin_strip_loses_every_pair() {
        let m = BinaryMask::from_fn(30, 30, |_, y| y == 15);
        let roi = Roi::full(30, 30);
        let h = highlight_boundary(&m, &roi, Direction::Overall);
        assert!(!h.is_empty());
        assert!(sample_point_pairs(&m, &roi, &h, &RefineParams::default()).is_empty());
    }

    #[test]
    fn eta_trace_csv_and_argmin() {
        let trace = EtaTrace {
            entries: vec![
                EtaEntry { t: 1, eta: 0.5 },
                EtaEntry { t: 2, eta: 0.25 },
                EtaEntry { t: 3, eta: 0.25 },
            ],
        };
        assert_eq!(trace.argmin(), Some(1));
        assert_eq!(trace.to_csv(), "t,eta\n1,0.5\n2,0.25\n3,0.25\n");
    }

    #[test]
    fn empty_mask_warns_and_returns_input() {
        let m = BinaryMask::new(10, 10);
        let img = GridImage::filled(10, 10, 0.5);
        let r = refine(
            &m,
            &img,
            &Roi::full(10, 10),
            Direction::Right,
            RefineOp::Expand,
            &RefineParams::default(),
            &IntensityClusterer::default(),
        );
        assert_eq!(r.mask, m);
        assert_eq!(r.trace.entries, vec![EtaEntry { t: 1, eta: 1.0 }]);
        assert_eq!(r.warnings.len(), 1);
    }
}
