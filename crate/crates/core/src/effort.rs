//! Annotation effort: polygon delineation time from vertex counts versus
//! spoken-feedback time from word counts.

use crate::grid::Pixel;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EffortError {
    #[error("time savings are undefined when polygon time is zero")]
    DeltaUndefined,
    #[error("invalid effort model: {0}")]
    InvalidModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffortModel {
    pub seconds_per_vertex: f64,
    pub words_per_minute: f64,
}

impl Default for EffortModel {
    fn default() -> Self {
        Self {
            seconds_per_vertex: 5.55,
            words_per_minute: 130.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffortReport {
    pub vertex_count: u64,
    pub polygon_hours: f64,
    pub word_count: u64,
    pub spoken_hours: f64,
    pub delta_percent: f64,
}

pub fn estimate(vertex_count: u64, word_count: u64, model: &EffortModel) -> Result<EffortReport, EffortError> {
    if !(model.seconds_per_vertex > 0.0 && model.words_per_minute > 0.0) {
        return Err(EffortError::InvalidModel(format!(
            "seconds per vertex {} and words per minute {} must be positive",
            model.seconds_per_vertex, model.words_per_minute
        )));
    }
    let polygon_hours = vertex_count as f64 * model.seconds_per_vertex / 3600.0;
    let spoken_hours = word_count as f64 / model.words_per_minute / 60.0;
    if polygon_hours == 0.0 {
        return Err(EffortError::DeltaUndefined);
    }
    Ok(EffortReport {
        vertex_count,
        polygon_hours,
        word_count,
        spoken_hours,
        delta_percent: (polygon_hours - spoken_hours) / polygon_hours * 100.0,
    })
}

/// Whitespace-delimited tokens over all commands.
pub fn count_words<S: AsRef<str>>(commands: &[S]) -> u64 {
    commands.iter().map(|c| c.as_ref().split_whitespace().count() as u64).sum()
}

/// Renders reports as an aligned text table.
pub struct EffortTable<'a>(pub &'a [(String, EffortReport)]);

impl fmt::Display for EffortTable<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label_w = self.0.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(5);
        writeln!(
            f,
            "{:<label_w$}  {:>9}  {:>10}  {:>9}  {:>10}  {:>8}",
            "case", "vertices", "polygon_h", "words", "spoken_h", "delta_%"
        )?;
        for (label, r) in self.0 {
            writeln!(
                f,
                "{:<label_w$}  {:>9}  {:>10.2}  {:>9}  {:>10.2}  {:>8.1}",
                label, r.vertex_count, r.polygon_hours, r.word_count, r.spoken_hours, r.delta_percent
            )?;
        }
        Ok(())
    }
}

type Pt = (f64, f64);

fn seg_distance(p: Pt, a: Pt, b: Pt) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    ((p.0 - a.0 - t * dx).powi(2) + (p.1 - a.1 - t * dy).powi(2)).sqrt()
}

/// Douglas-Peucker on an open polyline. Endpoints are always kept; a point
/// survives when it lies more than `epsilon` from the current chord.
/// `epsilon <= 0` keeps every point.
pub fn simplify_polyline(points: &[Pt], epsilon: f64) -> Vec<Pt> {
    if points.len() < 3 || epsilon <= 0.0 {
        return points.to_vec();
    }
    let mut keep = vec![false; points.len()];
    keep[0] = true;
    keep[points.len() - 1] = true;
    let mut stack = vec![(0, points.len() - 1)];
    while let Some((a, b)) = stack.pop() {
        let mut best = (0.0, a);
        for i in a + 1..b {
            let d = seg_distance(points[i], points[a], points[b]);
            if d > best.0 {
                best = (d, i);
            }
        }
        if best.0 > epsilon {
            keep[best.1] = true;
            stack.push((a, best.1));
            stack.push((best.1, b));
        }
    }
    points.iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| *p).collect()
}

fn dist2(a: Pixel, b: Pixel) -> i64 {
    let (dx, dy) = (a.x as i64 - b.x as i64, a.y as i64 - b.y as i64);
    dx * dx + dy * dy
}

fn farthest_from(ring: &[Pixel], from: usize) -> usize {
    let mut best = from;
    for i in 0..ring.len() {
        if dist2(ring[i], ring[from]) > dist2(ring[best], ring[from]) {
            best = i;
        }
    }
    best
}

/// Simplifies a closed contour (a ring without a repeated first point).
///
/// The ring is split at an approximately farthest pair of points (found by
/// two farthest-point passes), both halves are simplified as open
/// polylines, and the results are merged. Rings of fewer than 3 points are
/// returned unchanged.
pub fn simplify_contour(ring: &[Pixel], epsilon: f64) -> Vec<Pixel> {
    if ring.len() < 3 {
        return ring.to_vec();
    }
    let a = farthest_from(ring, 0);
    let b = farthest_from(ring, a);
    let (lo, hi) = (a.min(b), a.max(b));
    if lo == hi {
        return vec![ring[lo]];
    }
    let as_pt = |p: &Pixel| (p.x as f64, p.y as f64);
    let first: Vec<Pt> = ring[lo..=hi].iter().map(as_pt).collect();
    let second: Vec<Pt> = ring[hi..].iter().chain(ring[..=lo].iter()).map(as_pt).collect();
    let mut out: Vec<Pt> = simplify_polyline(&first, epsilon);
    out.pop();
    let mut tail = simplify_polyline(&second, epsilon);
    tail.pop();
    out.extend(tail);
    out.into_iter().map(|(x, y)| Pixel::new(x as usize, y as usize)).collect()
}

/// Largest distance from any ring point to the closed polygon through `vertices`.
pub fn max_deviation(ring: &[Pixel], vertices: &[Pixel]) -> f64 {
    let pts: Vec<Pt> = vertices.iter().map(|p| (p.x as f64, p.y as f64)).collect();
    ring.iter()
        .map(|p| {
            let q = (p.x as f64, p.y as f64);
            match pts.len() {
                0 => f64::INFINITY,
                1 => seg_distance(q, pts[0], pts[0]),
                n => (0..n)
                    .map(|i| seg_distance(q, pts[i], pts[(i + 1) % n]))
                    .fold(f64::INFINITY, f64::min),
            }
        })
        .fold(0.0, f64::max)
}
