//! Boundary extraction, connected components and contour tracing.

use crate::grid::{centroid, BinaryMask, Pixel, Roi};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    pub fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            Connectivity::Four => &[(0, -1), (-1, 0), (1, 0), (0, 1)],
            Connectivity::Eight => &[
                (-1, -1),
                (0, -1),
                (1, -1),
                (-1, 0),
                (1, 0),
                (-1, 1),
                (0, 1),
                (1, 1),
            ],
        }
    }
}

/// A maximal connected pixel set.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    /// Pixels in raster order.
    pub pixels: Vec<Pixel>,
    pub centroid: (f64, f64),
}

impl Component {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn touches_roi_border(&self, roi: &Roi) -> bool {
        self.pixels.iter().any(|p| {
            p.x == roi.x || p.y == roi.y || p.x + 1 == roi.x + roi.w || p.y + 1 == roi.y + roi.h
        })
    }
}

/// Foreground pixels inside `roi` with at least one background 4-neighbor.
///
/// Neighbors outside the image count as background; neighbors outside the roi
/// but inside the image are read from the mask. Output is in raster order.
pub fn extract_boundary(mask: &BinaryMask, roi: &Roi) -> Vec<Pixel> {
    mask.foreground_in(roi)
        .filter(|p| {
            Connectivity::Four
                .offsets()
                .iter()
                .any(|&(dx, dy)| !mask.get_signed(p.x as i64 + dx, p.y as i64 + dy))
        })
        .collect()
}

/// Connected components of the pixels in `roi` where `mask == value`.
fn components_of(mask: &BinaryMask, roi: &Roi, connectivity: Connectivity, value: bool) -> Vec<Component> {
    let mut seen = vec![false; roi.area()];
    let local = |p: Pixel| (p.y - roi.y) * roi.w + (p.x - roi.x);
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in roi.pixels() {
        if mask.at(start) != value || seen[local(start)] {
            continue;
        }
        seen[local(start)] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(p) = queue.pop_front() {
            pixels.push(p);
            for &(dx, dy) in connectivity.offsets() {
                let (nx, ny) = (p.x as i64 + dx, p.y as i64 + dy);
                if !roi.contains_signed(nx, ny) {
                    continue;
                }
                let q = Pixel::new(nx as usize, ny as usize);
                if mask.at(q) == value && !seen[local(q)] {
                    seen[local(q)] = true;
                    queue.push_back(q);
                }
            }
        }
        pixels.sort_unstable();
        let centroid = centroid(&pixels).expect("component is nonempty");
        out.push(Component { pixels, centroid });
    }
    out
}

/// Foreground components inside `roi`, ordered by their first pixel in raster order.
pub fn connected_components(mask: &BinaryMask, roi: &Roi, connectivity: Connectivity) -> Vec<Component> {
    components_of(mask, roi, connectivity, true)
}

/// Background regions inside `roi` fully enclosed by foreground.
///
/// These are 4-connected background components that do not reach the roi
/// border (the dual of 8-connected foreground).
pub fn holes(mask: &BinaryMask, roi: &Roi) -> Vec<Component> {
    components_of(mask, roi, Connectivity::Four, false)
        .into_iter()
        .filter(|c| !c.touches_roi_border(roi))
        .collect()
}

/// Perimeter-based roughness `P² / (4π·A)`; 1 for an ideal disk, larger when jagged.
pub fn roughness(mask: &BinaryMask, roi: &Roi) -> Option<f64> {
    let area = mask.count_in(roi);
    if area == 0 {
        return None;
    }
    let perimeter = extract_boundary(mask, roi).len() as f64;
    Some(perimeter * perimeter / (4.0 * std::f64::consts::PI * area as f64))
}

/// Moore-neighbor trace of the outer contour of one 8-connected pixel set.
///
/// Returns the contour as a closed ring without repeating the first pixel.
pub fn trace_outer_contour(pixels: &[Pixel]) -> Vec<Pixel> {
    // Counter-clockwise chain-code directions: E, NE, N, NW, W, SW, S, SE.
    const DIRS: [(i64, i64); 8] = [(1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1)];
    let Some(&start) = pixels.iter().min() else {
        return Vec::new();
    };
    let set: std::collections::HashSet<Pixel> = pixels.iter().copied().collect();
    let is_in = |x: i64, y: i64| x >= 0 && y >= 0 && set.contains(&Pixel::new(x as usize, y as usize));

    let mut contour = vec![start];
    let mut cur = start;
    let mut dir = 7usize;
    let mut first_move = None;
    // Bounded: each pixel can be entered at most from 8 directions.
    for _ in 0..8 * pixels.len() + 8 {
        let search = if dir.is_multiple_of(2) { (dir + 7) % 8 } else { (dir + 6) % 8 };
        let next = (0..8).map(|k| (search + k) % 8).find(|&d| {
            let (dx, dy) = DIRS[d];
            is_in(cur.x as i64 + dx, cur.y as i64 + dy)
        });
        let Some(d) = next else {
            break; // isolated pixel
        };
        if cur == start && first_move == Some(d) {
            break;
        }
        first_move.get_or_insert(d);
        let (dx, dy) = DIRS[d];
        cur = Pixel::new((cur.x as i64 + dx) as usize, (cur.y as i64 + dy) as usize);
        dir = d;
        contour.push(cur);
    }
    if contour.len() > 1 && contour.last() == Some(&start) {
        contour.pop();
    }
    contour
}

/// Outer contours of every 8-connected foreground component in `roi`.
pub fn trace_contours(mask: &BinaryMask, roi: &Roi) -> Vec<Vec<Pixel>> {
    connected_components(mask, roi, Connectivity::Eight)
        .iter()
        .map(|c| trace_outer_contour(&c.pixels))
        .collect()
}
