//! Seeded, granularity-controlled pixel clustering.
//!
//! The refiner only needs one property from a clusterer: a region grown from a
//! seed stops at semantic edges, so seeds placed on opposite sides of a true
//! boundary produce nearly disjoint regions. [`IntensityClusterer`] gets this
//! from contrast-normalized intensity similarity; a learned model can be
//! dropped in behind [`Clusterer`].

use crate::grid::{BinaryMask, GridError, GridImage, Pixel, Roi};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    /// Similarity tolerance in `(0, 1)`, as a fraction of the roi's intensity range.
    pub granularity: f64,
    /// Cluster size cap as a fraction of the roi area, in `(0, 1]`.
    pub max_region_fraction: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            granularity: 0.1,
            max_region_fraction: 0.5,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.granularity > 0.0 && self.granularity < 1.0) {
            return Err(format!("granularity must be in (0, 1), got {}", self.granularity));
        }
        if !(self.max_region_fraction > 0.0 && self.max_region_fraction <= 1.0) {
            return Err(format!(
                "max region fraction must be in (0, 1], got {}",
                self.max_region_fraction
            ));
        }
        Ok(())
    }
}

pub trait Clusterer {
    /// Region grown from `seed`, restricted to `roi`. Always contains the seed.
    fn grow(&self, img: &GridImage, roi: &Roi, seed: Pixel) -> Result<BinaryMask, GridError>;
}

/// Breadth-first flood fill over 4-neighbors admitting pixels whose intensity
/// is within `granularity · (max − min)` of the seed, with min/max over the roi.
#[derive(Debug, Clone, Copy, Default)]
pub struct IntensityClusterer {
    pub params: ClusterParams,
}

impl IntensityClusterer {
    pub fn new(params: ClusterParams) -> Self {
        Self { params }
    }

    /// Like [`Clusterer::grow`] but reuses a precomputed roi intensity range.
    pub fn grow_with_range(
        &self,
        img: &GridImage,
        roi: &Roi,
        seed: Pixel,
        range: (f64, f64),
    ) -> Result<BinaryMask, GridError> {
        if !roi.contains(seed) {
            return Err(GridError::SeedOutsideRoi(seed.x, seed.y));
        }
        let tol = self.params.granularity * (range.1 - range.0);
        let cap = ((self.params.max_region_fraction * roi.area() as f64).floor() as usize).max(1);
        let base = img.at(seed);

        let mut out = BinaryMask::new(img.width(), img.height());
        out.set_at(seed, true);
        let mut size = 1;
        let mut queue = VecDeque::from([seed]);
        'fill: while let Some(p) = queue.pop_front() {
            for (dx, dy) in [(0i64, -1i64), (-1, 0), (1, 0), (0, 1)] {
                let (nx, ny) = (p.x as i64 + dx, p.y as i64 + dy);
                if !roi.contains_signed(nx, ny) {
                    continue;
                }
                let q = Pixel::new(nx as usize, ny as usize);
                if out.at(q) || (img.at(q) - base).abs() > tol {
                    continue;
                }
                if size >= cap {
                    break 'fill;
                }
                out.set_at(q, true);
                size += 1;
                queue.push_back(q);
            }
        }
        Ok(out)
    }
}

impl Clusterer for IntensityClusterer {
    fn grow(&self, img: &GridImage, roi: &Roi, seed: Pixel) -> Result<BinaryMask, GridError> {
        self.grow_with_range(img, roi, seed, img.range_in(roi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::{connected_components, Connectivity};
    use proptest::prelude::*;

    fn two_tone(w: usize, h: usize, split: usize) -> GridImage {
        GridImage::from_fn(w, h, |x, _| if x < split { 0.2 } else { 0.8 })
    }

    #[test]
    fn flat_roi_grows_to_the_cap() {
        let img = GridImage::filled(10, 10, 0.4);
        let roi = Roi::new(0, 0, 10, 10);
        let c = IntensityClusterer::new(ClusterParams {
            granularity: 0.3,
            max_region_fraction: 0.5,
        });
        assert_eq!(c.grow(&img, &roi, Pixel::new(5, 5)).unwrap().count(), 50);
        let uncapped = IntensityClusterer::new(ClusterParams {
            granularity: 0.3,
            max_region_fraction: 1.0,
        });
        assert_eq!(uncapped.grow(&img, &roi, Pixel::new(5, 5)).unwrap().count(), 100);
    }

    #[test]
    fn seed_in_dark_half_yields_the_dark_half() {
        // Tolerance 0.1 · 0.6 = 0.06 is far below the 0.6 step.
        let img = two_tone(12, 8, 6);
        let roi = Roi::full(12, 8);
        let c = IntensityClusterer::new(ClusterParams {
            granularity: 0.1,
            max_region_fraction: 1.0,
        });
        let m = c.grow(&img, &roi, Pixel::new(2, 3)).unwrap();
        assert_eq!(m, BinaryMask::from_fn(12, 8, |x, _| x < 6));
    }

    #[test]
    fn tiny_granularity_on_distinct_intensities_is_the_seed() {
        let img = GridImage::from_fn(8, 8, |x, y| (y * 8 + x) as f64 / 64.0);
        let c = IntensityClusterer::new(ClusterParams {
            granularity: 1e-6,
            max_region_fraction: 1.0,
        });
        let m = c.grow(&img, &Roi::full(8, 8), Pixel::new(3, 3)).unwrap();
        assert_eq!(m.count(), 1);
        assert!(m.get(3, 3));
    }

    #[test]
    fn seed_outside_roi_is_rejected() {
        let img = GridImage::filled(8, 8, 0.5);
        let c = IntensityClusterer::default();
        assert!(c.grow(&img, &Roi::new(0, 0, 4, 4), Pixel::new(6, 6)).is_err());
    }

    fn random_image() -> impl Strategy<Value = GridImage> {
        prop::collection::vec(0.0f64..=1.0, 16 * 16).prop_map(|d| GridImage::new(16, 16, d).unwrap())
    }

    proptest! {
        #[test]
        fn cluster_is_connected_contains_seed_and_stays_in_roi(
            img in random_image(), sx in 2usize..12, sy in 2usize..12, g in 0.01f64..0.99, frac in 0.05f64..=1.0
        ) {
            let roi = Roi::new(1, 1, 13, 13);
            let c = IntensityClusterer::new(ClusterParams { granularity: g, max_region_fraction: frac });
            let m = c.grow(&img, &roi, Pixel::new(sx, sy)).unwrap();
            prop_assert!(m.get(sx, sy));
            prop_assert_eq!(m.count_in(&roi), m.count());
            prop_assert_eq!(connected_components(&m, &roi, Connectivity::Four).len(), 1);
        }

        #[test]
        fn cluster_is_monotone_in_granularity(
            img in random_image(), sx in 0usize..16, sy in 0usize..16, g1 in 0.01f64..0.99, g2 in 0.01f64..0.99
        ) {
            let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
            let roi = Roi::full(16, 16);
            let mk = |g| IntensityClusterer::new(ClusterParams { granularity: g, max_region_fraction: 1.0 });
            let a = mk(lo).grow(&img, &roi, Pixel::new(sx, sy)).unwrap();
            let b = mk(hi).grow(&img, &roi, Pixel::new(sx, sy)).unwrap();
            prop_assert!(a.is_subset_of(&b));
        }
    }
}
