//! Compass vocabulary used by commands, refinement and feedback synthesis.

use serde::{Deserialize, Serialize};

/// Eight compass sectors plus `Overall` ("no particular direction").
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Top,
    Bottom,
    Left,
    Right,
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
    Overall,
}

/// Sector half-width in degrees.
const HALF_SECTOR: f64 = 22.5;

impl Direction {
    pub const ALL: [Direction; 9] = [
        Direction::Top,
        Direction::Bottom,
        Direction::Left,
        Direction::Right,
        Direction::TopLeft,
        Direction::TopRight,
        Direction::BottomLeft,
        Direction::BottomRight,
        Direction::Overall,
    ];

    /// Counter-clockwise from due right, matching the sector index of [`Direction::from_angle`].
    const COMPASS: [Direction; 8] = [
        Direction::Right,
        Direction::TopRight,
        Direction::Top,
        Direction::TopLeft,
        Direction::Left,
        Direction::BottomLeft,
        Direction::Bottom,
        Direction::BottomRight,
    ];

    /// Maps an angle in degrees (math convention, y up) to its 45° sector.
    ///
    /// Sectors are half-open, `[center - 22.5, center + 22.5)`, so every angle
    /// lands in exactly one of the eight compass directions. Never returns
    /// `Overall`.
    pub fn from_angle(deg: f64) -> Direction {
        let a = normalize_deg(deg);
        let k = ((a + HALF_SECTOR) / 45.0).floor() as i64;
        Self::COMPASS[k.rem_euclid(8) as usize]
    }

    /// Direction of `to` as seen from `from`, both in image coordinates (y down).
    pub fn between(from: (f64, f64), to: (f64, f64)) -> Direction {
        Self::from_angle(angle_deg(from, to))
    }

    /// Sector center in degrees; `None` for `Overall`.
    pub fn center_deg(self) -> Option<f64> {
        Some(match self {
            Direction::Right => 0.0,
            Direction::TopRight => 45.0,
            Direction::Top => 90.0,
            Direction::TopLeft => 135.0,
            Direction::Left => 180.0,
            Direction::BottomLeft => -135.0,
            Direction::Bottom => -90.0,
            Direction::BottomRight => -45.0,
            Direction::Overall => return None,
        })
    }

    /// True when `deg` falls in this direction's sector. `Overall` contains every angle.
    pub fn contains_angle(self, deg: f64) -> bool {
        match self {
            Direction::Overall => true,
            d => Direction::from_angle(deg) == d,
        }
    }

    /// Offset of `deg` from the start of this sector, in `[0, 360)`.
    ///
    /// Sorting by this key walks a sector counter-clockwise without the
    /// wrap-around jump at ±180°.
    pub fn sweep_key(self, deg: f64) -> f64 {
        let start = self.center_deg().map_or(-180.0, |c| c - HALF_SECTOR);
        (deg - start).rem_euclid(360.0)
    }

    /// Program-text spelling, e.g. `TOP-RIGHT`.
    pub fn label(self) -> &'static str {
        match self {
            Direction::Top => "TOP",
            Direction::Bottom => "BOTTOM",
            Direction::Left => "LEFT",
            Direction::Right => "RIGHT",
            Direction::TopLeft => "TOP-LEFT",
            Direction::TopRight => "TOP-RIGHT",
            Direction::BottomLeft => "BOTTOM-LEFT",
            Direction::BottomRight => "BOTTOM-RIGHT",
            Direction::Overall => "OVERALL",
        }
    }

    pub fn from_label(s: &str) -> Option<Direction> {
        Self::ALL.into_iter().find(|d| d.label() == s)
    }

    /// Plain-language phrase, e.g. `top-right`.
    pub fn phrase(self) -> &'static str {
        match self {
            Direction::Top => "top",
            Direction::Bottom => "bottom",
            Direction::Left => "left",
            Direction::Right => "right",
            Direction::TopLeft => "top-left",
            Direction::TopRight => "top-right",
            Direction::BottomLeft => "bottom-left",
            Direction::BottomRight => "bottom-right",
            Direction::Overall => "overall",
        }
    }

    pub fn is_diagonal(self) -> bool {
        matches!(
            self,
            Direction::TopLeft | Direction::TopRight | Direction::BottomLeft | Direction::BottomRight
        )
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Normalizes to `(-180, 180]`.
pub fn normalize_deg(deg: f64) -> f64 {
    let a = deg.rem_euclid(360.0);
    if a > 180.0 {
        a - 360.0
    } else {
        a
    }
}

/// Angle of the vector `from -> to` in degrees, image y negated so that up is positive.
pub fn angle_deg(from: (f64, f64), to: (f64, f64)) -> f64 {
    (from.1 - to.1).atan2(to.0 - from.0).to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sector_centers() {
        assert_eq!(Direction::from_angle(0.0), Direction::Right);
        assert_eq!(Direction::from_angle(90.0), Direction::Top);
        assert_eq!(Direction::from_angle(180.0), Direction::Left);
        assert_eq!(Direction::from_angle(-90.0), Direction::Bottom);
        assert_eq!(Direction::from_angle(-135.0), Direction::BottomLeft);
    }

    #[test]
    fn lower_bound_is_inclusive() {
        assert_eq!(Direction::from_angle(22.5), Direction::TopRight);
        assert_eq!(Direction::from_angle(-22.5), Direction::Right);
        assert_eq!(Direction::from_angle(157.5), Direction::Left);
        assert_eq!(Direction::from_angle(-157.5), Direction::BottomLeft);
        assert_eq!(Direction::from_angle(-180.0), Direction::Left);
        assert_eq!(Direction::from_angle(22.499), Direction::Right);
    }

    #[test]
    fn image_coordinates_flip_y() {
        // A pixel above the center has a smaller y.
        assert_eq!(Direction::between((5.0, 5.0), (5.0, 0.0)), Direction::Top);
        assert_eq!(Direction::between((5.0, 5.0), (9.0, 9.0)), Direction::BottomRight);
    }

    #[test]
    fn labels_round_trip() {
        for d in Direction::ALL {
            assert_eq!(Direction::from_label(d.label()), Some(d));
        }
        assert_eq!(Direction::from_label("UP"), None);
    }

    proptest! {
        #[test]
        fn every_angle_lands_in_exactly_one_sector(deg in -180.0f64..=180.0) {
            let hits = Direction::ALL
                .iter()
                .filter(|d| **d != Direction::Overall && d.contains_angle(deg))
                .count();
            prop_assert_eq!(hits, 1);
            let d = Direction::from_angle(deg);
            let c = d.center_deg().unwrap();
            let off = normalize_deg(deg - c);
            prop_assert!((-HALF_SECTOR..HALF_SECTOR).contains(&off));
        }

        #[test]
        fn sweep_key_is_within_a_sector_for_members(deg in -180.0f64..=180.0) {
            let d = Direction::from_angle(deg);
            prop_assert!(d.sweep_key(deg) < 45.0 + 1e-9);
        }
    }
}
