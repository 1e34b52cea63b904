//! Raster types shared by every stage of the pipeline.
//!
//! All grids are row-major with the origin at the top-left corner and `y`
//! growing downward.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("expected {expected} values for a {width}x{height} grid, got {got}")]
    BadLength {
        width: usize,
        height: usize,
        expected: usize,
        got: usize,
    },
    #[error("intensity {value} at index {index} is outside [0, 1]")]
    IntensityOutOfRange { index: usize, value: f64 },
    #[error("label {label} at index {index} is not below class count {class_count}")]
    LabelOutOfRange {
        index: usize,
        label: u8,
        class_count: usize,
    },
    #[error("class count must be at least 2, got {0}")]
    TooFewClasses(usize),
    #[error("probabilities at pixel {index} sum to {sum}")]
    NotNormalized { index: usize, sum: f64 },
    #[error("roi {0} does not fit inside a {1}x{2} image")]
    InvalidRoi(Roi, usize, usize),
    #[error("pixel ({0}, {1}) is outside the roi")]
    SeedOutsideRoi(usize, usize),
}

/// A pixel coordinate. Ordering is raster order: by row, then column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pixel {
    pub x: usize,
    pub y: usize,
}

impl Pixel {
    pub fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    /// Offsets the pixel, returning `None` when it leaves the `width x height` plane.
    pub fn offset(self, dx: i64, dy: i64, width: usize, height: usize) -> Option<Pixel> {
        let x = self.x as i64 + dx;
        let y = self.y as i64 + dy;
        if x < 0 || y < 0 || x >= width as i64 || y >= height as i64 {
            None
        } else {
            Some(Pixel::new(x as usize, y as usize))
        }
    }
}

impl PartialOrd for Pixel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pixel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.y, self.x).cmp(&(other.y, other.x))
    }
}

/// Mean position of a pixel set, `None` when the set is empty.
pub fn centroid<'a, I>(pixels: I) -> Option<(f64, f64)>
where
    I: IntoIterator<Item = &'a Pixel>,
{
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for p in pixels {
        sx += p.x as f64;
        sy += p.y as f64;
        n += 1;
    }
    (n > 0).then(|| (sx / n as f64, sy / n as f64))
}

/// Rectangular region of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Roi {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl std::fmt::Display for Roi {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{},{}", self.x, self.y, self.w, self.h)
    }
}

impl std::str::FromStr for Roi {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(format!("expected x,y,w,h, got `{s}`"));
        }
        let mut vals = [0usize; 4];
        for (v, p) in vals.iter_mut().zip(&parts) {
            *v = p.parse().map_err(|_| format!("bad roi component `{p}`"))?;
        }
        Ok(Roi::new(vals[0], vals[1], vals[2], vals[3]))
    }
}

impl Roi {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    /// The roi covering a whole `width x height` image.
    pub fn full(width: usize, height: usize) -> Self {
        Self::new(0, 0, width, height)
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<(), GridError> {
        if self.w == 0 || self.h == 0 || self.x + self.w > width || self.y + self.h > height {
            return Err(GridError::InvalidRoi(*self, width, height));
        }
        Ok(())
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn contains(&self, p: Pixel) -> bool {
        p.x >= self.x && p.x < self.x + self.w && p.y >= self.y && p.y < self.y + self.h
    }

    pub fn contains_signed(&self, x: i64, y: i64) -> bool {
        x >= self.x as i64
            && y >= self.y as i64
            && x < (self.x + self.w) as i64
            && y < (self.y + self.h) as i64
    }

    /// Geometric center in pixel coordinates.
    pub fn center(&self) -> (f64, f64) {
        (
            self.x as f64 + (self.w as f64 - 1.0) / 2.0,
            self.y as f64 + (self.h as f64 - 1.0) / 2.0,
        )
    }

    pub fn overlaps(&self, other: &Roi) -> bool {
        self.x < other.x + other.w
            && other.x < self.x + self.w
            && self.y < other.y + other.h
            && other.y < self.y + self.h
    }

    /// Pixels of the roi in raster order.
    pub fn pixels(&self) -> impl Iterator<Item = Pixel> + '_ {
        (self.y..self.y + self.h).flat_map(move |y| (self.x..self.x + self.w).map(move |x| Pixel::new(x, y)))
    }

    /// Grows the roi by `margin` on every side, clipped to the image.
    pub fn expanded(&self, margin: usize, width: usize, height: usize) -> Roi {
        let x0 = self.x.saturating_sub(margin);
        let y0 = self.y.saturating_sub(margin);
        let x1 = (self.x + self.w + margin).min(width);
        let y1 = (self.y + self.h + margin).min(height);
        Roi::new(x0, y0, x1 - x0, y1 - y0)
    }
}

/// Scalar intensity image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GridImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, GridError> {
        check_len(width, height, data.len())?;
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(GridError::IntensityOutOfRange { index, value });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    /// Builds an image from a closure; results are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn at(&self, p: Pixel) -> f64 {
        self.get(p.x, p.y)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Minimum and maximum intensity inside `roi`.
    pub fn range_in(&self, roi: &Roi) -> (f64, f64) {
        roi.pixels().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            let v = self.at(p);
            (lo.min(v), hi.max(v))
        })
    }
}

/// Per-pixel foreground indicator for a single class.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, GridError> {
        check_len(width, height, bits.len())?;
        Ok(Self { width, height, bits })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn at(&self, p: Pixel) -> bool {
        self.get(p.x, p.y)
    }

    /// Reads a possibly out-of-image coordinate; outside counts as background.
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.get(x as usize, y as usize)
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn set_at(&mut self, p: Pixel, value: bool) {
        self.set(p.x, p.y, value);
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn count_in(&self, roi: &Roi) -> usize {
        roi.pixels().filter(|&p| self.at(p)).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn same_dims(&self, other: &BinaryMask) -> Result<(), GridError> {
        if self.dims() != other.dims() {
            return Err(GridError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    pub fn foreground(&self) -> impl Iterator<Item = Pixel> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| Pixel::new(i % self.width, i / self.width))
    }

    pub fn foreground_in<'a>(&'a self, roi: &'a Roi) -> impl Iterator<Item = Pixel> + 'a {
        roi.pixels().filter(move |&p| self.at(p))
    }

    /// Copies `roi` pixels from `src` into `self`.
    pub fn copy_roi_from(&mut self, src: &BinaryMask, roi: &Roi) {
        for p in roi.pixels() {
            self.set_at(p, src.at(p));
        }
    }

    /// Fills every roi pixel with `value`.
    pub fn fill_roi(&mut self, roi: &Roi, value: bool) {
        for p in roi.pixels() {
            self.set_at(p, value);
        }
    }

    /// True when every pixel outside `roi` matches `other`.
    pub fn equal_outside(&self, other: &BinaryMask, roi: &Roi) -> bool {
        self.dims() == other.dims()
            && (0..self.height).all(|y| {
                (0..self.width).all(|x| roi.contains(Pixel::new(x, y)) || self.get(x, y) == other.get(x, y))
            })
    }

    /// Number of pixels outside `roi` that differ from `other`.
    pub fn diff_outside(&self, other: &BinaryMask, roi: &Roi) -> usize {
        self.differing_pixels(other)
            .filter(|p| !roi.contains(*p))
            .count()
    }

    pub fn differing_pixels<'a>(&'a self, other: &'a BinaryMask) -> impl Iterator<Item = Pixel> + 'a {
        self.bits
            .iter()
            .zip(&other.bits)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(move |(i, _)| Pixel::new(i % self.width, i / self.width))
    }

    /// Restriction of the mask to `roi`, as a roi-sized mask.
    pub fn crop(&self, roi: &Roi) -> BinaryMask {
        BinaryMask::from_fn(roi.w, roi.h, |x, y| self.get(roi.x + x, roi.y + y))
    }

    pub fn union(&self, other: &BinaryMask) -> BinaryMask {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &BinaryMask) -> BinaryMask {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn difference(&self, other: &BinaryMask) -> BinaryMask {
        self.zip_with(other, |a, b| a && !b)
    }

    /// In-place union.
    pub fn union_with(&mut self, other: &BinaryMask) {
        debug_assert_eq!(self.dims(), other.dims());
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> BinaryMask {
        debug_assert_eq!(self.dims(), other.dims());
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
}

/// Multi-class label map; label 0 is background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMask {
    width: usize,
    height: usize,
    class_count: usize,
    labels: Vec<u8>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize, class_count: usize, labels: Vec<u8>) -> Result<Self, GridError> {
        check_len(width, height, labels.len())?;
        if class_count < 2 {
            return Err(GridError::TooFewClasses(class_count));
        }
        if let Some((index, &label)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l as usize >= class_count)
        {
            return Err(GridError::LabelOutOfRange {
                index,
                label,
                class_count,
            });
        }
        Ok(Self {
            width,
            height,
            class_count,
            labels,
        })
    }

    pub fn background(width: usize, height: usize, class_count: usize) -> Self {
        Self {
            width,
            height,
            class_count: class_count.max(2),
            labels: vec![0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn at(&self, p: Pixel) -> u8 {
        self.get(p.x, p.y)
    }

    pub(crate) fn set_at(&mut self, p: Pixel, label: u8) {
        self.labels[p.y * self.width + p.x] = label;
    }

    /// Binary view of one class.
    pub fn class_mask(&self, class_id: u8) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.labels.iter().map(|&l| l == class_id).collect(),
        }
    }

    /// Pixel count per class.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for &l in &self.labels {
            h[l as usize] += 1;
        }
        h
    }
}

/// Per-pixel class probabilities, stored interleaved (`class_count` values per pixel).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbMap {
    width: usize,
    height: usize,
    class_count: usize,
    probs: Vec<f64>,
}

impl ProbMap {
    pub const SUM_TOLERANCE: f64 = 1e-6;

    pub fn new(width: usize, height: usize, class_count: usize, probs: Vec<f64>) -> Result<Self, GridError> {
        if class_count < 2 {
            return Err(GridError::TooFewClasses(class_count));
        }
        let expected = width * height * class_count;
        if probs.len() != expected {
            return Err(GridError::BadLength {
                width,
                height,
                expected,
                got: probs.len(),
            });
        }
        for (index, px) in probs.chunks(class_count).enumerate() {
            let sum: f64 = px.iter().sum();
            if (sum - 1.0).abs() > Self::SUM_TOLERANCE || px.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(GridError::NotNormalized { index, sum });
            }
        }
        Ok(Self {
            width,
            height,
            class_count,
            probs,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Probability vector of one pixel.
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.class_count;
        &self.probs[i..i + self.class_count]
    }

    /// Most probable class per pixel; ties go to the lower class id.
    pub fn argmax(&self) -> LabelMask {
        let labels = self
            .probs
            .chunks(self.class_count)
            .map(|px| {
                let mut best = 0;
                for (c, &p) in px.iter().enumerate() {
                    if p > px[best] {
                        best = c;
                    }
                }
                best as u8
            })
            .collect();
        LabelMask {
            width: self.width,
            height: self.height,
            class_count: self.class_count,
            labels,
        }
    }
}

fn check_len(width: usize, height: usize, got: usize) -> Result<(), GridError> {
    if got != width * height {
        return Err(GridError::BadLength {
            width,
            height,
            expected: width * height,
            got,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roi_validation() {
        assert!(Roi::new(0, 0, 4, 4).validate(4, 4).is_ok());
        assert!(Roi::new(1, 0, 4, 4).validate(4, 4).is_err());
        assert!(Roi::new(0, 0, 0, 4).validate(4, 4).is_err());
    }

    #[test]
    fn roi_overlap_is_symmetric_and_excludes_touching() {
        let a = Roi::new(0, 0, 5, 5);
        let b = Roi::new(5, 0, 5, 5);
        let c = Roi::new(4, 4, 2, 2);
        assert!(!a.overlaps(&b));
        assert!(a.overlaps(&c) && c.overlaps(&a));
    }

    #[test]
    fn roi_parses_from_text() {
        let roi: Roi = "3, 4,21,21".parse().unwrap();
        assert_eq!(roi, Roi::new(3, 4, 21, 21));
        assert!("1,2,3".parse::<Roi>().is_err());
    }

    #[test]
    fn image_rejects_out_of_range() {
        assert!(matches!(
            GridImage::new(2, 1, vec![0.5, 1.5]),
            Err(GridError::IntensityOutOfRange { index: 1, .. })
        ));
        assert!(GridImage::new(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn labels_must_be_below_class_count() {
        assert!(LabelMask::new(2, 1, 2, vec![0, 2]).is_err());
        assert!(LabelMask::new(2, 1, 1, vec![0, 0]).is_err());
        let lm = LabelMask::new(2, 1, 3, vec![0, 2]).unwrap();
        assert_eq!(lm.histogram(), vec![1, 0, 1]);
    }

    #[test]
    fn probmap_checks_normalization() {
        assert!(ProbMap::new(1, 1, 2, vec![0.5, 0.5]).is_ok());
        assert!(ProbMap::new(1, 1, 2, vec![0.5, 0.6]).is_err());
        let pm = ProbMap::new(2, 1, 2, vec![0.2, 0.8, 0.5, 0.5]).unwrap();
        assert_eq!(pm.argmax().labels(), &[1, 0]);
    }

    #[test]
    fn pixel_order_is_raster() {
        let mut v = vec![Pixel::new(3, 1), Pixel::new(0, 2), Pixel::new(5, 0)];
        v.sort();
        assert_eq!(v, vec![Pixel::new(5, 0), Pixel::new(3, 1), Pixel::new(0, 2)]);
    }
}
