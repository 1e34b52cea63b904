//! Seeded synthetic data: blob phantoms with optional domain shift, and
//! corruption models that turn a ground-truth mask into a plausible faulty
//! prediction.

use crate::direction::{angle_deg, normalize_deg, Direction};
use crate::grid::{centroid, BinaryMask, GridImage, LabelMask, Pixel, Roi};
use crate::morphology::gaussian_kernel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    Source,
    TargetTrain,
    TargetTest,
}

/// Intensity remapping applied to target-domain images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DomainShift {
    None,
    /// `I' = offset + gain · I^gamma`, followed by extra Gaussian noise.
    Intensity {
        gamma: f64,
        gain: f64,
        offset: f64,
        extra_noise: f64,
    },
}

impl DomainShift {
    /// The remap used by the `intensity` preset.
    pub fn intensity() -> Self {
        DomainShift::Intensity {
            gamma: 0.6,
            gain: 0.7,
            offset: 0.25,
            extra_noise: 0.02,
        }
    }

    fn remap(&self, v: f64) -> f64 {
        match *self {
            DomainShift::None => v,
            DomainShift::Intensity { gamma, gain, offset, .. } => offset + gain * v.max(0.0).powf(gamma),
        }
    }

    fn extra_noise(&self) -> f64 {
        match *self {
            DomainShift::None => 0.0,
            DomainShift::Intensity { extra_noise, .. } => extra_noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    pub count: usize,
    pub class_count: usize,
    /// Inclusive range of blobs per image.
    pub blob_count: (usize, usize),
    /// Range of blob semi-axes in pixels.
    pub blob_radius: (f64, f64),
    /// Gaussian blur applied to the label intensities, emulating soft edges.
    pub boundary_blur: f64,
    /// Mean intensity per class; `levels[0]` is background.
    pub levels: Vec<f64>,
    pub noise_sigma: f64,
    pub shift: DomainShift,
    pub domain: Domain,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            count: 20,
            class_count: 2,
            blob_count: (1, 3),
            blob_radius: (10.0, 24.0),
            boundary_blur: 1.2,
            levels: vec![0.2, 0.65],
            noise_sigma: 0.03,
            shift: DomainShift::None,
            domain: Domain::Source,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.width < 32 || self.height < 32 {
            return Err(format!("phantoms must be at least 32x32, got {}x{}", self.width, self.height));
        }
        if self.class_count < 2 || self.levels.len() != self.class_count {
            return Err(format!(
                "need one intensity level per class ({} classes, {} levels)",
                self.class_count,
                self.levels.len()
            ));
        }
        if self.blob_count.0 > self.blob_count.1 || self.blob_count.1 == 0 {
            return Err("blob count range is empty".into());
        }
        if !(self.blob_radius.0 > 0.0 && self.blob_radius.0 <= self.blob_radius.1) {
            return Err("blob radius range is invalid".into());
        }
        Ok(())
    }

    /// Evenly spaced class levels between 0.2 and 0.8.
    pub fn spaced_levels(class_count: usize) -> Vec<f64> {
        (0..class_count)
            .map(|c| 0.2 + 0.6 * c as f64 / (class_count - 1).max(1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataItem {
    pub id: String,
    pub image: GridImage,
    pub labels: LabelMask,
    pub domain: Domain,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub items: Vec<DataItem>,
}

impl Dataset {
    pub fn in_domain(&self, domain: Domain) -> impl Iterator<Item = &DataItem> {
        self.items.iter().filter(move |i| i.domain == domain)
    }

    pub fn class_count(&self) -> Option<usize> {
        self.items.first().map(|i| i.labels.class_count())
    }
}

/// A blob: rotated ellipse with a sinusoidal radial wobble.
struct Blob {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    theta: f64,
    wobble: f64,
    lobes: f64,
    phase: f64,
    class: u8,
}

impl Blob {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (c, s) = (self.theta.cos(), self.theta.sin());
        let u = (dx * c + dy * s) / self.rx;
        let v = (-dx * s + dy * c) / self.ry;
        let phi = v.atan2(u);
        (u * u + v * v).sqrt() <= 1.0 + self.wobble * (self.lobes * phi + self.phase).sin()
    }
}

/// Separable Gaussian blur of a float field with edge renormalization.
pub(crate) fn blur_values(data: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return data.to_vec();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let (mut acc, mut norm) = (0.0, 0.0);
                for (i, &kv) in k.iter().enumerate() {
                    let o = i as i64 - r;
                    let (sx, sy) = if horizontal { (x as i64 + o, y as i64) } else { (x as i64, y as i64 + o) };
                    if sx < 0 || sy < 0 || sx >= w as i64 || sy >= h as i64 {
                        continue;
                    }
                    acc += kv * src[sy as usize * w + sx as usize];
                    norm += kv;
                }
                out[y * w + x] = acc / norm;
            }
        }
        out
    };
    pass(&pass(data, true), false)
}

fn phantom(spec: &PhantomSpec, rng: &mut ChaCha8Rng, index: usize) -> DataItem {
    let (w, h) = (spec.width, spec.height);
    let n = rng.random_range(spec.blob_count.0..=spec.blob_count.1);
    let blobs: Vec<Blob> = (0..n)
        .map(|b| {
            let rx = rng.random_range(spec.blob_radius.0..=spec.blob_radius.1);
            let ry = rng.random_range(spec.blob_radius.0..=spec.blob_radius.1);
            let margin = rx.max(ry).min(w.min(h) as f64 / 2.0 - 1.0);
            Blob {
                cx: rng.random_range(margin..=(w as f64 - 1.0 - margin)),
                cy: rng.random_range(margin..=(h as f64 - 1.0 - margin)),
                rx,
                ry,
                theta: rng.random_range(0.0..std::f64::consts::PI),
                wobble: rng.random_range(0.0..0.15),
                lobes: rng.random_range(2..=4) as f64,
                phase: rng.random_range(0.0..std::f64::consts::TAU),
                class: 1 + (b % (spec.class_count - 1)) as u8,
            }
        })
        .collect();
    let mut labels = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            for b in &blobs {
                if b.contains(x as f64, y as f64) {
                    labels[y * w + x] = b.class;
                }
            }
        }
    }
    let clean: Vec<f64> = labels.iter().map(|&l| spec.levels[l as usize]).collect();
    let blurred = blur_values(&clean, w, h, spec.boundary_blur);
    let noise = Normal::new(0.0, spec.noise_sigma.max(0.0)).expect("finite sigma");
    let extra = Normal::new(0.0, spec.shift.extra_noise().max(0.0)).expect("finite sigma");
    let data: Vec<f64> = blurred
        .iter()
        .map(|&v| {
            let noisy = v + noise.sample(rng);
            (spec.shift.remap(noisy.clamp(0.0, 1.0)) + extra.sample(rng)).clamp(0.0, 1.0)
        })
        .collect();
    DataItem {
        id: format!("img_{index:03}"),
        image: GridImage::new(w, h, data).expect("values clamped"),
        labels: LabelMask::new(w, h, spec.class_count, labels).expect("labels below class count"),
        domain: spec.domain,
    }
}

/// Generates `spec.count` phantoms. Identical specs give identical datasets.
pub fn generate_phantoms(spec: &PhantomSpec) -> Result<Dataset, String> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok(Dataset {
        items: (0..spec.count).map(|i| phantom(spec, &mut rng, i)).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LobeKind {
    /// Cuts into the foreground (false negatives).
    Erode,
    /// Bulges into the background (false positives).
    Dilate,
}

/// A directional boundary displacement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lobe {
    pub kind: LobeKind,
    /// Center of the lobe in degrees (math convention, y up), seen from the mask centroid.
    pub angle_deg: f64,
    /// Angular half-width in degrees.
    pub half_width_deg: f64,
    /// Maximum displacement in pixels at the lobe center.
    pub depth: f64,
}

/// Corruptions applied by [`perturb_mask`]. A default spec changes nothing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    pub lobes: Vec<Lobe>,
    pub hole_count: usize,
    pub hole_radius: f64,
    pub fragment_count: usize,
    pub fragment_radius: f64,
    /// Probability of flipping each pixel adjacent to the boundary.
    pub jitter: f64,
    pub seed: u64,
}

/// Chessboard distance from every pixel to the nearest pixel with the opposite value.
fn distance_to_opposite(mask: &BinaryMask) -> Vec<u32> {
    let (w, h) = mask.dims();
    let mut dist = vec![u32::MAX; w * h];
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            let v = mask.get(x, y);
            let edge = (-1i64..=1).any(|dy| {
                (-1i64..=1).any(|dx| {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 && mask.get(nx as usize, ny as usize) != v
                })
            });
            if edge {
                dist[y * w + x] = 1;
                queue.push_back((x, y));
            }
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        let d = dist[y * w + x];
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                if mask.get(nx, ny) == mask.get(x, y) && dist[ny * w + nx] > d + 1 {
                    dist[ny * w + nx] = d + 1;
                    queue.push_back((nx, ny));
                }
            }
        }
    }
    dist
}

fn stamp_disk(mask: &mut BinaryMask, cx: f64, cy: f64, r: f64, value: bool) {
    let (w, h) = mask.dims();
    let x0 = (cx - r).floor().max(0.0) as usize;
    let y0 = (cy - r).floor().max(0.0) as usize;
    let x1 = ((cx + r).ceil() as usize).min(w - 1);
    let y1 = ((cy + r).ceil() as usize).min(h - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            if dx * dx + dy * dy <= r * r {
                mask.set(x, y, value);
            }
        }
    }
}

/// Applies directional lobes, hole punches, fragment spray and boundary jitter, in that order.
pub fn perturb_mask(gt: &BinaryMask, spec: &PerturbSpec) -> BinaryMask {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h) = gt.dims();
    let mut out = gt.clone();
    let fg: Vec<Pixel> = gt.foreground().collect();
    let Some(c) = centroid(&fg) else {
        return out;
    };

    if !spec.lobes.is_empty() {
        let dist = distance_to_opposite(gt);
        for y in 0..h {
            for x in 0..w {
                let a = angle_deg(c, (x as f64, y as f64));
                for lobe in &spec.lobes {
                    let off = normalize_deg(a - lobe.angle_deg).abs();
                    if off >= lobe.half_width_deg {
                        continue;
                    }
                    let reach = lobe.depth * (std::f64::consts::FRAC_PI_2 * off / lobe.half_width_deg).cos();
                    let d = dist[y * w + x] as f64;
                    match lobe.kind {
                        LobeKind::Erode if gt.get(x, y) && d <= reach => out.set(x, y, false),
                        LobeKind::Dilate if !gt.get(x, y) && d <= reach => out.set(x, y, true),
                        _ => {}
                    }
                }
            }
        }
    }

    let inside: Vec<Pixel> = out.foreground().collect();
    let dist = distance_to_opposite(&out);
    for _ in 0..spec.hole_count {
        // Holes sit well inside the foreground so they stay enclosed.
        let deep: Vec<&Pixel> = inside
            .iter()
            .filter(|p| dist[p.y * w + p.x] as f64 > spec.hole_radius + 2.0)
            .collect();
        if deep.is_empty() {
            break;
        }
        let p = deep[rng.random_range(0..deep.len())];
        stamp_disk(&mut out, p.x as f64, p.y as f64, spec.hole_radius, false);
    }
    for _ in 0..spec.fragment_count {
        let far: Vec<usize> = (0..w * h)
            .filter(|&i| !out.bits()[i] && dist[i] as f64 > spec.fragment_radius + 3.0)
            .collect();
        if far.is_empty() {
            break;
        }
        let i = far[rng.random_range(0..far.len())];
        stamp_disk(&mut out, (i % w) as f64, (i / w) as f64, spec.fragment_radius, true);
    }
    if spec.jitter > 0.0 {
        let near = distance_to_opposite(&out);
        let base = out.clone();
        for y in 0..h {
            for x in 0..w {
                if near[y * w + x] == 1 && rng.random::<f64>() < spec.jitter {
                    out.set(x, y, !base.get(x, y));
                }
            }
        }
    }
    out
}

/// One refinement test case: a two-tone ellipse, a prediction with a single
/// directional lobe, and a roi framing the lobe.
#[derive(Debug, Clone, PartialEq)]
pub struct LobeFixture {
    pub image: GridImage,
    pub gt: BinaryMask,
    pub pred: BinaryMask,
    pub roi: Roi,
    pub kind: LobeKind,
    pub direction: Direction,
}

/// Seeded ellipse fixture with an erosion (`Expand` fixes it) or dilation
/// (`Shrink` fixes it) lobe in one of the eight compass directions.
pub fn lobe_fixture(seed: u64) -> LobeFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (72usize, 72usize);
    let rx = rng.random_range(13.0..18.0);
    let ry = rng.random_range(13.0..18.0);
    let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let (cx, cy) = (35.5 + rng.random_range(-2.0..2.0), 35.5 + rng.random_range(-2.0..2.0));
    let gt = BinaryMask::from_fn(w, h, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        let u = (dx * theta.cos() + dy * theta.sin()) / rx;
        let v = (-dx * theta.sin() + dy * theta.cos()) / ry;
        u * u + v * v <= 1.0
    });
    let fg_level = rng.random_range(0.6..0.85);
    let bg_level = rng.random_range(0.1..0.3);
    let clean: Vec<f64> = gt.bits().iter().map(|&b| if b { fg_level } else { bg_level }).collect();
    let blurred = blur_values(&clean, w, h, 0.8);
    let noise = Normal::new(0.0, 0.01).expect("finite sigma");
    let image = GridImage::new(
        w,
        h,
        blurred.iter().map(|v| (v + noise.sample(&mut rng)).clamp(0.0, 1.0)).collect(),
    )
    .expect("clamped");

    let direction = [
        Direction::Right,
        Direction::TopRight,
        Direction::Top,
        Direction::TopLeft,
        Direction::Left,
        Direction::BottomLeft,
        Direction::Bottom,
        Direction::BottomRight,
    ][rng.random_range(0..8)];
    let kind = if rng.random_bool(0.5) { LobeKind::Erode } else { LobeKind::Dilate };
    let angle = direction.center_deg().expect("compass direction");
    let lobe = Lobe {
        kind,
        angle_deg: angle,
        half_width_deg: rng.random_range(30.0..45.0),
        depth: rng.random_range(4.0..7.0),
    };
    let pred = perturb_mask(
        &gt,
        &PerturbSpec {
            lobes: vec![lobe],
            seed,
            ..PerturbSpec::default()
        },
    );
    // Frame the lobe: a 33x33 roi centered on the true boundary along the lobe axis.
    let (ux, uy) = (angle.to_radians().cos(), -angle.to_radians().sin());
    let mut t = 0.0;
    while gt.get_signed((cx + ux * (t + 1.0)).round() as i64, (cy + uy * (t + 1.0)).round() as i64) {
        t += 1.0;
    }
    let (bx, by) = (cx + ux * t, cy + uy * t);
    let side = 33usize;
    let x0 = (bx.round() as i64 - 16).clamp(0, (w - side) as i64) as usize;
    let y0 = (by.round() as i64 - 16).clamp(0, (h - side) as i64) as usize;
    LobeFixture {
        image,
        gt,
        pred,
        roi: Roi::new(x0, y0, side, side),
        kind,
        direction,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::dice;
    use crate::region::holes;

    #[test]
    fn phantoms_are_deterministic_and_cover_every_class() {
        let spec = PhantomSpec {
            count: 3,
            class_count: 3,
            levels: PhantomSpec::spaced_levels(3),
            blob_count: (2, 3),
            ..PhantomSpec::default()
        };
        let a = generate_phantoms(&spec).unwrap();
        let b = generate_phantoms(&spec).unwrap();
        assert_eq!(a, b);
        for item in &a.items {
            assert!(item.labels.histogram().iter().all(|&n| n > 0), "{:?}", item.labels.histogram());
        }
    }

    #[test]
    fn intensity_shift_moves_the_mean() {
        let spec = PhantomSpec {
            count: 4,
            ..PhantomSpec::default()
        };
        let shifted = PhantomSpec {
            shift: DomainShift::intensity(),
            ..spec.clone()
        };
        let mean = |d: &Dataset| {
            let all: Vec<f64> = d.items.iter().flat_map(|i| i.image.data().to_vec()).collect();
            all.iter().sum::<f64>() / all.len() as f64
        };
        let (m0, m1) = (mean(&generate_phantoms(&spec).unwrap()), mean(&generate_phantoms(&shifted).unwrap()));
        assert!(m1 - m0 > 0.15, "source {m0}, target {m1}");
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(generate_phantoms(&PhantomSpec {
            width: 16,
            ..PhantomSpec::default()
        })
        .is_err());
        assert!(generate_phantoms(&PhantomSpec {
            levels: vec![0.1],
            ..PhantomSpec::default()
        })
        .is_err());
    }

    fn disk(w: usize, r: f64) -> BinaryMask {
        let c = (w as f64 - 1.0) / 2.0;
        BinaryMask::from_fn(w, w, |x, y| (x as f64 - c).powi(2) + (y as f64 - c).powi(2) <= r * r)
    }

    #[test]
    fn zero_spec_is_identity() {
        let gt = disk(40, 12.0);
        assert_eq!(perturb_mask(&gt, &PerturbSpec::default()), gt);
    }

    #[test]
    fn hole_punch_creates_enclosed_holes() {
        let gt = disk(48, 16.0);
        let p = perturb_mask(
            &gt,
            &PerturbSpec {
                hole_count: 2,
                hole_radius: 1.5,
                seed: 3,
                ..PerturbSpec::default()
            },
        );
        assert!(p.is_subset_of(&gt));
        assert!(!holes(&p, &Roi::full(48, 48)).is_empty());
    }

    #[test]
    fn erode_lobe_only_removes_on_its_side() {
        let gt = disk(48, 16.0);
        let p = perturb_mask(
            &gt,
            &PerturbSpec {
                lobes: vec![Lobe {
                    kind: LobeKind::Erode,
                    angle_deg: 0.0,
                    half_width_deg: 40.0,
                    depth: 5.0,
                }],
                ..PerturbSpec::default()
            },
        );
        assert!(p.is_subset_of(&gt));
        let removed: Vec<Pixel> = gt.difference(&p).foreground().collect();
        assert!(!removed.is_empty());
        assert!(removed.iter().all(|q| q.x as f64 > 23.5));
    }

    #[test]
    fn nonzero_specs_reduce_dice() {
        let gt = disk(48, 14.0);
        let spec = PerturbSpec {
            fragment_count: 2,
            fragment_radius: 1.0,
            jitter: 0.2,
            seed: 9,
            ..PerturbSpec::default()
        };
        assert!(dice(&perturb_mask(&gt, &spec), &gt).unwrap() < 1.0);
    }

    #[test]
    fn lobe_fixture_is_seeded_and_framed() {
        let a = lobe_fixture(7);
        assert_eq!(a, lobe_fixture(7));
        assert!(a.roi.validate(72, 72).is_ok());
        let err = a.gt.bits().iter().zip(a.pred.bits()).filter(|(x, y)| x != y).count();
        assert!(err > 0);
        assert_eq!(a.pred.diff_outside(&a.gt, &a.roi), 0, "lobe must sit inside the roi");
    }
}
