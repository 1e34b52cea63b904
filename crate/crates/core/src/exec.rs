//! Program execution against an image, a predicted mask and a roi.

use crate::cluster::IntensityClusterer;
use crate::command::{Op, Program, Step};
use crate::direction::{angle_deg, Direction};
use crate::grid::{centroid, BinaryMask, GridError, GridImage, LabelMask, Pixel, Roi};
use crate::morphology::{blend_where, close, smooth};
use crate::refine::{refine, EtaTrace, RefineOp, RefineParams};
use crate::region::{connected_components, holes, Connectivity};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecError {
    #[error("variable `{0}` is not bound")]
    UnboundVariable(String),
    #[error("class id {class_id} is not below class count {class_count}")]
    ClassOutOfRange { class_id: u8, class_count: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Per-operation defaults. Any of them can be overridden per step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecConfig {
    pub refine: RefineParams,
    /// Disk radius used by FILL.
    pub fill_radius: usize,
    pub smooth_sigma: f64,
    pub smooth_thresh: f64,
    /// REMOVE deletes components smaller than this fraction of the roi area.
    pub frag_fraction: f64,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self {
            refine: RefineParams::default(),
            fill_radius: 3,
            smooth_sigma: 2.0,
            smooth_thresh: 0.5,
            frag_fraction: 0.05,
        }
    }
}

impl ExecConfig {
    /// Settings for one step after applying its overrides.
    fn for_step(&self, step: &Step, roi: &Roi) -> (ExecConfig, f64) {
        let mut cfg = *self;
        let mut frag_area = self.frag_fraction * roi.area() as f64;
        for (k, &v) in &step.overrides {
            match k.as_str() {
                "granularity" => cfg.refine.cluster.granularity = v,
                "max_region" => cfg.refine.cluster.max_region_fraction = v,
                "samples" => cfg.refine.sample_percent = v,
                "offset" => cfg.refine.offset = v.max(1.0) as usize,
                "iters" => cfg.refine.max_iters = v.max(1.0) as usize,
                "radius" => cfg.fill_radius = v.max(1.0) as usize,
                "sigma" => cfg.smooth_sigma = v,
                "thresh" => cfg.smooth_thresh = v,
                "frag_area" => frag_area = v,
                _ => {}
            }
        }
        (cfg, frag_area)
    }
}

/// Everything a program runs against. `MASK` is bound to the initial mask.
#[derive(Debug, Clone)]
pub struct ExecEnv {
    pub image: GridImage,
    pub roi: Roi,
    pub config: ExecConfig,
    bindings: BTreeMap<String, BinaryMask>,
}

impl ExecEnv {
    pub fn new(image: GridImage, initial: BinaryMask, roi: Roi, config: ExecConfig) -> Result<Self, ExecError> {
        if (image.width(), image.height()) != initial.dims() {
            return Err(GridError::DimensionMismatch(
                image.width(),
                image.height(),
                initial.width(),
                initial.height(),
            )
            .into());
        }
        roi.validate(image.width(), image.height())?;
        let bindings = BTreeMap::from([(crate::command::INPUT_VAR.to_string(), initial)]);
        Ok(Self {
            image,
            roi,
            config,
            bindings,
        })
    }

    pub fn initial(&self) -> &BinaryMask {
        &self.bindings[crate::command::INPUT_VAR]
    }

    pub fn binding(&self, name: &str) -> Option<&BinaryMask> {
        self.bindings.get(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub op: Op,
    pub direction: Direction,
    pub input: String,
    pub output: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_trace: Option<EtaTrace>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_iter: Option<usize>,
    /// Pixels whose value differs between the step's input and output.
    pub changed_pixels: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecLog {
    pub steps: Vec<StepRecord>,
}

impl ExecLog {
    pub fn warnings(&self) -> impl Iterator<Item = &str> {
        self.steps.iter().flat_map(|s| s.warnings.iter().map(String::as_str))
    }

    /// η traces of every EXPAND/SHRINK step, in program order.
    pub fn eta_traces(&self) -> impl Iterator<Item = &EtaTrace> {
        self.steps.iter().filter_map(|s| s.eta_trace.as_ref())
    }
}

fn sector_contains(center: (f64, f64), p: (f64, f64), dir: Direction) -> bool {
    dir == Direction::Overall || Direction::between(center, p) == dir
}

fn run_step(env: &ExecEnv, step: &Step, input: &BinaryMask, record: &mut StepRecord) -> BinaryMask {
    let roi = &env.roi;
    let (cfg, frag_area) = env.config.for_step(step, roi);
    let dir = step.direction;
    match step.op {
        Op::Expand | Op::Shrink => {
            if let Err(e) = cfg.refine.validate() {
                record.warnings.push(format!("{}: {e}", step.op));
                return input.clone();
            }
            let op = if step.op == Op::Expand {
                RefineOp::Expand
            } else {
                RefineOp::Shrink
            };
            let clusterer = IntensityClusterer::new(cfg.refine.cluster);
            let result = refine(input, &env.image, roi, dir, op, &cfg.refine, &clusterer);
            record.warnings.extend(result.warnings);
            record.best_iter = Some(result.best_iter);
            record.eta_trace = Some(result.trace);
            result.mask
        }
        Op::Remove => {
            let center = roi.center();
            let mut out = input.clone();
            for comp in connected_components(input, roi, Connectivity::Eight) {
                if (comp.area() as f64) < frag_area && sector_contains(center, comp.centroid, dir) {
                    for &p in &comp.pixels {
                        out.set_at(p, false);
                    }
                }
            }
            out
        }
        Op::Fill => {
            let closed = close(input, roi, cfg.fill_radius);
            if dir == Direction::Overall {
                return closed;
            }
            let center = roi.center();
            let mut out = input.clone();
            for hole in holes(input, roi) {
                if sector_contains(center, hole.centroid, dir) {
                    for &p in &hole.pixels {
                        out.set_at(p, closed.at(p));
                    }
                }
            }
            out
        }
        Op::Smooth => {
            if !(cfg.smooth_sigma > 0.0 && cfg.smooth_thresh > 0.0 && cfg.smooth_thresh < 1.0) {
                record
                    .warnings
                    .push(format!("SMOOTH: invalid sigma {} / threshold {}", cfg.smooth_sigma, cfg.smooth_thresh));
                return input.clone();
            }
            let smoothed = smooth(input, roi, cfg.smooth_sigma, cfg.smooth_thresh);
            if dir == Direction::Overall {
                return smoothed;
            }
            let fg: Vec<Pixel> = input.foreground_in(roi).collect();
            let center = centroid(&fg).unwrap_or_else(|| roi.center());
            let mut out = input.clone();
            blend_where(&mut out, &smoothed, roi, |p| {
                dir.contains_angle(angle_deg(center, (p.x as f64, p.y as f64)))
            });
            out
        }
        Op::Foreground | Op::Background => {
            let mut out = input.clone();
            out.fill_roi(roi, step.op == Op::Foreground);
            out
        }
        Op::Result => input.clone(),
    }
}

/// Runs `program` in order and returns the full-image mask with only roi
/// pixels replaced by the `RESULT` value.
///
/// Steps that cannot do anything useful record a warning and pass their input
/// through; execution never stops part-way.
pub fn execute(program: &Program, env: &mut ExecEnv) -> Result<(BinaryMask, ExecLog), ExecError> {
    let mut log = ExecLog::default();
    let mut result = None;
    for step in program.steps() {
        let input = env
            .bindings
            .get(&step.input)
            .ok_or_else(|| ExecError::UnboundVariable(step.input.clone()))?
            .clone();
        let mut record = StepRecord {
            op: step.op,
            direction: step.direction,
            input: step.input.clone(),
            output: step.output.clone(),
            eta_trace: None,
            best_iter: None,
            changed_pixels: 0,
            warnings: Vec::new(),
        };
        let mut out = run_step(env, step, &input, &mut record);
        // Locality is enforced here regardless of what the operation did.
        let mut clamped = input.clone();
        clamped.copy_roi_from(&out, &env.roi);
        out = clamped;
        record.changed_pixels = out.differing_pixels(&input).count();
        if step.op == Op::Result {
            result = Some(out.clone());
        }
        env.bindings.insert(step.output.clone(), out);
        log.steps.push(record);
    }
    let refined = result.expect("validated programs end in RESULT");
    let mut full = env.initial().clone();
    full.copy_roi_from(&refined, &env.roi);
    Ok((full, log))
}

/// Writes a binary patch into a label map inside `roi`: patch pixels become
/// `class_id`, other roi pixels become background.
///
/// `patch` is either roi-sized or full-image-sized (then only its roi is read).
pub fn apply_patch(full: &LabelMask, roi: &Roi, patch: &BinaryMask, class_id: u8) -> Result<LabelMask, ExecError> {
    if class_id as usize >= full.class_count() {
        return Err(ExecError::ClassOutOfRange {
            class_id,
            class_count: full.class_count(),
        });
    }
    roi.validate(full.width(), full.height())?;
    let read: Box<dyn Fn(Pixel) -> bool> = if patch.dims() == (roi.w, roi.h) {
        Box::new(|p: Pixel| patch.get(p.x - roi.x, p.y - roi.y))
    } else if patch.dims() == (full.width(), full.height()) {
        Box::new(|p: Pixel| patch.at(p))
    } else {
        return Err(GridError::DimensionMismatch(patch.width(), patch.height(), roi.w, roi.h).into());
    };
    let mut out = full.clone();
    for p in roi.pixels() {
        out.set_at(p, if read(p) { class_id } else { 0 });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::command::parse_command;

    fn disk(w: usize, h: usize, cx: f64, cy: f64, r: f64) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            dx * dx + dy * dy <= r * r
        })
    }

    fn env_with(mask: BinaryMask, roi: Roi) -> ExecEnv {
        let img = GridImage::from_fn(mask.width(), mask.height(), |x, y| if mask.get(x, y) { 0.8 } else { 0.2 });
        ExecEnv::new(img, mask, roi, ExecConfig::default()).unwrap()
    }

    #[test]
    fn foreground_fills_only_the_roi() {
        let m = disk(30, 30, 8.0, 8.0, 5.0);
        let roi = Roi::new(15, 15, 10, 10);
        let mut env = env_with(m.clone(), roi);
        let (out, log) = execute(&parse_command("mark as foreground").unwrap(), &mut env).unwrap();
        assert_eq!(out.count_in(&roi), 100);
        assert!(out.equal_outside(&m, &roi));
        assert_eq!(log.steps.len(), 2);
    }

    #[test]
    fn foreground_then_background_is_background() {
        let m = disk(30, 30, 15.0, 15.0, 8.0);
        let roi = Roi::new(10, 10, 10, 10);
        let mut env = env_with(m.clone(), roi);
        let p = parse_command("mark as foreground, then mark as background").unwrap();
        let (out, _) = execute(&p, &mut env).unwrap();
        let mut env2 = env_with(m, roi);
        let (bg, _) = execute(&parse_command("background").unwrap(), &mut env2).unwrap();
        assert_eq!(out, bg);
        assert_eq!(out.count_in(&roi), 0);
    }

    #[test]
    fn fill_overall_closes_a_small_hole() {
        let mut m = disk(40, 40, 20.0, 20.0, 10.0);
        m.set(20, 20, false);
        m.set(21, 20, false);
        let roi = Roi::new(8, 8, 25, 25);
        let mut env = env_with(m.clone(), roi);
        let (out, _) = execute(&parse_command("fill up the holes").unwrap(), &mut env).unwrap();
        assert_eq!(out, close(&m, &roi, 3));
        assert!(out.get(20, 20) && out.get(21, 20));
    }

    #[test]
    fn directional_fill_only_closes_holes_in_the_sector() {
        let mut m = disk(40, 40, 20.0, 20.0, 12.0);
        m.set(14, 20, false); // left of the roi center
        m.set(26, 20, false); // right of the roi center
        let roi = Roi::new(5, 5, 31, 31);
        let mut env = env_with(m.clone(), roi);
        let (out, _) = execute(&parse_command("fill the holes on the right").unwrap(), &mut env).unwrap();
        assert!(out.get(26, 20));
        assert!(!out.get(14, 20));
        assert_eq!(out.differing_pixels(&m).count(), 1);
    }

    #[test]
    fn remove_respects_size_and_sector() {
        let mut m = disk(40, 40, 20.0, 12.0, 6.0);
        m.set(20, 33, true); // small fragment below the roi center
        m.set(5, 20, true); // small fragment left of the roi center
        let roi = Roi::full(40, 40);
        let mut env = env_with(m.clone(), roi);
        let (out, _) = execute(&parse_command("remove the fragments at the bottom").unwrap(), &mut env).unwrap();
        assert!(!out.get(20, 33));
        assert!(out.get(5, 20));
        assert!(out.get(20, 12));
        let mut env = env_with(m.clone(), roi);
        let (out, _) = execute(&parse_command("remove the small fragments").unwrap(), &mut env).unwrap();
        assert!(!out.get(20, 33) && !out.get(5, 20));
        assert_eq!(out.count(), m.count() - 2);
    }

    #[test]
    fn directional_smooth_leaves_other_sectors_alone() {
        // A jagged square: spikes on the left and right edges.
        let mut m = BinaryMask::from_fn(40, 40, |x, y| (12..28).contains(&x) && (12..28).contains(&y));
        m.set(11, 20, true);
        m.set(28, 20, true);
        let roi = Roi::full(40, 40);
        let mut env = env_with(m.clone(), roi);
        let (out, _) = execute(&parse_command("smooth the right border").unwrap(), &mut env).unwrap();
        assert!(!out.get(28, 20));
        assert!(out.get(11, 20));
    }

    #[test]
    fn expand_records_eta_trace() {
        let gt = disk(40, 40, 20.0, 20.0, 10.0);
        let pred = BinaryMask::from_fn(40, 40, |x, y| gt.get(x, y) && x < 25);
        let img = GridImage::from_fn(40, 40, |x, y| if gt.get(x, y) { 0.8 } else { 0.2 });
        let roi = Roi::new(10, 8, 25, 25);
        let mut env = ExecEnv::new(img, pred.clone(), roi, ExecConfig::default()).unwrap();
        let (out, log) = execute(&parse_command("expand to the right").unwrap(), &mut env).unwrap();
        assert!(log.steps[0].eta_trace.is_some());
        assert!(pred.is_subset_of(&out));
        assert!(out.is_subset_of(&gt));
        assert!(out.count() > pred.count());
    }

    #[test]
    fn apply_patch_semantics() {
        let full = LabelMask::new(4, 4, 3, vec![2; 16]).unwrap();
        let roi = Roi::new(1, 1, 2, 2);
        let zero = BinaryMask::new(2, 2);
        let out = apply_patch(&full, &roi, &zero, 1).unwrap();
        assert_eq!(out.histogram(), vec![4, 0, 12]);
        let same = full.class_mask(2);
        assert_eq!(apply_patch(&full, &roi, &same, 2).unwrap(), full);
        assert!(apply_patch(&full, &roi, &zero, 3).is_err());
        assert!(apply_patch(&full, &roi, &BinaryMask::new(3, 3), 1).is_err());
    }

    #[test]
    fn disjoint_patches_commute() {
        let full = LabelMask::background(10, 10, 2);
        let (r1, r2) = (Roi::new(0, 0, 4, 4), Roi::new(5, 5, 4, 4));
        let p1 = BinaryMask::from_fn(4, 4, |x, y| x + y < 4);
        let p2 = BinaryMask::from_fn(4, 4, |x, _| x % 2 == 0);
        let a = apply_patch(&apply_patch(&full, &r1, &p1, 1).unwrap(), &r2, &p2, 1).unwrap();
        let b = apply_patch(&apply_patch(&full, &r2, &p2, 1).unwrap(), &r1, &p1, 1).unwrap();
        assert_eq!(a, b);
    }
}
