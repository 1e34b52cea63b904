//! Simulated expert: inspects a prediction against ground truth inside a roi
//! and phrases the needed corrections as a natural-language command.

use crate::command::{Op, Program};
use crate::direction::{angle_deg, Direction};
use crate::exec::{execute, ExecConfig, ExecEnv, ExecError};
use crate::grid::{centroid, BinaryMask, GridImage, Pixel, Roi};
use crate::metrics::dice_in;
use crate::region::{connected_components, extract_boundary, holes, roughness, Component, Connectivity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

/// What the simulator looked at when it chose an item.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    /// Error pixels behind the decision (FN, FP, fragment or hole pixels).
    pub area: usize,
    /// Centroid of those pixels.
    pub centroid: Option<(f64, f64)>,
    /// Reference point the direction was measured from.
    pub anchor: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackItem {
    pub op: Op,
    pub direction: Direction,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackConfig {
    /// Minimum FN or FP area before EXPAND or SHRINK is requested.
    pub dominance_min_area: usize,
    /// Largest fragment (as a fraction of roi area) that REMOVE may target.
    pub frag_max_fraction: f64,
    /// SMOOTH is requested when prediction roughness exceeds ground truth by this factor.
    pub roughness_ratio: f64,
    /// Use synonym templates instead of the canonical phrasing.
    pub vary_phrasing: bool,
    /// Preview each correction and withhold the ones that lower roi Dice,
    /// as an annotator rejecting a bad preview would. See [`review_feedback`].
    #[serde(default = "default_preview")]
    pub preview: bool,
    pub seed: u64,
}

fn default_preview() -> bool {
    true
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self {
            dominance_min_area: 4,
            frag_max_fraction: 0.05,
            roughness_ratio: 1.5,
            vary_phrasing: false,
            preview: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeedbackError {
    #[error("nothing to say: the feedback list is empty")]
    Empty,
}

fn item(op: Op, direction: Direction, area: usize, c: Option<(f64, f64)>, anchor: Option<(f64, f64)>) -> FeedbackItem {
    FeedbackItem {
        op,
        direction,
        evidence: Evidence {
            area,
            centroid: c,
            anchor,
        },
    }
}

/// One sector when all parts agree as seen from `from`, otherwise `Overall`.
fn common_sector(from: (f64, f64), parts: &[&Component]) -> Direction {
    let mut sectors = parts.iter().map(|c| Direction::between(from, c.centroid));
    let first = sectors.next().unwrap_or(Direction::Overall);
    if sectors.all(|d| d == first) {
        first
    } else {
        Direction::Overall
    }
}

fn all_pixels<'a>(parts: &'a [&'a Component]) -> impl Iterator<Item = &'a Pixel> {
    parts.iter().flat_map(|c| c.pixels.iter())
}

/// Decides which corrections the roi needs.
///
/// Order: a uniform ground truth short-circuits to FOREGROUND or BACKGROUND.
/// Otherwise the dominant of FN/FP yields one EXPAND or SHRINK, followed by
/// REMOVE, FILL and SMOOTH when they apply. Fragments that REMOVE will delete
/// and holes that FILL will close do not count toward FN/FP dominance.
pub fn analyze_roi(pred: &BinaryMask, gt: &BinaryMask, roi: &Roi, cfg: &FeedbackConfig) -> Vec<FeedbackItem> {
    let mut items = Vec::new();
    if roi.pixels().all(|p| pred.at(p) == gt.at(p)) {
        return items;
    }
    let gt_fg = gt.count_in(roi);
    if gt_fg == roi.area() {
        items.push(item(Op::Foreground, Direction::Overall, roi.area() - pred.count_in(roi), None, None));
        return items;
    }
    if gt_fg == 0 {
        items.push(item(Op::Background, Direction::Overall, pred.count_in(roi), None, None));
        return items;
    }

    let center = roi.center();
    let frag_max = cfg.frag_max_fraction * roi.area() as f64;
    let comps = connected_components(pred, roi, Connectivity::Eight);
    let fragments: Vec<&Component> = comps
        .iter()
        .filter(|c| (c.area() as f64) < frag_max && c.pixels.iter().all(|&p| !gt.at(p)))
        .collect();
    let hole_list = holes(pred, roi);
    let fillable: Vec<&Component> = hole_list.iter().filter(|h| h.pixels.iter().all(|&p| gt.at(p))).collect();
    let handled: HashSet<Pixel> = all_pixels(&fragments).chain(all_pixels(&fillable)).copied().collect();

    let (mut fn_px, mut fp_px) = (Vec::new(), Vec::new());
    for p in roi.pixels().filter(|p| !handled.contains(p)) {
        match (pred.at(p), gt.at(p)) {
            (false, true) => fn_px.push(p),
            (true, false) => fp_px.push(p),
            _ => {}
        }
    }
    let dominant = if fn_px.len() > fp_px.len() && fn_px.len() >= cfg.dominance_min_area {
        Some((Op::Expand, &fn_px))
    } else if fp_px.len() > fn_px.len() && fp_px.len() >= cfg.dominance_min_area {
        Some((Op::Shrink, &fp_px))
    } else {
        if fn_px.len() == fp_px.len() && fn_px.len() >= cfg.dominance_min_area {
            log::info!("roi {roi}: FN and FP tie at {} pixels, no boundary command", fn_px.len());
        }
        None
    };
    if let Some((op, px)) = dominant {
        let boundary = extract_boundary(pred, roi);
        let anchor = centroid(&boundary).unwrap_or(center);
        let target = centroid(px.iter()).expect("nonempty");
        let direction = Direction::from_angle(angle_deg(anchor, target));
        items.push(item(op, direction, px.len(), Some(target), Some(anchor)));
    }
    if !fragments.is_empty() {
        let n = all_pixels(&fragments).count();
        items.push(item(
            Op::Remove,
            common_sector(center, &fragments),
            n,
            centroid(all_pixels(&fragments)),
            Some(center),
        ));
    }
    if !fillable.is_empty() {
        let n = all_pixels(&fillable).count();
        items.push(item(
            Op::Fill,
            common_sector(center, &fillable),
            n,
            centroid(all_pixels(&fillable)),
            Some(center),
        ));
    }
    if let (Some(rp), Some(rg)) = (roughness(pred, roi), roughness(gt, roi)) {
        if rp > rg * cfg.roughness_ratio {
            items.push(item(Op::Smooth, Direction::Overall, 0, None, None));
        }
    }
    items
}

/// "top-right corner", "left", ...
fn place(d: Direction) -> String {
    if d.is_diagonal() {
        format!("{} corner", d.phrase())
    } else {
        d.phrase().to_string()
    }
}

fn clause(op: Op, d: Direction, variant: usize) -> String {
    let at = place(d);
    let overall = d == Direction::Overall;
    let pick = |opts: &[&str]| opts[variant % opts.len()].to_string();
    match op {
        Op::Expand if overall => pick(&["expand the overall boundary", "grow the mask overall"]),
        Op::Expand => {
            let verb = pick(&["expand the boundary at", "grow the mask toward", "extend the boundary at"]);
            format!("{verb} the {at}")
        }
        Op::Shrink if overall => pick(&["shrink the overall boundary", "contract the mask overall"]),
        Op::Shrink => {
            let verb = pick(&["shrink the boundary at", "contract the mask at", "reduce the region on"]);
            format!("{verb} the {at}")
        }
        Op::Remove if overall => pick(&["remove the small fragments", "delete the stray pieces", "erase the isolated specks"]),
        Op::Remove => {
            let verb = pick(&["remove the fragments at", "delete the stray pieces at", "erase the specks near"]);
            format!("{verb} the {at}")
        }
        Op::Fill if overall => pick(&["fill up the holes", "fill the gaps inside the mask", "fill in the holes"]),
        Op::Fill => {
            let verb = pick(&["fill up the holes at", "fill the gaps at", "fill in the holes near"]);
            format!("{verb} the {at}")
        }
        Op::Smooth if overall => pick(&["smooth the overall boundary", "smoothen the contour overall"]),
        Op::Smooth => {
            let verb = pick(&["smooth the boundary at", "smoothen the contour at"]);
            format!("{verb} the {at}")
        }
        Op::Foreground => pick(&["mark this region as foreground", "this region is all foreground"]),
        Op::Background => pick(&["mark this region as background", "this region is all background"]),
        Op::Result => unreachable!("RESULT is never rendered"),
    }
}

/// A correction withheld because its preview lowered roi Dice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Withheld {
    pub item: FeedbackItem,
    pub dice_before: f64,
    pub dice_after: f64,
}

/// Applies `items` one at a time to `pred` inside `roi` and keeps only those
/// that do not lower roi Dice against `gt`. Each withheld item is logged.
///
/// Executing the kept items as one program reproduces the final previewed
/// mask, since steps are applied in the same order to the same inputs.
pub fn review_feedback(
    items: Vec<FeedbackItem>,
    image: &GridImage,
    pred: &BinaryMask,
    gt: &BinaryMask,
    roi: &Roi,
    exec: ExecConfig,
) -> Result<(Vec<FeedbackItem>, Vec<Withheld>), ExecError> {
    let mut current = pred.clone();
    let mut score = dice_in(&current, gt, roi)?;
    let (mut kept, mut withheld) = (Vec::new(), Vec::new());
    for item in items {
        let program = Program::from_ops(&[(item.op, item.direction)]).expect("one op always forms a program");
        let mut env = ExecEnv::new(image.clone(), current.clone(), *roi, exec)?;
        let (next, _) = execute(&program, &mut env)?;
        let after = dice_in(&next, gt, roi)?;
        if after < score {
            log::info!(
                "roi {roi}: withholding {} {} (Dice {score:.4} -> {after:.4})",
                item.op,
                item.direction.label()
            );
            withheld.push(Withheld {
                item,
                dice_before: score,
                dice_after: after,
            });
        } else {
            current = next;
            score = after;
            kept.push(item);
        }
    }
    Ok((kept, withheld))
}

/// Phrases items as one command. With `vary_phrasing` off the canonical
/// template is used for every clause; otherwise templates are drawn from a
/// generator seeded by `cfg.seed`. Either way the command parses back to the
/// same operations and directions in order.
pub fn render_feedback(items: &[FeedbackItem], cfg: &FeedbackConfig) -> Result<String, FeedbackError> {
    if items.is_empty() {
        return Err(FeedbackError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let clauses: Vec<String> = items
        .iter()
        .map(|i| {
            let v = if cfg.vary_phrasing { rng.random_range(0..6) } else { 0 };
            clause(i.op, i.direction, v)
        })
        .collect();
    let body = match clauses.as_slice() {
        [one] => one.clone(),
        [a, b] => format!("{a} and {b}"),
        [init @ .., last] => format!("{}, and {last}", init.join(", ")),
        [] => unreachable!(),
    };
    let mut chars = body.chars();
    let first = chars.next().expect("nonempty").to_uppercase();
    Ok(format!("{first}{}.", chars.as_str()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::command::parse_command;
    use proptest::prelude::*;

    fn bare(op: Op, d: Direction) -> FeedbackItem {
        item(op, d, 0, None, None)
    }

    #[test]
    fn canonical_phrasing() {
        let cfg = FeedbackConfig::default();
        assert_eq!(
            render_feedback(&[bare(Op::Expand, Direction::TopRight)], &cfg).unwrap(),
            "Expand the boundary at the top-right corner."
        );
        assert_eq!(render_feedback(&[bare(Op::Fill, Direction::Overall)], &cfg).unwrap(), "Fill up the holes.");
        assert_eq!(
            render_feedback(&[bare(Op::Expand, Direction::Right), bare(Op::Remove, Direction::Bottom)], &cfg).unwrap(),
            "Expand the boundary at the right and remove the fragments at the bottom."
        );
        assert_eq!(
            render_feedback(
                &[
                    bare(Op::Expand, Direction::TopRight),
                    bare(Op::Remove, Direction::Bottom),
                    bare(Op::Smooth, Direction::Overall)
                ],
                &cfg
            )
            .unwrap(),
            "Expand the boundary at the top-right corner, remove the fragments at the bottom, and smooth the overall boundary."
        );
        assert_eq!(render_feedback(&[], &cfg), Err(FeedbackError::Empty));
    }

    fn disk(w: usize, cx: f64, cy: f64, r: f64) -> BinaryMask {
        BinaryMask::from_fn(w, w, |x, y| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r)
    }

    #[test]
    fn identical_masks_need_nothing() {
        let m = disk(32, 15.5, 15.5, 9.0);
        assert!(analyze_roi(&m, &m, &Roi::full(32, 32), &FeedbackConfig::default()).is_empty());
    }

    #[test]
    fn right_erosion_asks_to_expand_right() {
        let gt = disk(40, 19.5, 19.5, 12.0);
        let pred = BinaryMask::from_fn(40, 40, |x, y| gt.get(x, y) && x < 27);
        let items = analyze_roi(&pred, &gt, &Roi::full(40, 40), &FeedbackConfig::default());
        assert_eq!(items.len(), 1);
        assert_eq!((items[0].op, items[0].direction), (Op::Expand, Direction::Right));
    }

    #[test]
    fn uniform_ground_truth_short_circuits() {
        let roi = Roi::new(4, 4, 10, 10);
        let gt = BinaryMask::new(20, 20);
        let pred = disk(20, 8.0, 8.0, 2.0);
        let items = analyze_roi(&pred, &gt, &roi, &FeedbackConfig::default());
        assert_eq!(items.iter().map(|i| i.op).collect::<Vec<_>>(), vec![Op::Background]);
        let full = BinaryMask::from_fn(20, 20, |_, _| true);
        let items = analyze_roi(&pred, &full, &roi, &FeedbackConfig::default());
        assert_eq!(items.iter().map(|i| i.op).collect::<Vec<_>>(), vec![Op::Foreground]);
    }

    #[test]
    fn fragments_and_holes_get_their_own_commands() {
        let gt = disk(40, 19.5, 19.5, 10.0);
        let mut pred = gt.clone();
        pred.set(19, 19, false);
        pred.set(20, 19, false);
        pred.set(35, 35, true);
        pred.set(36, 35, true);
        let items = analyze_roi(&pred, &gt, &Roi::full(40, 40), &FeedbackConfig::default());
        let ops: Vec<(Op, Direction)> = items.iter().map(|i| (i.op, i.direction)).collect();
        assert_eq!(ops, vec![(Op::Remove, Direction::BottomRight), (Op::Fill, Direction::Top)]);
    }

    #[test]
    fn balanced_errors_are_skipped() {
        let gt = BinaryMask::from_fn(20, 20, |x, _| x < 10);
        // One extra column on top, one missing column below: 10 FP against 10 FN.
        let pred = BinaryMask::from_fn(20, 20, |x, y| if y < 10 { x < 11 } else { x < 9 });
        let items = analyze_roi(&pred, &gt, &Roi::full(20, 20), &FeedbackConfig::default());
        assert!(items.iter().all(|i| !matches!(i.op, Op::Expand | Op::Shrink)));
    }

    #[test]
    fn pipeline_is_exact_on_uniform_rois() {
        let img = GridImage::filled(24, 24, 0.5);
        let roi = Roi::new(6, 6, 12, 12);
        let pred = disk(24, 10.0, 10.0, 3.0);
        for gt in [BinaryMask::new(24, 24), BinaryMask::from_fn(24, 24, |_, _| true)] {
            let cfg = FeedbackConfig::default();
            let text = render_feedback(&analyze_roi(&pred, &gt, &roi, &cfg), &cfg).unwrap();
            let program = parse_command(&text).unwrap();
            let mut env = ExecEnv::new(img.clone(), pred.clone(), roi, ExecConfig::default()).unwrap();
            let (out, _) = execute(&program, &mut env).unwrap();
            assert_eq!(dice_in(&out, &gt, &roi).unwrap(), 1.0);
        }
    }

    #[test]
    fn review_withholds_harmful_items_only() {
        let img = GridImage::filled(24, 24, 0.5);
        let roi = Roi::new(4, 4, 16, 16);
        let gt = disk(24, 12.0, 12.0, 5.0);
        let mut pred = gt.clone();
        pred.set(5, 5, true);
        let items = vec![bare(Op::Background, Direction::Overall), bare(Op::Remove, Direction::Overall)];
        let (kept, withheld) = review_feedback(items, &img, &pred, &gt, &roi, ExecConfig::default()).unwrap();
        assert_eq!(kept, vec![bare(Op::Remove, Direction::Overall)]);
        assert_eq!(withheld.len(), 1);
        assert_eq!(withheld[0].item.op, Op::Background);
        assert!(withheld[0].dice_after < withheld[0].dice_before);
    }

    fn arb_items() -> impl Strategy<Value = Vec<FeedbackItem>> {
        let op = prop::sample::select(&Op::ALL[..7]);
        let d = prop::sample::select(&Direction::ALL[..]);
        // FOREGROUND/BACKGROUND carry no direction of their own.
        prop::collection::vec(
            (op, d).prop_map(|(o, d)| match o {
                Op::Foreground | Op::Background => bare(o, Direction::Overall),
                _ => bare(o, d),
            }),
            1..6,
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn rendered_feedback_parses_back(items in arb_items(), seed in any::<u64>(), vary in any::<bool>()) {
            let cfg = FeedbackConfig { vary_phrasing: vary, seed, ..FeedbackConfig::default() };
            let text = render_feedback(&items, &cfg).unwrap();
            let parsed = parse_command(&text).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
            let want: Vec<(Op, Direction)> = items.iter().map(|i| (i.op, i.direction)).collect();
            prop_assert_eq!(parsed.ops(), want, "{}", text);
            prop_assert_eq!(render_feedback(&items, &cfg).unwrap(), text);
        }
    }
}
