//! Desk-scale active domain adaptation: train on labeled source images, then
//! repeatedly predict on the target, pick rois, correct them through
//! simulated language feedback, and fine-tune on the corrected pixels.

use crate::acquisition::{random_rois, select_rois, Acquisition, BudgetPlan, EntropyAcquisition, ScoredRoi};
use crate::classifier::{pixel_features, Feature, PixelClassifier, TrainError, TrainParams};
use crate::command::{parse_command, render_program, CommandError};
use crate::effort::simplify_contour;
use crate::exec::{execute, ExecConfig, ExecEnv, ExecError};
use crate::expert::{analyze_roi, render_feedback, review_feedback, FeedbackConfig, Withheld};
use crate::grid::{LabelMask, Roi};
use crate::metrics::{dice_in, DiceAccumulator};
use crate::region::trace_contours;
use crate::synth::{DataItem, Dataset, Domain};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdaError {
    #[error("dataset has no {0:?} items")]
    MissingDomain(Domain),
    #[error("class count mismatch: source has {source_classes}, target has {target}")]
    ClassMismatch { source_classes: usize, target: usize },
    #[error("invalid budget: {0}")]
    Budget(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("simulated feedback did not parse: {0}")]
    Feedback(#[from] CommandError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AcquisitionKind {
    Entropy,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub plan: BudgetPlan,
    pub acquisition: AcquisitionKind,
    pub source_train: TrainParams,
    pub finetune: TrainParams,
    pub exec: ExecConfig,
    pub feedback: FeedbackConfig,
    /// Also train on the model's own labels outside the corrected rois.
    pub self_train: bool,
    /// Size of the fixed buffer of labeled source pixels mixed into every
    /// fine-tuning round. Zero trains on corrected pixels alone.
    pub source_replay: usize,
    /// Douglas-Peucker tolerance for the polygon baseline vertex counts.
    pub polygon_epsilon: f64,
    pub seed: u64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            plan: BudgetPlan::default(),
            acquisition: AcquisitionKind::Entropy,
            source_train: TrainParams::default(),
            finetune: TrainParams {
                epochs: 8,
                learning_rate: 0.3,
                batch_size: 64,
                ..TrainParams::default()
            },
            exec: ExecConfig::default(),
            feedback: FeedbackConfig::default(),
            self_train: false,
            source_replay: 10_000,
            polygon_epsilon: 1.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiceSummary {
    pub per_class: Vec<f64>,
    pub mean_foreground: f64,
}

/// One roi/class correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiRecord {
    pub image_id: String,
    pub round: usize,
    pub roi: Roi,
    pub score: f64,
    pub class_id: u8,
    /// `None` when nothing needed (or survived preview for) correction.
    pub command: Option<String>,
    pub program: Option<String>,
    pub dice_before: f64,
    pub dice_after: f64,
    pub words: u64,
    /// Vertices a polygon annotator would have placed for this roi.
    pub polygon_vertices: u64,
    pub warnings: Vec<String>,
    /// Corrections withheld because their preview lowered roi Dice.
    #[serde(default)]
    pub withheld: Vec<Withheld>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub rois: Vec<RoiRecord>,
    pub train_pixels: usize,
    pub train_loss: f64,
    pub test: DiceSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopReport {
    pub config: LoopConfig,
    pub source_loss: f64,
    pub source_only: DiceSummary,
    pub rounds: Vec<RoundRecord>,
    pub final_test: DiceSummary,
    pub total_words: u64,
    pub total_vertices: u64,
}

impl LoopReport {
    pub fn improvement_points(&self) -> f64 {
        (self.final_test.mean_foreground - self.source_only.mean_foreground) * 100.0
    }
}

fn labeled_pixels(item: &DataItem) -> impl Iterator<Item = (Feature, u8)> + '_ {
    pixel_features(&item.image).into_iter().zip(item.labels.labels().iter().copied())
}

/// Fits a fresh classifier to every source item.
pub fn train_source(source: &Dataset, params: &TrainParams) -> Result<PixelClassifier, AdaError> {
    let items: Vec<&DataItem> = source.in_domain(Domain::Source).collect();
    let first = items.first().ok_or(AdaError::MissingDomain(Domain::Source))?;
    let samples: Vec<(Feature, u8)> = items.iter().flat_map(|i| labeled_pixels(i)).collect();
    let mut model = PixelClassifier::new(first.labels.class_count());
    model.train(&samples, params)?;
    Ok(model)
}

/// Pooled per-class Dice of the argmax prediction over `items`.
pub fn evaluate<'a>(model: &PixelClassifier, items: impl IntoIterator<Item = &'a DataItem>) -> DiceSummary {
    let mut acc = DiceAccumulator::new(model.class_count());
    for item in items {
        acc.add(&model.predict(&item.image).argmax(), &item.labels);
    }
    DiceSummary {
        per_class: acc.per_class(),
        mean_foreground: acc.mean_foreground(),
    }
}

fn polygon_vertices(gt: &LabelMask, roi: &Roi, class_id: u8, eps: f64) -> u64 {
    trace_contours(&gt.class_mask(class_id), roi)
        .iter()
        .map(|c| simplify_contour(c, eps).len() as u64)
        .sum()
}

/// Corrects one roi of `labels` for every foreground class, in class order.
fn correct_roi(
    item: &DataItem,
    labels: &mut LabelMask,
    pick: &ScoredRoi,
    round: usize,
    cfg: &LoopConfig,
) -> Result<Vec<RoiRecord>, AdaError> {
    let roi = pick.roi;
    let mut records = Vec::new();
    for class_id in 1..labels.class_count() as u8 {
        let pred = labels.class_mask(class_id);
        let gt = item.labels.class_mask(class_id);
        let before = dice_in(&pred, &gt, &roi).expect("same dims");
        let mut record = RoiRecord {
            image_id: item.id.clone(),
            round,
            roi,
            score: pick.score,
            class_id,
            command: None,
            program: None,
            dice_before: before,
            dice_after: before,
            words: 0,
            polygon_vertices: polygon_vertices(&item.labels, &roi, class_id, cfg.polygon_epsilon),
            warnings: Vec::new(),
            withheld: Vec::new(),
        };
        let feedback = FeedbackConfig {
            seed: cfg.feedback.seed ^ ((round as u64) << 32) ^ class_id as u64,
            ..cfg.feedback
        };
        let mut items = analyze_roi(&pred, &gt, &roi, &feedback);
        if feedback.preview {
            let (kept, withheld) = review_feedback(items, &item.image, &pred, &gt, &roi, cfg.exec)?;
            items = kept;
            record.withheld = withheld;
        }
        if let Ok(text) = render_feedback(&items, &feedback) {
            let program = parse_command(&text)?;
            let mut env = ExecEnv::new(item.image.clone(), pred.clone(), roi, cfg.exec)?;
            let (refined, log) = execute(&program, &mut env)?;
            record.dice_after = dice_in(&refined, &gt, &roi).expect("same dims");
            record.words = text.split_whitespace().count() as u64;
            record.warnings = log.warnings().map(str::to_string).collect();
            record.program = Some(render_program(&program));
            record.command = Some(text);
            // Only this class changes: its pixels are rewritten, others stay.
            for p in roi.pixels() {
                let cur = labels.at(p);
                if refined.at(p) {
                    labels.set_at(p, class_id);
                } else if cur == class_id {
                    labels.set_at(p, 0);
                }
            }
        }
        records.push(record);
    }
    Ok(records)
}

struct TargetState<'a> {
    item: &'a DataItem,
    features: Vec<Feature>,
    /// Corrected labels inside every roi annotated so far.
    annotated: Vec<(Roi, LabelMask)>,
}

/// Runs the full loop. Identical inputs give an identical report.
pub fn run_ada(source: &Dataset, target: &Dataset, cfg: &LoopConfig) -> Result<LoopReport, AdaError> {
    cfg.plan.validate().map_err(AdaError::Budget)?;
    let mut model = train_source(source, &cfg.source_train)?;
    let source_loss = model.final_loss().unwrap_or(f64::NAN);
    let train: Vec<&DataItem> = target.in_domain(Domain::TargetTrain).collect();
    let test: Vec<&DataItem> = target.in_domain(Domain::TargetTest).collect();
    if train.is_empty() {
        return Err(AdaError::MissingDomain(Domain::TargetTrain));
    }
    if test.is_empty() {
        return Err(AdaError::MissingDomain(Domain::TargetTest));
    }
    if let Some(t) = train.iter().chain(&test).find(|t| t.labels.class_count() != model.class_count()) {
        return Err(AdaError::ClassMismatch {
            source_classes: model.class_count(),
            target: t.labels.class_count(),
        });
    }
    let source_only = evaluate(&model, test.iter().copied());
    let mut replay_pool: Vec<(Feature, u8)> = if cfg.source_replay > 0 {
        source.in_domain(Domain::Source).flat_map(labeled_pixels).collect()
    } else {
        Vec::new()
    };
    replay_pool.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    replay_pool.truncate(cfg.source_replay);

    let mut states: Vec<TargetState> = train
        .iter()
        .map(|&item| TargetState {
            item,
            features: pixel_features(&item.image),
            annotated: Vec::new(),
        })
        .collect();
    let mut rounds = Vec::with_capacity(cfg.plan.rounds);
    for round in 1..=cfg.plan.rounds {
        let mut roi_records = Vec::new();
        let mut pseudo: Vec<(Feature, u8)> = Vec::new();
        for (idx, st) in states.iter_mut().enumerate() {
            let probs = model.predict(&st.item.image);
            let p_init = probs.argmax();
            let excluded: Vec<Roi> = st.annotated.iter().map(|(r, _)| *r).collect();
            let picks = match cfg.acquisition {
                AcquisitionKind::Entropy => select_rois(&EntropyAcquisition.score(&probs), &cfg.plan, &excluded),
                AcquisitionKind::Random => random_rois(
                    p_init.width(),
                    p_init.height(),
                    &cfg.plan,
                    &excluded,
                    cfg.seed ^ ((round as u64) << 40) ^ idx as u64,
                ),
            };
            let mut y_al = p_init.clone();
            for pick in &picks {
                roi_records.extend(correct_roi(st.item, &mut y_al, pick, round, cfg)?);
                st.annotated.push((pick.roi, y_al.clone()));
            }
            if cfg.self_train {
                let w = y_al.width();
                for (i, (f, &l)) in st.features.iter().zip(y_al.labels()).enumerate() {
                    let p = crate::grid::Pixel::new(i % w, i / w);
                    if !st.annotated.iter().any(|(r, _)| r.contains(p)) {
                        pseudo.push((*f, l));
                    }
                }
            }
        }
        let mut samples: Vec<(Feature, u8)> = Vec::new();
        for st in &states {
            let w = st.item.image.width();
            for (roi, labels) in &st.annotated {
                samples.extend(roi.pixels().map(|p| (st.features[p.y * w + p.x], labels.at(p))));
            }
        }
        let train_pixels = samples.len();
        samples.extend_from_slice(&replay_pool);
        samples.extend(pseudo);
        let params = TrainParams {
            seed: cfg.finetune.seed.wrapping_add(round as u64),
            ..cfg.finetune
        };
        let train_loss = model.train(&samples, &params)?;
        rounds.push(RoundRecord {
            round,
            rois: roi_records,
            train_pixels,
            train_loss,
            test: evaluate(&model, test.iter().copied()),
        });
    }
    let final_test = rounds.last().map(|r| r.test.clone()).unwrap_or_else(|| source_only.clone());
    let all = rounds.iter().flat_map(|r| &r.rois);
    let total_words = all.clone().map(|r| r.words).sum();
    let total_vertices = all.map(|r| r.polygon_vertices).sum();
    Ok(LoopReport {
        config: *cfg,
        source_loss,
        source_only,
        rounds,
        final_test,
        total_words,
        total_vertices,
    })
}

/// Source and target sets for the desk benchmark: `n_source` source phantoms,
/// then `n_train` + `n_test` shifted target phantoms.
pub fn desk_datasets(n_source: usize, n_train: usize, n_test: usize, seed: u64) -> (Dataset, Dataset) {
    use crate::synth::{generate_phantoms, DomainShift, PhantomSpec};
    let source = generate_phantoms(&PhantomSpec {
        count: n_source,
        seed,
        ..PhantomSpec::default()
    })
    .expect("default spec is valid");
    let mut target = generate_phantoms(&PhantomSpec {
        count: n_train + n_test,
        shift: DomainShift::intensity(),
        domain: Domain::TargetTrain,
        seed: seed.wrapping_add(1),
        ..PhantomSpec::default()
    })
    .expect("default spec is valid");
    for item in target.items.iter_mut().skip(n_train) {
        item.domain = Domain::TargetTest;
    }
    (source, target)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(cfg: &LoopConfig) -> LoopReport {
        let (s, t) = desk_datasets(4, 4, 2, 11);
        run_ada(&s, &t, cfg).unwrap()
    }

    #[test]
    fn report_is_reproducible_and_sized() {
        let cfg = LoopConfig::default();
        let a = small(&cfg);
        assert_eq!(a.rounds.len(), 3);
        let b = small(&cfg);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn rois_never_overlap_within_an_image() {
        let r = small(&LoopConfig::default());
        let all: Vec<&RoiRecord> = r.rounds.iter().flat_map(|x| &x.rois).collect();
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                if a.image_id == b.image_id && a.class_id == b.class_id {
                    assert!(!a.roi.overlaps(&b.roi), "{a:?} {b:?}");
                }
            }
        }
    }

    #[test]
    fn corrections_stay_inside_the_roi() {
        let (s, t) = desk_datasets(3, 1, 1, 5);
        let model = train_source(&s, &TrainParams::default()).unwrap();
        let item = &t.items[0];
        let p_init = model.predict(&item.image).argmax();
        let mut y_al = p_init.clone();
        let pick = ScoredRoi {
            roi: Roi::new(40, 40, 21, 21),
            score: 0.0,
        };
        let recs = correct_roi(item, &mut y_al, &pick, 1, &LoopConfig::default()).unwrap();
        assert_eq!(recs.len(), 1);
        for y in 0..128 {
            for x in 0..128 {
                if !pick.roi.contains(crate::grid::Pixel::new(x, y)) {
                    assert_eq!(y_al.get(x, y), p_init.get(x, y));
                }
            }
        }
        assert!(recs[0].dice_after >= recs[0].dice_before);
    }

    #[test]
    fn missing_domains_are_errors() {
        let (s, t) = desk_datasets(2, 2, 1, 3);
        assert!(matches!(
            run_ada(&t, &t, &LoopConfig::default()),
            Err(AdaError::MissingDomain(Domain::Source))
        ));
        assert!(matches!(
            run_ada(&s, &s, &LoopConfig::default()),
            Err(AdaError::MissingDomain(Domain::TargetTrain))
        ));
    }
}
