//! Budgeted roi selection from per-pixel informativeness scores.

use crate::grid::{ProbMap, Roi};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Annotation budget: `budget_percent` of each image's area, spread evenly over `rounds`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetPlan {
    pub budget_percent: f64,
    pub rounds: usize,
    pub roi_w: usize,
    pub roi_h: usize,
}

impl Default for BudgetPlan {
    fn default() -> Self {
        Self {
            budget_percent: 5.0,
            rounds: 3,
            roi_w: 21,
            roi_h: 21,
        }
    }
}

impl BudgetPlan {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.budget_percent > 0.0 && self.budget_percent <= 100.0) {
            return Err(format!("budget must be in (0, 100], got {}", self.budget_percent));
        }
        if self.rounds == 0 {
            return Err("rounds must be at least 1".into());
        }
        if self.roi_w == 0 || self.roi_h == 0 {
            return Err("roi size must be positive".into());
        }
        Ok(())
    }

    /// Rois per image per round, never below one.
    pub fn rois_per_round(&self, width: usize, height: usize) -> usize {
        let area = self.budget_percent / 100.0 / self.rounds as f64 * (width * height) as f64;
        ((area / (self.roi_w * self.roi_h) as f64).floor() as usize).max(1)
    }
}

/// A scalar per pixel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl ScoreMap {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Mean score over `roi`, summed in raster order.
    pub fn window_mean(&self, roi: &Roi) -> f64 {
        let mut sum = 0.0;
        for y in roi.y..roi.y + roi.h {
            for x in roi.x..roi.x + roi.w {
                sum += self.values[y * self.width + x];
            }
        }
        sum / roi.area() as f64
    }
}

/// Shannon entropy per pixel, with `0 ln 0 = 0`.
pub fn entropy_map(p: &ProbMap) -> ScoreMap {
    // Rounding can leave a uniform pixel a few ulps above ln C.
    let max = (p.class_count() as f64).ln();
    let values = p
        .probs()
        .chunks(p.class_count())
        .map(|px| -px.iter().filter(|&&q| q > 0.0).map(|&q| q * q.ln()).sum::<f64>())
        .map(|h| h.clamp(0.0, max))
        .collect();
    ScoreMap {
        width: p.width(),
        height: p.height(),
        values,
    }
}

/// Turns model output into an informativeness score per pixel.
pub trait Acquisition {
    fn score(&self, probs: &ProbMap) -> ScoreMap;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EntropyAcquisition;

impl Acquisition for EntropyAcquisition {
    fn score(&self, probs: &ProbMap) -> ScoreMap {
        entropy_map(probs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredRoi {
    pub roi: Roi,
    pub score: f64,
}

fn windows(width: usize, height: usize, plan: &BudgetPlan) -> Vec<Roi> {
    if plan.roi_w > width || plan.roi_h > height {
        return Vec::new();
    }
    let mut out = Vec::with_capacity((width - plan.roi_w + 1) * (height - plan.roi_h + 1));
    for y in 0..=height - plan.roi_h {
        for x in 0..=width - plan.roi_w {
            out.push(Roi::new(x, y, plan.roi_w, plan.roi_h));
        }
    }
    out
}

fn greedy(candidates: impl IntoIterator<Item = ScoredRoi>, excluded: &[Roi], limit: usize) -> Vec<ScoredRoi> {
    let mut chosen: Vec<ScoredRoi> = Vec::new();
    for c in candidates {
        if chosen.len() == limit {
            break;
        }
        if excluded.iter().chain(chosen.iter().map(|s| &s.roi)).all(|r| !r.overlaps(&c.roi)) {
            chosen.push(c);
        }
    }
    chosen
}

/// Greedy max-mean-score windows, disjoint from each other and from `excluded`.
/// Ties go to the smaller `(y, x)`. May return fewer than the budget when the
/// image runs out of free space.
pub fn select_rois(score: &ScoreMap, plan: &BudgetPlan, excluded: &[Roi]) -> Vec<ScoredRoi> {
    let mut cands: Vec<ScoredRoi> = windows(score.width, score.height, plan)
        .into_iter()
        .map(|roi| ScoredRoi {
            score: score.window_mean(&roi),
            roi,
        })
        .collect();
    // Stable sort keeps raster order among equal scores.
    cands.sort_by(|a, b| b.score.total_cmp(&a.score));
    greedy(cands, excluded, plan.rois_per_round(score.width, score.height))
}

/// Uniformly random disjoint windows from a seeded generator. Scores are reported as 0.
pub fn random_rois(width: usize, height: usize, plan: &BudgetPlan, excluded: &[Roi], seed: u64) -> Vec<ScoredRoi> {
    let mut cands = windows(width, height, plan);
    cands.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    greedy(
        cands.into_iter().map(|roi| ScoredRoi { roi, score: 0.0 }),
        excluded,
        plan.rois_per_round(width, height),
    )
}
