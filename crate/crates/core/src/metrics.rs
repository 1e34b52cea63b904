//! Overlap metrics.

use crate::grid::{BinaryMask, GridError, LabelMask, Roi};

/// Dice coefficient `2|a∩b| / (|a|+|b|)`; two empty masks score 1.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64, GridError> {
    a.same_dims(b)?;
    let (mut inter, mut sa, mut sb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += (x && y) as usize;
        sa += x as usize;
        sb += y as usize;
    }
    Ok(dice_from_counts(inter, sa, sb))
}

/// Dice restricted to the pixels of `roi`.
pub fn dice_in(a: &BinaryMask, b: &BinaryMask, roi: &Roi) -> Result<f64, GridError> {
    a.same_dims(b)?;
    let (mut inter, mut sa, mut sb) = (0usize, 0usize, 0usize);
    for p in roi.pixels() {
        let (x, y) = (a.at(p), b.at(p));
        inter += (x && y) as usize;
        sa += x as usize;
        sb += y as usize;
    }
    Ok(dice_from_counts(inter, sa, sb))
}

pub fn dice_from_counts(intersection: usize, size_a: usize, size_b: usize) -> f64 {
    if size_a + size_b == 0 {
        1.0
    } else {
        2.0 * intersection as f64 / (size_a + size_b) as f64
    }
}

/// Running per-class overlap counts, pooled over any number of label maps.
#[derive(Debug, Clone, Default)]
pub struct DiceAccumulator {
    intersection: Vec<usize>,
    predicted: Vec<usize>,
    truth: Vec<usize>,
}

impl DiceAccumulator {
    pub fn new(class_count: usize) -> Self {
        Self {
            intersection: vec![0; class_count],
            predicted: vec![0; class_count],
            truth: vec![0; class_count],
        }
    }

    pub fn add(&mut self, pred: &LabelMask, gt: &LabelMask) {
        for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
            self.predicted[p as usize] += 1;
            self.truth[g as usize] += 1;
            if p == g {
                self.intersection[p as usize] += 1;
            }
        }
    }

    /// Pooled Dice for every class, background included.
    pub fn per_class(&self) -> Vec<f64> {
        (0..self.intersection.len())
            .map(|c| dice_from_counts(self.intersection[c], self.predicted[c], self.truth[c]))
            .collect()
    }

    /// Mean pooled Dice over foreground classes (label ≥ 1).
    pub fn mean_foreground(&self) -> f64 {
        let per = self.per_class();
        let fg = &per[1..];
        fg.iter().sum::<f64>() / fg.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn block(w: usize, h: usize, x0: usize, y0: usize, bw: usize, bh: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| x >= x0 && x < x0 + bw && y >= y0 && y < y0 + bh)
    }

    #[test]
    fn identical_nonempty_masks_score_one() {
        let a = block(6, 6, 1, 1, 3, 2);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn empty_against_nonempty_scores_zero() {
        let a = block(6, 6, 1, 1, 3, 2);
        assert_eq!(dice(&a, &BinaryMask::new(6, 6)).unwrap(), 0.0);
    }

    #[test]
    fn both_empty_scores_one() {
        assert_eq!(dice(&BinaryMask::new(3, 3), &BinaryMask::new(3, 3)).unwrap(), 1.0);
    }

    #[test]
    fn shifted_block_half_overlap() {
        // 2x2 block vs the same block one pixel right: overlap 2, sizes 4 and 4.
        let a = block(5, 5, 1, 1, 2, 2);
        let b = block(5, 5, 2, 1, 2, 2);
        assert_eq!(dice(&a, &b).unwrap(), 0.5);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(dice(&BinaryMask::new(3, 3), &BinaryMask::new(3, 4)).is_err());
    }

    #[test]
    fn pooled_dice_per_class() {
        let gt = LabelMask::new(4, 1, 2, vec![0, 1, 1, 0]).unwrap();
        let pred = LabelMask::new(4, 1, 2, vec![0, 1, 0, 0]).unwrap();
        let mut acc = DiceAccumulator::new(2);
        acc.add(&pred, &gt);
        let per = acc.per_class();
        assert!((per[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((per[0] - 0.8).abs() < 1e-12);
        assert_eq!(acc.mean_foreground(), per[1]);
    }

    fn mask_strategy() -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
        (prop::collection::vec(any::<bool>(), 64), prop::collection::vec(any::<bool>(), 64)).prop_map(
            |(a, b)| {
                (
                    BinaryMask::from_bits(8, 8, a).unwrap(),
                    BinaryMask::from_bits(8, 8, b).unwrap(),
                )
            },
        )
    }

    proptest! {
        #[test]
        fn dice_is_symmetric_and_bounded((a, b) in mask_strategy()) {
            let ab = dice(&a, &b).unwrap();
            let ba = dice(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
            if !a.is_empty() {
                prop_assert_eq!(dice(&a, &a).unwrap(), 1.0);
            }
        }
    }
}
