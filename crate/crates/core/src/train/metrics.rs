//! Classification metrics over integer class labels: confusion counts,
//! per-class precision/recall/F1, and macro/micro aggregates.
//!
//! Per-class F1 is defined as 0 when a class never appears in either labels
//! or predictions (no support and no hits), so macro-F1 stays a mean over
//! the full class set rather than over whichever classes happened to occur.

use serde::{Deserialize, Serialize};

/// Row-major confusion counts: `counts[true][pred]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n_classes: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> ConfusionMatrix {
        ConfusionMatrix {
            n_classes,
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    pub fn record(&mut self, truth: usize, pred: usize) {
        self.counts[truth][pred] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn row_sum(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    fn col_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|row| row[c]).sum()
    }

    /// (precision, recall, f1) for one class; all 0 when undefined.
    pub fn class_prf(&self, c: usize) -> (f64, f64, f64) {
        let tp = self.counts[c][c] as f64;
        let pred = self.col_sum(c) as f64;
        let truth = self.row_sum(c) as f64;
        let precision = if pred > 0.0 { tp / pred } else { 0.0 };
        let recall = if truth > 0.0 { tp / truth } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        (precision, recall, f1)
    }

    pub fn per_class_f1(&self) -> Vec<f64> {
        (0..self.n_classes).map(|c| self.class_prf(c).2).collect()
    }

    /// Unweighted mean of per-class F1 over all classes.
    pub fn macro_f1(&self) -> f64 {
        if self.n_classes == 0 {
            return 0.0;
        }
        self.per_class_f1().iter().sum::<f64>() / self.n_classes as f64
    }

    /// Overall accuracy; for single-label multiclass this equals micro-F1.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let hits: u64 = (0..self.n_classes).map(|c| self.counts[c][c]).sum();
        hits as f64 / total as f64
    }
}

/// Build a confusion matrix from parallel label/prediction slices, skipping
/// pairs whose weight is not positive.
pub fn confusion(
    n_classes: usize,
    truth: &[usize],
    pred: &[usize],
    weights: Option<&[f64]>,
) -> ConfusionMatrix {
    assert_eq!(truth.len(), pred.len());
    let mut cm = ConfusionMatrix::new(n_classes);
    for i in 0..truth.len() {
        if let Some(w) = weights {
            if w[i] <= 0.0 {
                continue;
            }
        }
        cm.record(truth[i], pred[i]);
    }
    cm
}

/// Summary of one evaluation pass over a split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    pub action_macro_f1: f64,
    pub action_per_class_f1: Vec<f64>,
    pub action_accuracy: f64,
    pub scenario_macro_f1: f64,
    pub scenario_accuracy: f64,
    pub n_windows: u64,
    pub n_sequences: u64,
}

impl Metrics {
    pub fn from_confusions(action: &ConfusionMatrix, scenario: &ConfusionMatrix) -> Metrics {
        Metrics {
            action_macro_f1: action.macro_f1(),
            action_per_class_f1: action.per_class_f1(),
            action_accuracy: action.accuracy(),
            scenario_macro_f1: scenario.macro_f1(),
            scenario_accuracy: scenario.accuracy(),
            n_windows: action.total(),
            n_sequences: scenario.total(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn perfect_predictions_score_one() {
        let truth = [0, 1, 2, 3, 4, 0, 1];
        let cm = confusion(5, &truth, &truth, None);
        assert_eq!(cm.macro_f1(), 1.0);
        assert_eq!(cm.accuracy(), 1.0);
        for c in 0..5 {
            assert_eq!(cm.class_prf(c), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn absent_class_contributes_zero() {
        // Class 2 never appears in truth or predictions.
        let truth = [0, 0, 1, 1];
        let pred = [0, 0, 1, 1];
        let cm = confusion(3, &truth, &pred, None);
        assert_eq!(cm.per_class_f1(), vec![1.0, 1.0, 0.0]);
        assert!((cm.macro_f1() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_predictor_on_balanced_two_class() {
        // Predict class 0 always on a 50/50 two-class problem:
        // class 0 gets P=0.5, R=1.0 → F1=2/3; class 1 gets 0. Macro = 1/3.
        let truth = [0, 1, 0, 1, 0, 1];
        let pred = [0; 6];
        let cm = confusion(2, &truth, &pred, None);
        assert!((cm.macro_f1() - 1.0 / 3.0).abs() < 1e-12);
        assert!((cm.accuracy() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_pairs_are_excluded() {
        let truth = [0, 1, 1];
        let pred = [0, 0, 1];
        let w = [1.0, 0.0, 0.8];
        let cm = confusion(2, &truth, &pred, Some(&w));
        assert_eq!(cm.total(), 2);
        assert_eq!(cm.macro_f1(), 1.0);
    }

    #[test]
    fn f1_matches_counting_reference_on_random_predictions() {
        // Independent recount: compute per-class F1 straight from tp/fp/fn
        // tallies and compare against the confusion-matrix path.
        let mut rng = crate::rng::stream(7, "metrics/fuzz");
        for _ in 0..20 {
            let n = 1000;
            let k = rng.gen_range(2..=6);
            let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
            let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
            let cm = confusion(k, &truth, &pred, None);
            for c in 0..k {
                let tp = truth
                    .iter()
                    .zip(&pred)
                    .filter(|(&t, &p)| t == c && p == c)
                    .count() as f64;
                let fp = truth
                    .iter()
                    .zip(&pred)
                    .filter(|(&t, &p)| t != c && p == c)
                    .count() as f64;
                let fn_ = truth
                    .iter()
                    .zip(&pred)
                    .filter(|(&t, &p)| t == c && p != c)
                    .count() as f64;
                let expect = if 2.0 * tp + fp + fn_ > 0.0 {
                    2.0 * tp / (2.0 * tp + fp + fn_)
                } else {
                    0.0
                };
                assert!((cm.class_prf(c).2 - expect).abs() < 1e-12);
            }
        }
    }

    proptest! {
        /// Relabeling classes by any permutation must leave macro-F1
        /// unchanged: the mean over classes doesn't care about identity.
        #[test]
        fn macro_f1_invariant_under_relabeling(
            pairs in prop::collection::vec((0usize..5, 0usize..5), 1..200),
            perm_seed in any::<u64>(),
        ) {
            let truth: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let base = confusion(5, &truth, &pred, None).macro_f1();

            let mut perm: Vec<usize> = (0..5).collect();
            // Fisher–Yates with a seeded stream.
            let mut rng = crate::rng::stream(perm_seed, "metrics/perm");
            for i in (1..5).rev() {
                let j = rng.gen_range(0..=i);
                perm.swap(i, j);
            }
            let truth2: Vec<usize> = truth.iter().map(|&t| perm[t]).collect();
            let pred2: Vec<usize> = pred.iter().map(|&p| perm[p]).collect();
            let relabeled = confusion(5, &truth2, &pred2, None).macro_f1();
            prop_assert!((base - relabeled).abs() < 1e-12);
        }
    }
}
