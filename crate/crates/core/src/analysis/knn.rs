//! Group-aware k-NN baseline over per-window features.
//!
//! Cross-validates a k-nearest-neighbor classifier with folds split by
//! *group* (video id), so windows from one recording never appear on both
//! sides of a fold. The resulting macro-F1 estimates how far single-window
//! features alone can go; a sequence model should clear it.

use crate::error::CoreError;
use crate::rng::stream;
use crate::taxonomy::ActionClass;
use crate::train::metrics::ConfusionMatrix;
use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Cross-validated k-NN scores at three label granularities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnCeiling {
    /// Macro-F1 over the full five-class taxonomy.
    pub macro_f1_5: f64,
    /// Macro-F1 after folding Search into Stationary (four classes).
    pub macro_f1_4: f64,
    /// Macro-F1 after additionally folding ObjectTransfer into
    /// TaskOperation (three classes).
    pub macro_f1_3: f64,
    /// Which groups each fold held out, for leakage audits.
    pub fold_test_groups: Vec<Vec<String>>,
}

/// Deal sorted-then-shuffled groups into `folds` round-robin buckets.
fn group_folds(groups: &[String], folds: usize, seed: u64) -> Result<Vec<Vec<String>>, CoreError> {
    let mut unique: Vec<String> = {
        let set: std::collections::BTreeSet<&String> = groups.iter().collect();
        set.into_iter().cloned().collect()
    };
    if unique.len() < folds {
        return Err(CoreError::InvalidConfig(format!(
            "{} groups cannot fill {folds} folds",
            unique.len()
        )));
    }
    let mut rng = stream(seed, "knn/folds");
    unique.shuffle(&mut rng);
    let mut out = vec![Vec::new(); folds];
    for (i, g) in unique.into_iter().enumerate() {
        out[i % folds].push(g);
    }
    for fold in &mut out {
        fold.sort();
    }
    Ok(out)
}

/// Majority vote over the k nearest training rows; ties go to the class of
/// the nearest neighbor among the tied classes.
fn knn_predict(
    train_x: &[Vec<f64>],
    train_y: &[usize],
    query: &[f64],
    k: usize,
    n_classes: usize,
) -> usize {
    let mut scored: Vec<(f64, usize)> = train_x
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let d2: f64 = row.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
            (d2, i)
        })
        .collect();
    let k = k.min(scored.len());
    scored.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap());
    let mut neighbors = scored[..k].to_vec();
    neighbors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut votes = vec![0usize; n_classes];
    for &(_, i) in &neighbors {
        votes[train_y[i]] += 1;
    }
    let top = *votes.iter().max().unwrap();
    // First neighbor whose class is in the tied set wins.
    neighbors
        .iter()
        .map(|&(_, i)| train_y[i])
        .find(|&c| votes[c] == top)
        .unwrap()
}

/// One full cross-validation at a fixed label granularity. Labels are
/// compacted to dense indices so macro-F1 averages only over classes that
/// exist after merging.
fn cross_validate(
    features: ArrayView2<f64>,
    labels: &[usize],
    groups: &[String],
    folds: &[Vec<String>],
    k: usize,
) -> f64 {
    let present: Vec<usize> = {
        let set: std::collections::BTreeSet<usize> = labels.iter().copied().collect();
        set.into_iter().collect()
    };
    let dense: BTreeMap<usize, usize> =
        present.iter().enumerate().map(|(d, &c)| (c, d)).collect();
    let n_classes = present.len();
    let d = features.ncols();
    let mut confusion = ConfusionMatrix::new(n_classes);
    for fold in folds {
        let in_test: Vec<bool> = groups
            .iter()
            .map(|g| fold.binary_search(g).is_ok())
            .collect();
        // Standardize with training-fold statistics only.
        let mut mean = vec![0.0; d];
        let mut var = vec![0.0; d];
        let mut n_train = 0usize;
        for (i, row) in features.rows().into_iter().enumerate() {
            if !in_test[i] {
                n_train += 1;
                for (j, v) in row.iter().enumerate() {
                    mean[j] += v;
                }
            }
        }
        for m in &mut mean {
            *m /= n_train as f64;
        }
        for (i, row) in features.rows().into_iter().enumerate() {
            if !in_test[i] {
                for (j, v) in row.iter().enumerate() {
                    var[j] += (v - mean[j]) * (v - mean[j]);
                }
            }
        }
        let scale: Vec<f64> = var
            .iter()
            .map(|v| (v / n_train as f64).sqrt().max(1e-12))
            .collect();
        let standardize = |row: ndarray::ArrayView1<f64>| -> Vec<f64> {
            row.iter()
                .enumerate()
                .map(|(j, v)| (v - mean[j]) / scale[j])
                .collect()
        };
        let mut train_x = Vec::with_capacity(n_train);
        let mut train_y = Vec::with_capacity(n_train);
        for (i, row) in features.rows().into_iter().enumerate() {
            if !in_test[i] {
                train_x.push(standardize(row));
                train_y.push(dense[&labels[i]]);
            }
        }
        for (i, row) in features.rows().into_iter().enumerate() {
            if in_test[i] {
                let pred = knn_predict(&train_x, &train_y, &standardize(row), k, n_classes);
                confusion.record(dense[&labels[i]], pred);
            }
        }
    }
    confusion.macro_f1()
}

/// Group-k-fold k-NN macro-F1 at 5-, 4-, and 3-class granularity.
///
/// `features` is one row per window, `labels` and `groups` parallel to it.
pub fn knn_ceiling(
    features: ArrayView2<f64>,
    labels: &[ActionClass],
    groups: &[String],
    k: usize,
    folds: usize,
    seed: u64,
) -> Result<KnnCeiling, CoreError> {
    let n = features.nrows();
    if labels.len() != n || groups.len() != n {
        return Err(CoreError::shape(
            "knn_ceiling",
            format!("{n} labels and groups"),
            format!("{} labels, {} groups", labels.len(), groups.len()),
        ));
    }
    if n == 0 || k == 0 || folds < 2 {
        return Err(CoreError::InvalidConfig(
            "knn_ceiling needs data, k ≥ 1, folds ≥ 2".into(),
        ));
    }
    let fold_test_groups = group_folds(groups, folds, seed)?;
    let idx5: Vec<usize> = labels.iter().map(|a| a.index()).collect();
    let idx4: Vec<usize> = labels.iter().map(|a| a.merge4().index()).collect();
    let idx3: Vec<usize> = labels.iter().map(|a| a.merge3().index()).collect();
    Ok(KnnCeiling {
        macro_f1_5: cross_validate(features, &idx5, groups, &fold_test_groups, k),
        macro_f1_4: cross_validate(features, &idx4, groups, &fold_test_groups, k),
        macro_f1_3: cross_validate(features, &idx3, groups, &fold_test_groups, k),
        fold_test_groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::augment::standard_normal;
    use ndarray::Array2;

    /// Well-separated blobs, one action per blob, several groups per blob.
    fn blob_problem(seed: u64) -> (Array2<f64>, Vec<ActionClass>, Vec<String>) {
        let mut rng = stream(seed, "knn-test-blobs");
        let per_class = 60;
        let classes = [
            ActionClass::ObjectTransfer,
            ActionClass::TaskOperation,
            ActionClass::Locomotion,
        ];
        let n = per_class * classes.len();
        let mut x = Array2::zeros((n, 4));
        let mut y = Vec::with_capacity(n);
        let mut g = Vec::with_capacity(n);
        for (c, &class) in classes.iter().enumerate() {
            for i in 0..per_class {
                let row = c * per_class + i;
                for j in 0..4 {
                    x[[row, j]] = 6.0 * c as f64 + 0.5 * standard_normal(&mut rng);
                }
                y.push(class);
                g.push(format!("g{:02}", c * 10 + i % 10));
            }
        }
        (x, y, g)
    }

    #[test]
    fn separable_blobs_score_high_at_every_granularity() {
        let (x, y, g) = blob_problem(1);
        let r = knn_ceiling(x.view(), &y, &g, 5, 5, 9).unwrap();
        assert!(r.macro_f1_5 > 0.95, "five-class F1 {}", r.macro_f1_5);
        assert!(r.macro_f1_4 > 0.95);
        assert!(r.macro_f1_3 > 0.95);
    }

    #[test]
    fn permuted_labels_score_near_chance() {
        let (x, y, g) = blob_problem(2);
        let mut rng = stream(3, "knn-test-permute");
        let mut shuffled = y.clone();
        shuffled.shuffle(&mut rng);
        let r = knn_ceiling(x.view(), &shuffled, &g, 5, 5, 9).unwrap();
        // Three balanced classes → chance macro-F1 ≈ 1/3 at full granularity.
        // (The 3-class merge folds ObjectTransfer into TaskOperation, so its
        // chance level is different; don't test it here.)
        assert!(
            (r.macro_f1_5 - 1.0 / 3.0).abs() < 0.1,
            "permuted F1 {}",
            r.macro_f1_5
        );
    }

    #[test]
    fn folds_partition_the_groups() {
        let (x, y, g) = blob_problem(4);
        let r = knn_ceiling(x.view(), &y, &g, 5, 5, 11).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for fold in &r.fold_test_groups {
            for group in fold {
                assert!(seen.insert(group.clone()), "group {group} in two folds");
            }
        }
        let unique: std::collections::BTreeSet<_> = g.iter().cloned().collect();
        assert_eq!(seen, unique);
    }

    #[test]
    fn affine_feature_rescaling_does_not_change_scores() {
        let (x, y, g) = blob_problem(5);
        let base = knn_ceiling(x.view(), &y, &g, 5, 5, 13).unwrap();
        let mut scaled = x.clone();
        for (j, (factor, shift)) in [(100.0, -3.0), (1e-3, 7.0), (42.0, 0.0), (0.5, 1e4)]
            .into_iter()
            .enumerate()
        {
            for i in 0..scaled.nrows() {
                scaled[[i, j]] = x[[i, j]] * factor + shift;
            }
        }
        let r = knn_ceiling(scaled.view(), &y, &g, 5, 5, 13).unwrap();
        assert!((r.macro_f1_5 - base.macro_f1_5).abs() < 1e-9);
        assert!((r.macro_f1_3 - base.macro_f1_3).abs() < 1e-9);
    }

    #[test]
    fn fold_assignment_is_seed_deterministic() {
        let (x, y, g) = blob_problem(6);
        let a = knn_ceiling(x.view(), &y, &g, 3, 4, 21).unwrap();
        let b = knn_ceiling(x.view(), &y, &g, 3, 4, 21).unwrap();
        assert_eq!(a, b);
        let c = knn_ceiling(x.view(), &y, &g, 3, 4, 22).unwrap();
        assert_ne!(a.fold_test_groups, c.fold_test_groups);
    }

    #[test]
    fn too_few_groups_is_a_config_error() {
        let x = Array2::zeros((4, 2));
        let y = vec![ActionClass::Stationary; 4];
        let g = vec!["only".to_string(); 4];
        assert!(knn_ceiling(x.view(), &y, &g, 1, 2, 0).is_err());
    }

    #[test]
    fn nearest_neighbor_breaks_vote_ties() {
        // k=2 with one vote each: the closer neighbor's class must win.
        let train_x = vec![vec![0.0], vec![1.0]];
        let train_y = vec![0, 1];
        assert_eq!(knn_predict(&train_x, &train_y, &[0.1], 2, 2), 0);
        assert_eq!(knn_predict(&train_x, &train_y, &[0.9], 2, 2), 1);
    }
}
