//! Empirical action-transition statistics.
//!
//! Counts transitions between consecutive labeled windows within each video
//! and normalizes rows into an empirical first-order transition matrix. An
//! unlabeled (or zero-weight) window breaks adjacency: the pair straddling
//! it is not counted.

use crate::error::CoreError;
use crate::signal::Window;
use crate::taxonomy::{ActionClass, Scenario};
use serde::{Deserialize, Serialize};

/// Row-normalized transition estimate with its raw counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    /// Human-readable scope of the estimate ("all" or a scenario name).
    pub scope: String,
    /// `probs[i][j]` = P(next = j | current = i). Rows with no observations
    /// are all zero and flagged in `empty_rows`.
    pub probs: [[f64; ActionClass::COUNT]; ActionClass::COUNT],
    /// Raw transition counts underlying `probs`.
    pub counts: [[u64; ActionClass::COUNT]; ActionClass::COUNT],
    /// True where a source class was never observed; those rows are left at
    /// zero rather than given a fabricated distribution.
    pub empty_rows: [bool; ActionClass::COUNT],
    /// Total transitions counted.
    pub total: u64,
}

impl TransitionMatrix {
    /// Row sums of `probs` (1 for observed rows, 0 for empty ones).
    pub fn row_sums(&self) -> [f64; ActionClass::COUNT] {
        let mut sums = [0.0; ActionClass::COUNT];
        for (i, row) in self.probs.iter().enumerate() {
            sums[i] = row.iter().sum();
        }
        sums
    }
}

fn window_label(w: &Window) -> Option<ActionClass> {
    match w.action {
        Some(a) if w.weight > 0.0 => Some(a),
        _ => None,
    }
}

/// Estimate a transition matrix from per-video window streams.
///
/// Windows must be in temporal order within each `videos` entry; only
/// consecutive pairs where both windows carry a positive-weight label are
/// counted. `scope` restricts the estimate to videos of one scenario
/// (`None` pools everything).
pub fn transition_matrix(
    videos: &[Vec<Window>],
    scope: Option<Scenario>,
) -> Result<TransitionMatrix, CoreError> {
    let mut counts = [[0u64; ActionClass::COUNT]; ActionClass::COUNT];
    let mut total = 0u64;
    for windows in videos {
        if let Some(s) = scope {
            match windows.first() {
                Some(w) if w.scenario == s => {}
                _ => continue,
            }
        }
        for pair in windows.windows(2) {
            if let (Some(a), Some(b)) = (window_label(&pair[0]), window_label(&pair[1])) {
                counts[a.index()][b.index()] += 1;
                total += 1;
            }
        }
    }
    if total == 0 {
        return Err(CoreError::InvalidData(
            "no labeled transitions in scope".into(),
        ));
    }
    let mut probs = [[0.0; ActionClass::COUNT]; ActionClass::COUNT];
    let mut empty_rows = [false; ActionClass::COUNT];
    for i in 0..ActionClass::COUNT {
        let row_total: u64 = counts[i].iter().sum();
        if row_total == 0 {
            empty_rows[i] = true;
            continue;
        }
        for j in 0..ActionClass::COUNT {
            probs[i][j] = counts[i][j] as f64 / row_total as f64;
        }
    }
    Ok(TransitionMatrix {
        scope: scope.map_or_else(|| "all".to_string(), |s| s.name().to_string()),
        probs,
        counts,
        empty_rows,
        total,
    })
}
