//! Sliding-window segmentation and sequence assembly.
//!
//! Training windows slide with a short stride, so neighbors overlap; a
//! sequence groups a fixed count of consecutive windows from one video for
//! the context transformer.

use super::channels::ChannelizedSequence;
use crate::taxonomy::{ActionClass, Scenario};
use ndarray::{s, Array2};

/// One window of channelized samples plus its resolved label.
#[derive(Debug, Clone)]
pub struct Window {
    /// 8×window_len slice of the source video.
    pub data: Array2<f64>,
    /// Resolved action, or `None` when no span overlaps enough.
    pub action: Option<ActionClass>,
    /// Confidence weight of the winning span; 0 for unlabeled windows.
    pub weight: f64,
    pub scenario: Scenario,
    /// Offset of the window's first sample within the video.
    pub start: usize,
}

/// A fixed-length run of consecutive windows from one video.
#[derive(Debug, Clone)]
pub struct SequenceSample {
    pub windows: Vec<Window>,
    pub scenario: Scenario,
    pub video_id: String,
}

/// Cut a video into windows at offsets 0, stride, 2·stride, …
///
/// Each window takes the label of the action span with the largest overlap,
/// with ties going to the span that starts earlier; a window stays unlabeled
/// (weight 0) unless the winning overlap covers at least `min_overlap` of
/// the window. A video shorter than one window yields no windows.
pub fn segment_windows(
    seq: &ChannelizedSequence,
    window_len: usize,
    stride: usize,
    min_overlap: f64,
) -> Vec<Window> {
    assert!(window_len > 0 && stride > 0);
    let t = seq.len();
    if t < window_len {
        return Vec::new();
    }
    let n = (t - window_len) / stride + 1;
    let mut out = Vec::with_capacity(n);
    for w in 0..n {
        let start = w * stride;
        let end = start + window_len;
        let mut best: Option<(usize, usize, ActionClass, f64)> = None;
        for span in &seq.action_spans {
            let ov = span.end.min(end).saturating_sub(span.start.max(start));
            if ov == 0 {
                continue;
            }
            let replace = match best {
                None => true,
                Some((bov, bstart, _, _)) => ov > bov || (ov == bov && span.start < bstart),
            };
            if replace {
                best = Some((ov, span.start, span.action, span.weight));
            }
        }
        let (action, weight) = match best {
            Some((ov, _, a, w)) if ov as f64 >= min_overlap * window_len as f64 => (Some(a), w),
            _ => (None, 0.0),
        };
        out.push(Window {
            data: seq.channels.slice(s![.., start..end]).to_owned(),
            action,
            weight,
            scenario: seq.scenario,
            start,
        });
    }
    out
}

/// Group one video's windows into non-overlapping runs of `s` consecutive
/// windows; the trailing remainder is dropped.
pub fn assemble_sequences(video_id: &str, windows: &[Window], s: usize) -> Vec<SequenceSample> {
    assert!(s > 0);
    windows
        .chunks_exact(s)
        .map(|chunk| SequenceSample {
            windows: chunk.to_vec(),
            scenario: chunk[0].scenario,
            video_id: video_id.to_string(),
        })
        .collect()
}

/// Assemble across a corpus, one window list per video. Grouping never
/// crosses a video boundary.
pub fn assemble_corpus(videos: &[(String, Vec<Window>)], s: usize) -> Vec<SequenceSample> {
    videos
        .iter()
        .flat_map(|(id, windows)| assemble_sequences(id, windows, s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::channels::ActionSpan;
    use ndarray::Array2;

    fn seq_with_spans(t: usize, spans: Vec<ActionSpan>) -> ChannelizedSequence {
        let mut channels = Array2::zeros((8, t));
        for i in 0..t {
            channels[[0, i]] = i as f64; // ramp so window content is checkable
        }
        ChannelizedSequence {
            video_id: "v".into(),
            scenario: Scenario::DeskWork,
            sample_rate: 50.0,
            channels,
            action_spans: spans,
        }
    }

    fn span(start: usize, end: usize, action: ActionClass, weight: f64) -> ActionSpan {
        ActionSpan {
            start,
            end,
            action,
            weight,
        }
    }

    #[test]
    fn window_counts_follow_the_stride_formula() {
        let one = segment_windows(&seq_with_spans(50, vec![]), 50, 10, 0.5);
        assert_eq!(one.len(), 1);
        let three = segment_windows(&seq_with_spans(70, vec![]), 50, 10, 0.5);
        assert_eq!(three.len(), 3);
        assert_eq!(
            three.iter().map(|w| w.start).collect::<Vec<_>>(),
            vec![0, 10, 20]
        );
        assert!(segment_windows(&seq_with_spans(49, vec![]), 50, 10, 0.5).is_empty());

        for t in 50..200 {
            let n = segment_windows(&seq_with_spans(t, vec![]), 50, 10, 0.5).len();
            assert_eq!(n, (t - 50) / 10 + 1, "T={t}");
        }
    }

    #[test]
    fn window_data_matches_source_slice() {
        let seq = seq_with_spans(70, vec![]);
        let windows = segment_windows(&seq, 50, 10, 0.5);
        assert_eq!(windows[1].data.shape(), &[8, 50]);
        assert_eq!(windows[1].data[[0, 0]], 10.0);
        assert_eq!(windows[1].data[[0, 49]], 59.0);
    }

    #[test]
    fn full_overlap_span_labels_the_window() {
        let seq = seq_with_spans(50, vec![span(0, 50, ActionClass::Locomotion, 0.8)]);
        let w = &segment_windows(&seq, 50, 10, 0.5)[0];
        assert_eq!(w.action, Some(ActionClass::Locomotion));
        assert_eq!(w.weight, 0.8);
    }

    #[test]
    fn insufficient_overlap_leaves_window_unlabeled() {
        // 24 of 50 samples covered: under the 50% requirement.
        let seq = seq_with_spans(50, vec![span(0, 24, ActionClass::Stationary, 1.0)]);
        let w = &segment_windows(&seq, 50, 10, 0.5)[0];
        assert_eq!(w.action, None);
        assert_eq!(w.weight, 0.0);
        // Exactly 25 of 50 qualifies.
        let seq = seq_with_spans(50, vec![span(0, 25, ActionClass::Stationary, 1.0)]);
        let w = &segment_windows(&seq, 50, 10, 0.5)[0];
        assert_eq!(w.action, Some(ActionClass::Stationary));
    }

    #[test]
    fn overlap_ties_go_to_the_earlier_span() {
        // Both spans cover exactly 25 samples of window [0,50).
        let seq = seq_with_spans(
            60,
            vec![
                span(25, 50, ActionClass::TaskOperation, 1.0),
                span(0, 25, ActionClass::ObjectTransfer, 0.9),
            ],
        );
        let w = &segment_windows(&seq, 50, 10, 0.5)[0];
        assert_eq!(w.action, Some(ActionClass::ObjectTransfer));
        assert_eq!(w.weight, 0.9);
    }

    #[test]
    fn larger_overlap_beats_earlier_start() {
        let seq = seq_with_spans(
            60,
            vec![
                span(0, 20, ActionClass::ObjectTransfer, 1.0),
                span(20, 50, ActionClass::Search, 1.0),
            ],
        );
        let w = &segment_windows(&seq, 50, 10, 0.5)[0];
        assert_eq!(w.action, Some(ActionClass::Search));
    }

    #[test]
    fn sequence_grouping_drops_the_remainder() {
        let seq = seq_with_spans(50 + 64 * 10, vec![]);
        let windows = segment_windows(&seq, 50, 10, 0.5);
        assert_eq!(windows.len(), 65);
        let samples = assemble_sequences("v", &windows, 30);
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[0].windows.len(), 30);
        assert_eq!(samples[1].windows[0].start, 300);

        let short = assemble_sequences("v", &windows[..29], 30);
        assert!(short.is_empty());
    }

    #[test]
    fn corpus_assembly_never_crosses_videos() {
        // 3 videos with 35, 65, and 95 windows → 1 + 2 + 3 samples.
        let videos: Vec<(String, Vec<Window>)> = [35usize, 65, 95]
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                let seq = seq_with_spans(50 + (n - 1) * 10, vec![]);
                (format!("v{k}"), segment_windows(&seq, 50, 10, 0.5))
            })
            .collect();
        let samples = assemble_corpus(&videos, 30);
        assert_eq!(samples.len(), 6);
        for sample in &samples {
            assert_eq!(sample.windows.len(), 30);
            // Windows are consecutive within one video: starts advance by
            // exactly the stride, which cannot happen across a video break.
            for pair in sample.windows.windows(2) {
                assert_eq!(pair[1].start, pair[0].start + 10);
            }
        }
        let counts: Vec<usize> = ["v0", "v1", "v2"]
            .iter()
            .map(|id| samples.iter().filter(|s| s.video_id == *id).count())
            .collect();
        assert_eq!(counts, vec![1, 2, 3]);
    }
}
