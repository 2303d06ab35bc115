//! Layout evaluation metrics.
//!
//! Metrics are computed per channel (one shelf of one sample in one view)
//! and averaged per `(view, class)` bucket. Two binary classes are derived
//! from the three-way labels: `rack` treats unoccupied and occupied cells
//! as positive (shelf structure vs background), `box` treats only occupied
//! cells as positive.
//!
//! Channels that are entirely background in both ground truth and
//! prediction carry no signal (the shelf was out of view and the model
//! agreed) and are excluded from the averages. Average precision is
//! undefined for channels whose ground truth has no positive cell; those
//! are skipped for AP only and reported in the skip counter.

use alloc::vec::Vec;

use crate::gtlayout::View;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Binary reduction of the three-way cell labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum EvalClass {
    /// Shelf structure: unoccupied or occupied cells.
    Rack,
    /// Occupied cells only.
    Box,
}

impl EvalClass {
    pub fn includes(self, label: u8) -> bool {
        match self {
            EvalClass::Rack => label >= 1,
            EvalClass::Box => label == 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EvalClass::Rack => "rack",
            EvalClass::Box => "box",
        }
    }
}

/// Intersection over union of the class masks of two label grids.
/// Both masks empty counts as a perfect match (1.0).
pub fn iou(pred: &[u8], gt: &[u8], class: EvalClass) -> f64 {
    debug_assert_eq!(pred.len(), gt.len());
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&p, &g) in pred.iter().zip(gt) {
        let p_in = class.includes(p);
        let g_in = class.includes(g);
        inter += (p_in && g_in) as usize;
        union += (p_in || g_in) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Average precision of a pixel ranking.
///
/// Cells are ranked by descending score; equal scores form one threshold
/// group so the result does not depend on tie order. `None` when the ground
/// truth has no positives.
pub fn average_precision(scores: &[f64], positive: &[bool]) -> Option<f64> {
    debug_assert_eq!(scores.len(), positive.len());
    let total_pos = positive.iter().filter(|&&p| p).count();
    if total_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut ap = 0.0f64;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let score = scores[order[i]];
        let mut group_tp = 0usize;
        let mut group_fp = 0usize;
        while i < order.len() && scores[order[i]] == score {
            if positive[order[i]] {
                group_tp += 1;
            } else {
                group_fp += 1;
            }
            i += 1;
        }
        tp += group_tp;
        fp += group_fp;
        let precision = tp as f64 / (tp + fp) as f64;
        let recall_gain = group_tp as f64 / total_pos as f64;
        ap += recall_gain * precision;
    }
    Some(ap)
}

/// Whether a channel carries no information: all background on both sides.
pub fn channel_excluded(pred: &[u8], gt: &[u8]) -> bool {
    pred.iter().all(|&p| p == 0) && gt.iter().all(|&g| g == 0)
}

/// Aggregated scores for one `(view, class)` bucket, percentages in
/// `[0, 100]`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EvalRow {
    pub view: View,
    pub class: EvalClass,
    pub miou: f64,
    pub map: f64,
    /// Channels contributing to the IoU mean.
    pub channels: usize,
    /// Channels whose AP was undefined (no positive ground-truth cell).
    pub ap_skipped: usize,
}

/// Evaluation results over a dataset, one row per `(view, class)`.
#[derive(Clone, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EvalTable {
    pub rows: Vec<EvalRow>,
}

impl EvalTable {
    pub fn row(&self, view: View, class: EvalClass) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.view == view && r.class == class)
    }
}

#[derive(Clone, Default)]
struct Bucket {
    iou_sum: f64,
    iou_n: usize,
    ap_sum: f64,
    ap_n: usize,
    ap_skipped: usize,
}

/// Streaming evaluator: feed per-channel predictions, then [`finish`].
///
/// [`finish`]: EvalAccumulator::finish
#[derive(Clone, Default)]
pub struct EvalAccumulator {
    // Index: view (top, front) x class (rack, box).
    buckets: [Bucket; 4],
}

const BUCKETS: [(View, EvalClass); 4] = [
    (View::Top, EvalClass::Rack),
    (View::Top, EvalClass::Box),
    (View::Front, EvalClass::Rack),
    (View::Front, EvalClass::Box),
];

impl EvalAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one channel of one sample. `scores` ranks cells for the class
    /// (higher means more confidently positive) and must have the same
    /// length as the label slices.
    pub fn push_channel(
        &mut self,
        view: View,
        class: EvalClass,
        pred: &[u8],
        gt: &[u8],
        scores: &[f64],
    ) {
        if channel_excluded(pred, gt) {
            return;
        }
        let slot = BUCKETS
            .iter()
            .position(|&(v, c)| v == view && c == class)
            .expect("bucket");
        let bucket = &mut self.buckets[slot];
        bucket.iou_sum += iou(pred, gt, class);
        bucket.iou_n += 1;
        let positive: Vec<bool> = gt.iter().map(|&g| class.includes(g)).collect();
        match average_precision(scores, &positive) {
            Some(ap) => {
                bucket.ap_sum += ap;
                bucket.ap_n += 1;
            }
            None => bucket.ap_skipped += 1,
        }
    }

    /// Finalizes the table. Buckets that never received a channel are
    /// omitted (for example the front view of a top-only model).
    pub fn finish(self) -> EvalTable {
        let mut rows = Vec::new();
        for (slot, &(view, class)) in BUCKETS.iter().enumerate() {
            let b = &self.buckets[slot];
            if b.iou_n == 0 {
                continue;
            }
            rows.push(EvalRow {
                view,
                class,
                miou: 100.0 * b.iou_sum / b.iou_n as f64,
                map: if b.ap_n > 0 { 100.0 * b.ap_sum / b.ap_n as f64 } else { 0.0 },
                channels: b.iou_n,
                ap_skipped: b.ap_skipped,
            });
        }
        EvalTable { rows }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use alloc::vec;

    #[test]
    fn iou_of_identical_masks_is_one() {
        let grid = vec![0u8, 1, 2, 2, 0, 1];
        assert_eq!(iou(&grid, &grid, EvalClass::Rack), 1.0);
        assert_eq!(iou(&grid, &grid, EvalClass::Box), 1.0);
    }

    #[test]
    fn iou_of_disjoint_equal_masks_is_zero() {
        let pred = vec![2u8, 2, 0, 0];
        let gt = vec![0u8, 0, 2, 2];
        assert_eq!(iou(&pred, &gt, EvalClass::Box), 0.0);
    }

    #[test]
    fn iou_of_containing_double_area_is_half() {
        let pred = vec![2u8, 2, 2, 2, 0, 0];
        let gt = vec![2u8, 2, 0, 0, 0, 0];
        assert_eq!(iou(&pred, &gt, EvalClass::Box), 0.5);
    }

    #[test]
    fn iou_with_both_masks_empty_is_one() {
        let pred = vec![0u8, 1, 0];
        let gt = vec![1u8, 0, 0];
        assert_eq!(iou(&pred, &gt, EvalClass::Box), 1.0);
    }

    #[test]
    fn iou_is_symmetric() {
        let mut rng = SplitMix64::new(3);
        for _ in 0..50 {
            let a: Vec<u8> = (0..64).map(|_| rng.below(3) as u8).collect();
            let b: Vec<u8> = (0..64).map(|_| rng.below(3) as u8).collect();
            for class in [EvalClass::Rack, EvalClass::Box] {
                assert_eq!(iou(&a, &b, class), iou(&b, &a, class));
            }
        }
    }

    #[test]
    fn ap_perfect_ranking_is_one() {
        let scores = vec![0.9, 0.8, 0.3, 0.1];
        let pos = vec![true, true, false, false];
        assert_eq!(average_precision(&scores, &pos), Some(1.0));
    }

    #[test]
    fn ap_single_positive_at_rank_k_is_one_over_k() {
        for k in 1..=6usize {
            let n = 8;
            let scores: Vec<f64> = (0..n).map(|i| 1.0 - i as f64 * 0.1).collect();
            let mut pos = vec![false; n];
            pos[k - 1] = true;
            let ap = average_precision(&scores, &pos).unwrap();
            assert!((ap - 1.0 / k as f64).abs() < 1e-12, "k {k} ap {ap}");
        }
    }

    #[test]
    fn ap_with_all_scores_equal_is_the_base_rate() {
        let scores = vec![0.5f64; 10];
        let mut pos = vec![false; 10];
        pos[0] = true;
        pos[3] = true;
        pos[7] = true;
        assert_eq!(average_precision(&scores, &pos), Some(0.3));
    }

    #[test]
    fn ap_without_positives_is_undefined() {
        assert_eq!(average_precision(&[0.4, 0.2], &[false, false]), None);
    }

    #[test]
    fn ap_is_invariant_to_tie_order_and_monotone_transforms() {
        let mut rng = SplitMix64::new(12);
        for _ in 0..100 {
            let n = 40;
            // Coarse scores force plenty of ties.
            let scores: Vec<f64> = (0..n).map(|_| rng.below(6) as f64 / 6.0).collect();
            let pos: Vec<bool> = (0..n).map(|_| rng.next_f64() < 0.3).collect();
            if !pos.iter().any(|&p| p) {
                continue;
            }
            let base = average_precision(&scores, &pos).unwrap();
            // Strictly monotone transform preserves the ranking and groups.
            let cubed: Vec<f64> = scores.iter().map(|&s| s * s * s).collect();
            assert_eq!(average_precision(&cubed, &pos), Some(base));
            assert!((0.0..=1.0).contains(&base));
        }
    }

    /// Independent oracle: for every distinct score threshold, recount true
    /// and false positives from scratch.
    fn ap_by_threshold_rescan(scores: &[f64], pos: &[bool]) -> Option<f64> {
        let total: usize = pos.iter().filter(|&&p| p).count();
        if total == 0 {
            return None;
        }
        let mut thresholds: Vec<f64> = scores.to_vec();
        thresholds.sort_by(|a, b| b.total_cmp(a));
        thresholds.dedup();
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for &t in &thresholds {
            let mut tp = 0usize;
            let mut fp = 0usize;
            for (&s, &p) in scores.iter().zip(pos) {
                if s >= t {
                    if p {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            let recall = tp as f64 / total as f64;
            let precision = tp as f64 / (tp + fp) as f64;
            ap += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
        Some(ap)
    }

    #[test]
    fn ap_matches_threshold_rescan_oracle() {
        let mut rng = SplitMix64::new(77);
        for case in 0..200 {
            let n = 50;
            let scores: Vec<f64> = (0..n).map(|_| rng.below(8) as f64 / 8.0).collect();
            let pos: Vec<bool> = (0..n).map(|_| rng.next_f64() < 0.4).collect();
            let got = average_precision(&scores, &pos);
            let want = ap_by_threshold_rescan(&scores, &pos);
            match (got, want) {
                (None, None) => {}
                (Some(g), Some(w)) => assert!((g - w).abs() < 1e-12, "case {case}: {g} vs {w}"),
                other => panic!("case {case}: {other:?}"),
            }
        }
    }

    #[test]
    fn accumulator_scores_a_perfect_model_at_exactly_100() {
        let mut acc = EvalAccumulator::new();
        let mut rng = SplitMix64::new(5);
        for _ in 0..50 {
            let gt: Vec<u8> = (0..256).map(|_| rng.below(3) as u8).collect();
            for class in [EvalClass::Rack, EvalClass::Box] {
                let scores: Vec<f64> =
                    gt.iter().map(|&g| if class.includes(g) { 1.0 } else { 0.0 }).collect();
                acc.push_channel(View::Top, class, &gt, &gt, &scores);
            }
        }
        let table = acc.finish();
        let rack = table.row(View::Top, EvalClass::Rack).unwrap();
        let boxr = table.row(View::Top, EvalClass::Box).unwrap();
        assert_eq!(rack.miou, 100.0);
        assert_eq!(rack.map, 100.0);
        assert_eq!(boxr.miou, 100.0);
        assert_eq!(boxr.map, 100.0);
        assert!(table.row(View::Front, EvalClass::Rack).is_none());
    }

    #[test]
    fn accumulator_excludes_all_background_channels() {
        let mut acc = EvalAccumulator::new();
        let empty = vec![0u8; 16];
        let scores = vec![0.0f64; 16];
        acc.push_channel(View::Top, EvalClass::Rack, &empty, &empty, &scores);
        assert!(acc.finish().rows.is_empty());

        // A channel empty only in ground truth still counts (the model
        // hallucinated structure), pulling IoU down.
        let mut acc = EvalAccumulator::new();
        let pred = vec![1u8; 16];
        acc.push_channel(View::Top, EvalClass::Rack, &pred, &empty, &scores);
        let table = acc.finish();
        let row = table.row(View::Top, EvalClass::Rack).unwrap();
        assert_eq!(row.miou, 0.0);
        assert_eq!(row.channels, 1);
        assert_eq!(row.ap_skipped, 1);
    }
}
