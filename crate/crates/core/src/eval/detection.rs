use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::boundary::Segment;
use crate::dataio::GroundTruth;

/// A segment predicted for one video.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub video_id: String,
    pub segment: Segment,
}

impl Prediction {
    pub fn new(video_id: impl Into<String>, segment: Segment) -> Self {
        Prediction {
            video_id: video_id.into(),
            segment,
        }
    }
}

pub(crate) fn span_iou(a: (usize, usize), b: (usize, usize)) -> f64 {
    let inter = a.1.min(b.1).saturating_sub(a.0.max(b.0));
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Intersection over union of two snippet intervals.
pub fn temporal_iou(a: &Segment, b: &Segment) -> f64 {
    span_iou((a.start, a.end), (b.start, b.end))
}

/// Ranking order: score descending, then start, then video id.
fn rank_order(a: &Prediction, b: &Prediction) -> Ordering {
    b.segment
        .score
        .partial_cmp(&a.segment.score)
        .unwrap_or(Ordering::Equal)
        .then(a.segment.start.cmp(&b.segment.start))
        .then_with(|| a.video_id.cmp(&b.video_id))
}

/// Interpolated average precision of `class_id` at one IoU threshold.
///
/// Returns `None` when the class has no ground-truth instance.
pub fn average_precision(
    predictions: &[Prediction],
    truth: &GroundTruth,
    iou_thr: f64,
    class_id: usize,
) -> Option<f64> {
    let mut gts: HashMap<&str, Vec<(usize, usize)>> = HashMap::new();
    let mut npos = 0usize;
    for v in truth.videos.values() {
        for a in v.annotations.iter().filter(|a| a.class_id == class_id) {
            gts.entry(v.video_id.as_str()).or_default().push((a.start, a.end));
            npos += 1;
        }
    }
    if npos == 0 {
        return None;
    }

    let mut preds: Vec<&Prediction> = predictions.iter().filter(|p| p.segment.class_id == class_id).collect();
    preds.sort_by(|a, b| rank_order(a, b));

    let mut used: HashMap<&str, Vec<bool>> = gts.iter().map(|(k, v)| (*k, vec![false; v.len()])).collect();
    let mut tp = 0usize;
    let mut precision = Vec::with_capacity(preds.len());
    let mut recall = Vec::with_capacity(preds.len());
    for (rank, p) in preds.iter().enumerate() {
        if let Some(spans) = gts.get(p.video_id.as_str()) {
            let seg = (p.segment.start, p.segment.end);
            let mut cands: Vec<(f64, usize)> = spans.iter().enumerate().map(|(j, &g)| (span_iou(seg, g), j)).collect();
            cands.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
            let flags = used.get_mut(p.video_id.as_str()).expect("same keys as gts");
            for (iou, j) in cands {
                if iou < iou_thr {
                    break;
                }
                if !flags[j] {
                    flags[j] = true;
                    tp += 1;
                    break;
                }
            }
        }
        precision.push(tp as f64 / (rank + 1) as f64);
        recall.push(tp as f64 / npos as f64);
    }
    Some(interpolated_area(&precision, &recall))
}

/// Area under the monotone precision envelope.
fn interpolated_area(precision: &[f64], recall: &[f64]) -> f64 {
    let mut mprec = Vec::with_capacity(precision.len() + 2);
    mprec.push(0.0);
    mprec.extend_from_slice(precision);
    mprec.push(0.0);
    let mut mrec = Vec::with_capacity(recall.len() + 2);
    mrec.push(0.0);
    mrec.extend_from_slice(recall);
    mrec.push(1.0);
    for i in (0..mprec.len() - 1).rev() {
        mprec[i] = mprec[i].max(mprec[i + 1]);
    }
    (1..mrec.len())
        .filter(|&i| mrec[i] != mrec[i - 1])
        .map(|i| (mrec[i] - mrec[i - 1]) * mprec[i])
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{Annotation, VideoTruth};
    use proptest::prelude::*;

    fn seg(s: usize, e: usize, c: usize, score: f64) -> Segment {
        Segment::new(s, e, c, score).unwrap()
    }

    fn truth(items: &[(&str, usize, usize, usize)]) -> GroundTruth {
        let mut gt = GroundTruth::default();
        for &(id, start, end, class_id) in items {
            let mut v = gt.get(id).cloned().unwrap_or(VideoTruth {
                video_id: id.into(),
                annotations: vec![],
            });
            v.annotations.push(Annotation { start, end, class_id });
            gt.insert(v);
        }
        gt
    }

    #[test]
    fn iou_cases() {
        assert_eq!(temporal_iou(&seg(0, 10, 0, 1.0), &seg(0, 10, 0, 1.0)), 1.0);
        assert_eq!(temporal_iou(&seg(0, 10, 0, 1.0), &seg(10, 20, 0, 1.0)), 0.0);
        assert!((temporal_iou(&seg(0, 10, 0, 1.0), &seg(5, 15, 0, 1.0)) - 5.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions() {
        let gt = truth(&[("a", 0, 10, 1), ("a", 20, 30, 1), ("b", 5, 9, 1)]);
        let preds: Vec<_> = gt
            .videos
            .values()
            .flat_map(|v| {
                v.annotations
                    .iter()
                    .map(|a| Prediction::new(&v.video_id, seg(a.start, a.end, a.class_id, 1.0)))
            })
            .collect();
        assert_eq!(average_precision(&preds, &gt, 0.7, 1), Some(1.0));
        assert_eq!(average_precision(&preds, &gt, 0.7, 0), None);
    }

    #[test]
    fn misses_give_zero() {
        let gt = truth(&[("a", 0, 10, 0)]);
        let preds = vec![
            Prediction::new("a", seg(8, 30, 0, 0.9)),
            Prediction::new("b", seg(0, 10, 0, 0.8)),
        ];
        assert_eq!(average_precision(&preds, &gt, 0.3, 0), Some(0.0));
    }

    /// Oracle: for each recall level k/npos, the best precision at any rank with at least k hits.
    fn oracle_ap(hits: &[bool], npos: usize) -> f64 {
        (1..=npos)
            .map(|k| {
                let mut tp = 0;
                let mut best: f64 = 0.0;
                for (r, &h) in hits.iter().enumerate() {
                    tp += h as usize;
                    if tp >= k {
                        best = best.max(tp as f64 / (r + 1) as f64);
                    }
                }
                best / npos as f64
            })
            .sum()
    }

    #[test]
    fn hand_fixture() {
        // Ranks 1 and 3 hit, rank 2 is a false positive.
        let gt = truth(&[("a", 0, 10, 0), ("a", 40, 50, 0)]);
        let preds = vec![
            Prediction::new("a", seg(0, 10, 0, 0.9)),
            Prediction::new("a", seg(20, 30, 0, 0.8)),
            Prediction::new("a", seg(40, 50, 0, 0.7)),
        ];
        let ap = average_precision(&preds, &gt, 0.5, 0).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!((ap - oracle_ap(&[true, false, true], 2)).abs() < 1e-12);
    }

    #[test]
    fn duplicate_counts_once() {
        let gt = truth(&[("a", 0, 10, 0)]);
        let preds = vec![
            Prediction::new("a", seg(0, 10, 0, 0.9)),
            Prediction::new("a", seg(1, 10, 0, 0.8)),
        ];
        let ap = average_precision(&preds, &gt, 0.5, 0).unwrap();
        assert!((ap - oracle_ap(&[true, false], 1)).abs() < 1e-12);
        assert_eq!(ap, 1.0);
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in 0usize..50, la in 1usize..30, b in 0usize..50, lb in 1usize..30) {
            let x = seg(a, a + la, 0, 1.0);
            let y = seg(b, b + lb, 0, 1.0);
            let i = temporal_iou(&x, &y);
            prop_assert_eq!(i, temporal_iou(&y, &x));
            prop_assert!((0.0..=1.0).contains(&i));
            prop_assert_eq!(temporal_iou(&x, &x), 1.0);
        }

        #[test]
        fn ap_is_rank_based(
            raw in prop::collection::vec((0usize..60, 1usize..20, 0.01f64..1.0), 1..10),
            exp in -4i32..6,
        ) {
            let gt = truth(&[("a", 0, 10, 0), ("a", 30, 45, 0)]);
            let preds: Vec<_> = raw.iter().map(|&(s, l, sc)| Prediction::new("a", seg(s, s + l, 0, sc))).collect();
            let scaled: Vec<_> = preds.iter().map(|p| {
                let mut q = p.clone();
                q.segment.score *= 2f64.powi(exp);
                q
            }).collect();
            let a = average_precision(&preds, &gt, 0.3, 0).unwrap();
            let b = average_precision(&scaled, &gt, 0.3, 0).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
