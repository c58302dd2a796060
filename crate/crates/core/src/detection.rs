//! Oracle detection inside glimpses, greedy IoU matching against ground
//! truth, and precision/recall/F1 curves versus glimpse budget.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::geometry::{iou, BBox, Scene, SceneObject};

/// A predicted box in vHR pixels. `object_id_hint` is set only by the
/// oracle detector and drives deduplication across overlapping glimpses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub class_id: u32,
    pub score: f64,
    pub source_glimpse: usize,
    pub object_id_hint: Option<u32>,
}

/// TP/FP/FN assignment of a detection list against ground truth.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchResult {
    /// class_id -> (tp, fp, fn)
    pub per_class: BTreeMap<u32, (usize, usize, usize)>,
    /// (detection index, matched ground-truth id, iou)
    pub matched: Vec<(usize, u32, f64)>,
}

impl MatchResult {
    pub fn totals(&self) -> (usize, usize, usize) {
        self.per_class
            .values()
            .fold((0, 0, 0), |(tp, fp, fnn), &(a, b, c)| (tp + a, fp + b, fnn + c))
    }
}

/// Precision/recall/F1 at one glimpse count.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricPoint {
    pub k: usize,
    /// class_id -> (precision, recall, f1)
    pub per_class: BTreeMap<u32, (f64, f64, f64)>,
    pub avg_precision: f64,
    pub avg_recall: f64,
    pub avg_f1: f64,
}

/// Per-k metric records for k = 1..=number of glimpses.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricCurve {
    pub points: Vec<MetricPoint>,
}

/// Idealized detector: every ground-truth object intersecting the window is
/// returned with its box clipped to the window, true class, and score 1.
/// Partial objects therefore come back as partial boxes, which is what makes
/// the oracle's precision imperfect under an IoU threshold.
pub fn oracle_detect(scene: &Scene, window: &BBox, source_glimpse: usize) -> Vec<Detection> {
    scene
        .objects
        .iter()
        .filter_map(|obj| {
            obj.bbox.intersection(window).map(|clipped| Detection {
                bbox: clipped,
                class_id: obj.class_id,
                score: 1.0,
                source_glimpse,
                object_id_hint: Some(obj.id),
            })
        })
        .collect()
}

/// Among oracle detections sharing an `object_id_hint`, keeps the largest
/// clip; detections without a hint pass through unchanged. Output order is
/// input order of the survivors.
pub fn dedupe_detections(dets: &[Detection]) -> Vec<Detection> {
    let mut best_by_hint: BTreeMap<u32, usize> = BTreeMap::new();
    for (idx, det) in dets.iter().enumerate() {
        if let Some(hint) = det.object_id_hint {
            match best_by_hint.get(&hint) {
                Some(&prev) if dets[prev].bbox.area() >= det.bbox.area() => {}
                _ => {
                    best_by_hint.insert(hint, idx);
                }
            }
        }
    }
    dets.iter()
        .enumerate()
        .filter(|(idx, det)| match det.object_id_hint {
            Some(hint) => best_by_hint[&hint] == *idx,
            None => true,
        })
        .map(|(_, det)| *det)
        .collect()
}

/// Class-wise greedy matching: candidate pairs of equal class sorted by
/// descending IoU (ties: lower detection index, then lower ground-truth id),
/// accepted when IoU >= threshold and both sides are unmatched.
pub fn match_detections(dets: &[Detection], gt: &[SceneObject], iou_threshold: f64) -> MatchResult {
    assert!(iou_threshold > 0.0 && iou_threshold <= 1.0);
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (di, det) in dets.iter().enumerate() {
        for (gi, obj) in gt.iter().enumerate() {
            if det.class_id != obj.class_id {
                continue;
            }
            let overlap = iou(&det.bbox, &obj.bbox);
            if overlap >= iou_threshold {
                pairs.push((overlap, di, gi));
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(gt[a.2].id.cmp(&gt[b.2].id))
    });

    let mut det_matched = alloc::vec![false; dets.len()];
    let mut gt_matched = alloc::vec![false; gt.len()];
    let mut result = MatchResult::default();
    for (overlap, di, gi) in pairs {
        if !det_matched[di] && !gt_matched[gi] {
            det_matched[di] = true;
            gt_matched[gi] = true;
            result.matched.push((di, gt[gi].id, overlap));
        }
    }

    for (di, det) in dets.iter().enumerate() {
        let entry = result.per_class.entry(det.class_id).or_default();
        if det_matched[di] {
            entry.0 += 1;
        } else {
            entry.1 += 1;
        }
    }
    for (gi, obj) in gt.iter().enumerate() {
        let entry = result.per_class.entry(obj.class_id).or_default();
        if !gt_matched[gi] {
            entry.2 += 1;
        }
    }
    result
}

fn prf(tp: usize, fp: usize, fnn: usize) -> (f64, f64, f64) {
    let p = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let r = if tp + fnn > 0 { tp as f64 / (tp + fnn) as f64 } else { 0.0 };
    let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f1)
}

/// Per-class precision/recall/F1 plus the unweighted mean over classes
/// present in ground truth (classes with tp + fn > 0). Every 0/0 is 0.
pub fn prf_metrics(m: &MatchResult) -> (BTreeMap<u32, (f64, f64, f64)>, (f64, f64, f64)) {
    let mut per_class = BTreeMap::new();
    let mut sums = (0.0, 0.0, 0.0);
    let mut gt_classes = 0usize;
    for (&class_id, &(tp, fp, fnn)) in &m.per_class {
        let metrics = prf(tp, fp, fnn);
        per_class.insert(class_id, metrics);
        if tp + fnn > 0 {
            gt_classes += 1;
            sums.0 += metrics.0;
            sums.1 += metrics.1;
            sums.2 += metrics.2;
        }
    }
    let avg = if gt_classes > 0 {
        let n = gt_classes as f64;
        (sums.0 / n, sums.1 / n, sums.2 / n)
    } else {
        (0.0, 0.0, 0.0)
    };
    (per_class, avg)
}

/// For each k = 1..=n_glimpses, dedupes and matches the union of detections
/// from the first k glimpses against the full ground truth.
pub fn metric_curve(
    scene: &Scene,
    detections_per_glimpse: &[Vec<Detection>],
    iou_threshold: f64,
) -> MetricCurve {
    let mut points = Vec::with_capacity(detections_per_glimpse.len());
    let mut pool: Vec<Detection> = Vec::new();
    for (step, dets) in detections_per_glimpse.iter().enumerate() {
        pool.extend_from_slice(dets);
        let deduped = dedupe_detections(&pool);
        let matched = match_detections(&deduped, &scene.objects, iou_threshold);
        let (per_class, (avg_p, avg_r, avg_f1)) = prf_metrics(&matched);
        points.push(MetricPoint {
            k: step + 1,
            per_class,
            avg_precision: avg_p,
            avg_recall: avg_r,
            avg_f1: avg_f1,
        });
    }
    MetricCurve { points }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obj(id: u32, class_id: u32, x: u32, y: u32, w: u32, h: u32) -> SceneObject {
        SceneObject {
            id,
            class_id,
            bbox: BBox::new(x, y, w, h),
        }
    }

    fn det(class_id: u32, x: u32, y: u32, w: u32, h: u32) -> Detection {
        Detection {
            bbox: BBox::new(x, y, w, h),
            class_id,
            score: 1.0,
            source_glimpse: 0,
            object_id_hint: None,
        }
    }

    fn scene(objects: Vec<SceneObject>) -> Scene {
        Scene {
            width: 1000,
            height: 1000,
            objects,
        }
    }

    #[test]
    fn oracle_full_containment_exact_box() {
        let s = scene(alloc::vec![obj(0, 1, 100, 100, 20, 20)]);
        let dets = oracle_detect(&s, &BBox::new(50, 50, 200, 200), 0);
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].bbox, BBox::new(100, 100, 20, 20));
        assert_eq!(dets[0].class_id, 1);
        assert_eq!(dets[0].object_id_hint, Some(0));
    }

    #[test]
    fn oracle_disjoint_window_empty() {
        let s = scene(alloc::vec![obj(0, 1, 100, 100, 20, 20)]);
        assert!(oracle_detect(&s, &BBox::new(500, 500, 100, 100), 0).is_empty());
    }

    #[test]
    fn oracle_half_clip_has_iou_half() {
        let s = scene(alloc::vec![obj(0, 1, 100, 100, 20, 20)]);
        // window cuts the object exactly in half along x
        let dets = oracle_detect(&s, &BBox::new(0, 0, 110, 200), 0);
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].bbox, BBox::new(100, 100, 10, 20));
        assert!((iou(&dets[0].bbox, &s.objects[0].bbox) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dedupe_keeps_largest_clip() {
        let mut a = det(1, 0, 0, 10, 8); // area 80
        a.object_id_hint = Some(5);
        let mut b = det(1, 0, 0, 10, 10); // area 100
        b.object_id_hint = Some(5);
        b.source_glimpse = 1;
        let out = dedupe_detections(&[a, b]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].bbox.area(), 100);
    }

    #[test]
    fn dedupe_passthrough_cases() {
        let mut a = det(1, 0, 0, 10, 10);
        a.object_id_hint = Some(1);
        let mut b = det(1, 50, 50, 10, 10);
        b.object_id_hint = Some(2);
        let external = det(2, 80, 80, 5, 5); // no hint
        assert_eq!(dedupe_detections(&[a, b, external]).len(), 3);
        assert!(dedupe_detections(&[]).is_empty());
    }

    #[test]
    fn match_perfect_detection() {
        let gt = alloc::vec![obj(0, 1, 10, 10, 20, 20)];
        let m = match_detections(&[det(1, 10, 10, 20, 20)], &gt, 0.5);
        assert_eq!(m.per_class[&1], (1, 0, 0));
    }

    #[test]
    fn match_below_threshold_is_fp_and_fn() {
        let gt = alloc::vec![obj(0, 1, 0, 0, 10, 10)];
        // IoU = 40/160 = 0.25 < 0.5
        let m = match_detections(&[det(1, 6, 0, 10, 10)], &gt, 0.5);
        assert_eq!(m.per_class[&1], (0, 1, 1));
    }

    #[test]
    fn match_one_to_one_with_duplicate_detections() {
        let gt = alloc::vec![obj(0, 1, 10, 10, 20, 20)];
        let d = det(1, 10, 10, 20, 20);
        let m = match_detections(&[d, d], &gt, 0.5);
        assert_eq!(m.per_class[&1], (1, 1, 0));
        // tie broken toward the lower detection index
        assert_eq!(m.matched, alloc::vec![(0, 0, 1.0)]);
    }

    #[test]
    fn match_wrong_class_never_pairs() {
        let gt = alloc::vec![obj(0, 1, 10, 10, 20, 20)];
        let m = match_detections(&[det(2, 10, 10, 20, 20)], &gt, 0.5);
        assert_eq!(m.per_class[&1], (0, 0, 1));
        assert_eq!(m.per_class[&2], (0, 1, 0));
    }

    #[test]
    fn prf_hand_cases() {
        let mut m = MatchResult::default();
        m.per_class.insert(0, (1, 0, 0));
        let (_, avg) = prf_metrics(&m);
        assert_eq!(avg, (1.0, 1.0, 1.0));

        let mut m = MatchResult::default();
        m.per_class.insert(0, (0, 0, 5));
        let (per, avg) = prf_metrics(&m);
        assert_eq!(per[&0], (0.0, 0.0, 0.0));
        assert_eq!(avg, (0.0, 0.0, 0.0));

        let mut m = MatchResult::default();
        m.per_class.insert(0, (2, 2, 2));
        let (per, _) = prf_metrics(&m);
        assert_eq!(per[&0], (0.5, 0.5, 0.5));
    }

    #[test]
    fn prf_average_only_over_gt_classes() {
        let mut m = MatchResult::default();
        m.per_class.insert(0, (1, 0, 0)); // present in gt
        m.per_class.insert(1, (0, 3, 0)); // fp-only class, not in gt
        let (_, avg) = prf_metrics(&m);
        assert_eq!(avg, (1.0, 1.0, 1.0));
    }

    #[test]
    fn metric_curve_monotone_recall_and_tp_fn_conservation() {
        let s = scene(alloc::vec![
            obj(0, 0, 10, 10, 20, 20),
            obj(1, 0, 500, 500, 20, 20),
            obj(2, 1, 800, 100, 30, 30),
        ]);
        let windows = [
            BBox::new(0, 0, 256, 256),
            BBox::new(400, 400, 256, 256),
            BBox::new(700, 0, 256, 256),
        ];
        let per_glimpse: Vec<Vec<Detection>> = windows
            .iter()
            .enumerate()
            .map(|(i, w)| oracle_detect(&s, w, i))
            .collect();
        let curve = metric_curve(&s, &per_glimpse, 0.5);

        // TP monotone in k; TP + FN per class equals the gt count at every k
        let mut prev_tp = 0usize;
        for (k, dets) in per_glimpse.iter().enumerate() {
            let _ = dets;
            let pool: Vec<Detection> = per_glimpse[..=k].concat();
            let m = match_detections(&dedupe_detections(&pool), &s.objects, 0.5);
            let (tp, _, _) = m.totals();
            assert!(tp >= prev_tp);
            prev_tp = tp;
            for (&class_id, &(ctp, _, cfn)) in &m.per_class {
                let gt_count = s.objects.iter().filter(|o| o.class_id == class_id).count();
                assert_eq!(ctp + cfn, gt_count);
            }
        }
        // recall rises to 1 once every object was fully inside some glimpse
        assert!((curve.points[2].avg_recall - 1.0).abs() < 1e-12);
        assert!(curve.points[0].avg_recall <= curve.points[1].avg_recall);
        assert!(curve.points[1].avg_recall <= curve.points[2].avg_recall);
    }

    #[test]
    fn metric_curve_partial_clip_breaks_precision() {
        let s = scene(alloc::vec![obj(0, 0, 100, 100, 20, 20)]);
        // the glimpse clips the object to 8x20 -> IoU 0.4 < 0.5
        let window = BBox::new(0, 0, 108, 300);
        let per_glimpse = alloc::vec![oracle_detect(&s, &window, 0)];
        let curve = metric_curve(&s, &per_glimpse, 0.5);
        assert!(curve.points[0].avg_precision < 1.0);
        assert_eq!(curve.points[0].avg_recall, 0.0);
    }
}
