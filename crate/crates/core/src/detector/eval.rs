//! Recall and average precision of detections against ground truth.

use super::boxes::jaccard;
use super::{Detection, GroundTruth};

/// Greedy assignment of detections (by descending score) to unclaimed
/// same-class ground truths with IoU ≥ `iou`; true-positive flags in score
/// order.
fn assign(dets: &[Detection], gts: &[GroundTruth], class: usize, iou: f64) -> Vec<(f64, bool)> {
    let mut order: Vec<&Detection> = dets.iter().filter(|d| d.class == class).collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut claimed = vec![false; gts.len()];
    order
        .into_iter()
        .map(|d| {
            let best = gts
                .iter()
                .enumerate()
                .filter(|(j, g)| g.class == class && !claimed[*j])
                .map(|(j, g)| (j, jaccard(&d.bbox, &g.bbox)))
                .filter(|&(_, o)| o >= iou)
                .max_by(|a, b| a.1.total_cmp(&b.1));
            match best {
                Some((j, _)) => {
                    claimed[j] = true;
                    (d.score, true)
                }
                None => (d.score, false),
            }
        })
        .collect()
}

/// All-point interpolated average precision for one class.
pub fn average_precision(dets: &[Detection], gts: &[GroundTruth], class: usize, iou: f64) -> f64 {
    let positives = gts.iter().filter(|g| g.class == class).count();
    if positives == 0 {
        return 0.0;
    }
    let flags = assign(dets, gts, class, iou);
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(flags.len());
    for (rank, (_, hit)) in flags.iter().enumerate() {
        tp += *hit as usize;
        points.push((tp as f64 / positives as f64, tp as f64 / (rank + 1) as f64));
    }
    // Precision envelope, then area under the recall steps.
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for i in 0..points.len() {
        let (recall, _) = points[i];
        if recall > prev_recall {
            let envelope = points[i..].iter().map(|p| p.1).fold(0.0, f64::max);
            ap += (recall - prev_recall) * envelope;
            prev_recall = recall;
        }
    }
    ap
}

/// Mean AP over the classes present in `gts`; 1 for an image with no
/// objects and no detections, 0 for false alarms on an empty image.
pub fn image_map(dets: &[Detection], gts: &[GroundTruth], iou: f64) -> f64 {
    let mut classes: Vec<usize> = gts.iter().map(|g| g.class).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.is_empty() {
        return if dets.is_empty() { 1.0 } else { 0.0 };
    }
    classes
        .iter()
        .map(|&c| average_precision(dets, gts, c, iou))
        .sum::<f64>()
        / classes.len() as f64
}

/// Ground truths matched by some same-class detection with IoU ≥ `iou`.
pub fn recovered(dets: &[Detection], gts: &[GroundTruth], iou: f64) -> Vec<bool> {
    gts.iter()
        .map(|g| {
            dets.iter()
                .any(|d| d.class == g.class && jaccard(&d.bbox, &g.bbox) >= iou)
        })
        .collect()
}
