use super::boxes::jaccard;
use super::Detection;

/// Greedy non-maximum suppression over one class.
///
/// Detections are visited in descending score order (stable for ties); a
/// detection is kept unless it overlaps an already kept one by more than
/// `iou_threshold`. At most `top_k` detections are returned.
pub fn nms(dets: &[Detection], iou_threshold: f64, top_k: usize) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    let mut kept: Vec<Detection> = Vec::new();
    for i in order {
        if kept.len() >= top_k {
            break;
        }
        let d = &dets[i];
        if kept.iter().all(|k| jaccard(&k.bbox, &d.bbox) <= iou_threshold) {
            kept.push(d.clone());
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::boxes::Bbox;

    fn det(score: f64, b: Bbox) -> Detection {
        Detection {
            class: 1,
            label: "person".into(),
            score,
            bbox: b,
        }
    }

    #[test]
    fn identical_boxes_keep_highest() {
        let b = Bbox::new(0.1, 0.1, 0.4, 0.4);
        let out = nms(&[det(0.8, b), det(0.9, b)], 0.45, 200);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].score, 0.9);
    }

    #[test]
    fn disjoint_boxes_survive_up_to_top_k() {
        let dets: Vec<_> = (0..5)
            .map(|i| {
                let x = i as f64 * 0.2;
                det(0.5 + i as f64 * 0.01, Bbox::new(x, 0.0, x + 0.1, 0.1))
            })
            .collect();
        assert_eq!(nms(&dets, 0.45, 200).len(), 5);
        let top = nms(&dets, 0.45, 3);
        assert_eq!(top.iter().map(|d| d.score).collect::<Vec<_>>(), vec![0.54, 0.53, 0.52]);
    }
}
