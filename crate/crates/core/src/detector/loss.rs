//! Multibox objective: softmax confidence loss over positives and mined
//! negatives plus smooth-L1 localization loss over positives, normalized by
//! the number of matched default boxes.

use serde::{Deserialize, Serialize};
use urbani_nnet::ops::{log_softmax_slice, softmax_slice};
use urbani_nnet::Tensor;

use super::boxes::{encode_offsets, CenterBox};
use super::matching::{match_default_boxes, MatchAssignment};
use super::{DetectorError, GroundTruth};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiboxConfig {
    /// Weight of the localization term.
    pub alpha: f64,
    pub match_threshold: f64,
    /// Mined negatives per positive.
    pub neg_pos_ratio: f64,
}

impl Default for MultiboxConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            match_threshold: 0.5,
            neg_pos_ratio: 3.0,
        }
    }
}

pub fn smooth_l1(d: f64) -> f64 {
    if d.abs() < 1.0 {
        0.5 * d * d
    } else {
        d.abs() - 0.5
    }
}

pub fn smooth_l1_grad(d: f64) -> f64 {
    if d.abs() < 1.0 {
        d
    } else {
        d.signum()
    }
}

fn check_shapes(conf: &Tensor, loc: Option<&Tensor>, boxes: usize) -> Result<usize, DetectorError> {
    let shape = conf.shape();
    if shape.len() != 2 || shape[0] != boxes || shape[1] < 2 {
        return Err(DetectorError::ShapeMismatch(format!(
            "confidence logits {shape:?} for {boxes} default boxes"
        )));
    }
    if let Some(loc) = loc {
        if loc.shape() != [boxes, 4] {
            return Err(DetectorError::ShapeMismatch(format!(
                "location predictions {:?} for {boxes} default boxes",
                loc.shape()
            )));
        }
    }
    Ok(shape[1])
}

fn row(t: &Tensor, i: usize) -> &[f64] {
    let c = t.shape()[1];
    &t.data()[i * c..(i + 1) * c]
}

/// `-log ĉ_i^0` for every box.
pub fn background_losses(conf: &Tensor) -> Vec<f64> {
    (0..conf.shape()[0])
        .map(|i| -log_softmax_slice(row(conf, i))[0])
        .collect()
}

/// Negatives with the highest background loss, at most `ratio · |Pos|` of
/// them. Ties resolve to the lower index; the result is sorted by index.
pub fn hard_negative_mine(background_losses: &[f64], assignment: &MatchAssignment, ratio: f64) -> Vec<usize> {
    let budget = (ratio * assignment.num_positives() as f64).floor() as usize;
    let mut negatives: Vec<usize> = assignment.negatives().collect();
    negatives.sort_by(|&a, &b| background_losses[b].total_cmp(&background_losses[a]).then(a.cmp(&b)));
    negatives.truncate(budget);
    negatives.sort_unstable();
    negatives
}

/// `-Σ_{Pos} log ĉ_i^p - Σ_{neg_set} log ĉ_i^0`.
pub fn confidence_loss(conf: &Tensor, assignment: &MatchAssignment, neg_set: &[usize]) -> Result<f64, DetectorError> {
    check_shapes(conf, None, assignment.len())?;
    let mut total = 0.0;
    for (i, m) in assignment.positives() {
        total -= log_softmax_slice(row(conf, i))[m.class];
    }
    for &i in neg_set {
        if assignment.is_positive(i) {
            return Err(DetectorError::ShapeMismatch(format!(
                "mined negative {i} is a positive box"
            )));
        }
        total -= log_softmax_slice(row(conf, i))[0];
    }
    Ok(total)
}

/// `Σ_{Pos} Σ_m smooth_l1(l_i^m - ĝ_j^m)` with targets encoded against the
/// matched box's default box.
pub fn localization_loss(
    loc: &Tensor,
    gts: &[GroundTruth],
    defaults: &[CenterBox],
    assignment: &MatchAssignment,
) -> Result<f64, DetectorError> {
    if loc.shape() != [defaults.len(), 4] {
        return Err(DetectorError::ShapeMismatch(format!(
            "location predictions {:?} for {} default boxes",
            loc.shape(),
            defaults.len()
        )));
    }
    let mut total = 0.0;
    for (i, m) in assignment.positives() {
        let target = encode_offsets(&gts[m.truth].bbox.to_center(), &defaults[i])?;
        total += row(loc, i)
            .iter()
            .zip(&target)
            .map(|(l, g)| smooth_l1(l - g))
            .sum::<f64>();
    }
    Ok(total)
}

/// Loss value for one image, with the quantities that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiboxLoss {
    /// `(L_conf + α L_loc) / N`, or 0 when `N = 0`.
    pub total: f64,
    pub confidence: f64,
    pub localization: f64,
    pub num_positives: usize,
    pub assignment: MatchAssignment,
    pub negatives: Vec<usize>,
}

/// Unnormalized terms and their gradients for one image, so a batch can be
/// normalized by the total number of positives.
#[derive(Debug, Clone)]
pub struct MultiboxTerms {
    pub loss: MultiboxLoss,
    /// d(L_conf + α L_loc)/d conf, same shape as the logits.
    pub grad_conf: Tensor,
    /// d(L_conf + α L_loc)/d loc.
    pub grad_loc: Tensor,
}

pub fn multibox_terms(
    conf: &Tensor,
    loc: &Tensor,
    gts: &[GroundTruth],
    defaults: &[CenterBox],
    config: &MultiboxConfig,
) -> Result<MultiboxTerms, DetectorError> {
    let classes = check_shapes(conf, Some(loc), defaults.len())?;
    for g in gts {
        if g.class == 0 || g.class >= classes {
            return Err(DetectorError::ShapeMismatch(format!(
                "ground-truth class {} outside 1..{classes}",
                g.class
            )));
        }
    }
    let assignment = match_default_boxes(gts, defaults, config.match_threshold);
    let negatives = hard_negative_mine(&background_losses(conf), &assignment, config.neg_pos_ratio);

    let mut grad_conf = Tensor::zeros(conf.shape());
    let mut grad_loc = Tensor::zeros(loc.shape());
    let mut conf_sum = 0.0;
    let mut loc_sum = 0.0;

    let mut add_conf = |i: usize, target: usize, grad: &mut Tensor| {
        let logits = row(conf, i);
        conf_sum -= log_softmax_slice(logits)[target];
        let p = softmax_slice(logits);
        let g = &mut grad.data_mut()[i * classes..(i + 1) * classes];
        for (k, (gv, pv)) in g.iter_mut().zip(p).enumerate() {
            *gv = pv - if k == target { 1.0 } else { 0.0 };
        }
    };
    for (i, m) in assignment.positives() {
        add_conf(i, m.class, &mut grad_conf);
    }
    for &i in &negatives {
        add_conf(i, 0, &mut grad_conf);
    }

    for (i, m) in assignment.positives() {
        let target = encode_offsets(&gts[m.truth].bbox.to_center(), &defaults[i])?;
        let pred = row(loc, i).to_vec();
        let g = &mut grad_loc.data_mut()[i * 4..(i + 1) * 4];
        for k in 0..4 {
            let d = pred[k] - target[k];
            loc_sum += smooth_l1(d);
            g[k] = config.alpha * smooth_l1_grad(d);
        }
    }

    let num_positives = assignment.num_positives();
    let total = if num_positives == 0 {
        0.0
    } else {
        (conf_sum + config.alpha * loc_sum) / num_positives as f64
    };
    Ok(MultiboxTerms {
        loss: MultiboxLoss {
            total,
            confidence: conf_sum,
            localization: loc_sum,
            num_positives,
            assignment,
            negatives,
        },
        grad_conf,
        grad_loc,
    })
}

/// `(1/N)(L_conf + α L_loc)`; 0 when no default box is matched.
pub fn multibox_loss(
    conf: &Tensor,
    loc: &Tensor,
    gts: &[GroundTruth],
    defaults: &[CenterBox],
    config: &MultiboxConfig,
) -> Result<MultiboxLoss, DetectorError> {
    multibox_terms(conf, loc, gts, defaults, config).map(|t| t.loss)
}

/// Gradients of [`multibox_loss`] with respect to logits and offsets.
pub fn multibox_loss_grad(
    conf: &Tensor,
    loc: &Tensor,
    gts: &[GroundTruth],
    defaults: &[CenterBox],
    config: &MultiboxConfig,
) -> Result<(MultiboxLoss, Tensor, Tensor), DetectorError> {
    let MultiboxTerms {
        loss,
        mut grad_conf,
        mut grad_loc,
    } = multibox_terms(conf, loc, gts, defaults, config)?;
    let scale = if loss.num_positives == 0 {
        0.0
    } else {
        1.0 / loss.num_positives as f64
    };
    for v in grad_conf.data_mut().iter_mut().chain(grad_loc.data_mut()) {
        *v *= scale;
    }
    Ok((loss, grad_conf, grad_loc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::boxes::Bbox;
    use crate::detector::matching::MatchedBox;

    fn assignment(matches: Vec<Option<(usize, usize)>>) -> MatchAssignment {
        MatchAssignment {
            matches: matches
                .into_iter()
                .map(|m| m.map(|(truth, class)| MatchedBox { truth, class }))
                .collect(),
        }
    }

    #[test]
    fn smooth_l1_examples() {
        assert_eq!(smooth_l1(0.0), 0.0);
        assert_eq!(smooth_l1(0.5), 0.125);
        assert_eq!(smooth_l1(2.0), 1.5);
        assert_eq!(smooth_l1(-2.0), 1.5);
        // Value and slope agree on both sides of |d| = 1.
        assert!((smooth_l1(1.0 - 1e-12) - smooth_l1(1.0)).abs() < 1e-11);
        assert!((smooth_l1_grad(1.0 - 1e-12) - smooth_l1_grad(1.0)).abs() < 1e-11);
    }

    #[test]
    fn hard_negative_examples() {
        let losses = [0.1, 5.0, 0.3, 4.0, 0.2, 9.0, 0.0, 1.0, 3.0, 0.5, 2.0];
        let mut m = vec![None; 11];
        m[0] = Some((0, 1));
        let a = assignment(m);
        let mined = hard_negative_mine(&losses, &a, 3.0);
        let mut oracle: Vec<usize> = (1..11).collect();
        oracle.sort_by(|&x, &y| losses[y].partial_cmp(&losses[x]).unwrap());
        let mut top3 = oracle[..3].to_vec();
        top3.sort();
        assert_eq!(mined, top3);
        assert_eq!(mined, vec![1, 3, 5]);

        let none = assignment(vec![None; 5]);
        assert!(hard_negative_mine(&[1.0; 5], &none, 3.0).is_empty());

        let few = assignment(vec![Some((0, 1)), None, Some((0, 1)), None]);
        assert_eq!(hard_negative_mine(&[0.0; 4], &few, 3.0), vec![1, 3]);
    }

    #[test]
    fn confidence_loss_examples() {
        // Logit gap ln((1 - 1e-12)/1e-12) gives probability 1 - 1e-12.
        let gap = ((1.0 - 1e-12) / 1e-12f64).ln();
        let conf = Tensor::new(vec![1, 2], vec![0.0, gap]).unwrap();
        let l = confidence_loss(&conf, &assignment(vec![Some((0, 1))]), &[]).unwrap();
        assert!(l.abs() < 1e-11);

        let k = 4;
        let uniform = Tensor::zeros(&[1, k + 1]);
        let l = confidence_loss(&uniform, &assignment(vec![None]), &[0]).unwrap();
        assert!((l - ((k + 1) as f64).ln()).abs() < 1e-14);

        assert!(confidence_loss(&uniform, &assignment(vec![None, None]), &[]).is_err());
    }

    #[test]
    fn localization_loss_examples() {
        let defaults = vec![CenterBox::new(0.3, 0.3, 0.2, 0.2), CenterBox::new(0.7, 0.7, 0.2, 0.4)];
        let gts = vec![
            GroundTruth {
                bbox: Bbox::new(0.2, 0.2, 0.45, 0.4),
                class: 1,
            },
            GroundTruth {
                bbox: Bbox::new(0.55, 0.5, 0.8, 0.95),
                class: 2,
            },
        ];
        let a = assignment(vec![Some((0, 1)), Some((1, 2))]);
        let t0 = encode_offsets(&gts[0].bbox.to_center(), &defaults[0]).unwrap();
        let t1 = encode_offsets(&gts[1].bbox.to_center(), &defaults[1]).unwrap();
        let exact = Tensor::new(vec![2, 4], [t0, t1].concat()).unwrap();
        assert_eq!(localization_loss(&exact, &gts, &defaults, &a).unwrap(), 0.0);
        assert_eq!(
            localization_loss(&exact, &gts, &defaults, &assignment(vec![None, None])).unwrap(),
            0.0
        );
        let offsets = [0.3, -1.5, 0.0, 2.0, -0.2, 0.7, 0.1, -0.05];
        let preds: Vec<f64> = [t0, t1].concat().iter().zip(offsets).map(|(t, o)| t + o).collect();
        let by_term: f64 = offsets
            .iter()
            .map(|&o| if o.abs() < 1.0 { 0.5 * o * o } else { o.abs() - 0.5 })
            .sum();
        let l = localization_loss(&Tensor::new(vec![2, 4], preds).unwrap(), &gts, &defaults, &a).unwrap();
        assert!((l - by_term).abs() < 1e-12);
    }

    #[test]
    fn multibox_normalization() {
        let defaults = vec![
            CenterBox::new(0.25, 0.25, 0.5, 0.5),
            CenterBox::new(0.75, 0.75, 0.5, 0.5),
            CenterBox::new(0.5, 0.5, 0.3, 0.3),
        ];
        let conf = Tensor::new(vec![3, 3], vec![0.2, 0.5, -0.3, 1.0, 0.0, 0.4, -0.7, 0.3, 0.9]).unwrap();
        let loc = Tensor::new(vec![3, 4], vec![0.1; 12]).unwrap();
        let empty = multibox_loss(&conf, &loc, &[], &defaults, &MultiboxConfig::default()).unwrap();
        assert_eq!(empty.total, 0.0);
        assert_eq!(empty.num_positives, 0);

        let gts = vec![GroundTruth {
            bbox: defaults[0].to_corners(),
            class: 2,
        }];
        let no_loc = MultiboxConfig {
            alpha: 0.0,
            ..MultiboxConfig::default()
        };
        let l = multibox_loss(&conf, &loc, &gts, &defaults, &no_loc).unwrap();
        assert_eq!(l.total, l.confidence / l.num_positives as f64);
    }
}
