use super::boxes::{jaccard, Bbox, CenterBox};
use super::GroundTruth;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchedBox {
    /// Index into the ground-truth list.
    pub truth: usize,
    /// Class of that ground truth (never background).
    pub class: usize,
}

/// Pairing of default boxes with ground truths; unmatched boxes are
/// negatives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchAssignment {
    pub matches: Vec<Option<MatchedBox>>,
}

impl MatchAssignment {
    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn positives(&self) -> impl Iterator<Item = (usize, MatchedBox)> + '_ {
        self.matches.iter().enumerate().filter_map(|(i, m)| m.map(|m| (i, m)))
    }

    pub fn negatives(&self) -> impl Iterator<Item = usize> + '_ {
        self.matches
            .iter()
            .enumerate()
            .filter_map(|(i, m)| m.is_none().then_some(i))
    }

    pub fn num_positives(&self) -> usize {
        self.matches.iter().filter(|m| m.is_some()).count()
    }

    pub fn is_positive(&self, i: usize) -> bool {
        self.matches[i].is_some()
    }
}

/// Matches default boxes to ground truths.
///
/// Every default box whose best overlap exceeds `threshold` takes that
/// ground truth. Each ground truth is then force-matched to its
/// highest-overlap default box, so no ground truth is left without a
/// positive; when two ground truths share a best box, the higher-overlap
/// pair wins and the other takes its best remaining box. Ties go to the
/// lowest index.
pub fn match_default_boxes(gts: &[GroundTruth], defaults: &[CenterBox], threshold: f64) -> MatchAssignment {
    let corners: Vec<Bbox> = defaults.iter().map(CenterBox::to_corners).collect();
    let overlaps: Vec<Vec<f64>> = gts
        .iter()
        .map(|g| corners.iter().map(|d| jaccard(&g.bbox, d)).collect())
        .collect();

    let mut matches: Vec<Option<MatchedBox>> = vec![None; defaults.len()];
    if gts.is_empty() {
        return MatchAssignment { matches };
    }

    for (i, slot) in matches.iter_mut().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (j, row) in overlaps.iter().enumerate() {
            if best.is_none_or(|(_, o)| row[i] > o) {
                best = Some((j, row[i]));
            }
        }
        if let Some((j, o)) = best {
            if o > threshold {
                *slot = Some(MatchedBox {
                    truth: j,
                    class: gts[j].class,
                });
            }
        }
    }

    let mut claimed = vec![false; defaults.len()];
    let mut forced = vec![false; gts.len()];
    for _ in 0..gts.len().min(defaults.len()) {
        let mut best: Option<(usize, usize, f64)> = None;
        for (j, row) in overlaps.iter().enumerate() {
            if forced[j] {
                continue;
            }
            for (i, &o) in row.iter().enumerate() {
                if !claimed[i] && best.is_none_or(|(_, _, b)| o > b) {
                    best = Some((j, i, o));
                }
            }
        }
        let Some((j, i, _)) = best else { break };
        forced[j] = true;
        claimed[i] = true;
        matches[i] = Some(MatchedBox {
            truth: j,
            class: gts[j].class,
        });
    }
    MatchAssignment { matches }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt(b: Bbox, class: usize) -> GroundTruth {
        GroundTruth { bbox: b, class }
    }

    #[test]
    fn exact_default_is_the_only_positive() {
        let defaults = vec![
            CenterBox::new(0.25, 0.25, 0.5, 0.5),
            CenterBox::new(0.75, 0.75, 0.5, 0.5),
            CenterBox::new(0.5, 0.5, 0.1, 0.1),
        ];
        let a = match_default_boxes(&[gt(defaults[1].to_corners(), 2)], &defaults, 0.5);
        assert_eq!(a.num_positives(), 1);
        assert_eq!(a.matches[1], Some(MatchedBox { truth: 0, class: 2 }));
        assert_eq!(a.negatives().collect::<Vec<_>>(), vec![0, 2]);
    }

    #[test]
    fn empty_ground_truth_gives_all_negatives() {
        let defaults = vec![CenterBox::new(0.5, 0.5, 0.2, 0.2); 4];
        let a = match_default_boxes(&[], &defaults, 0.5);
        assert_eq!(a.num_positives(), 0);
        assert_eq!(a.negatives().count(), 4);
    }

    #[test]
    fn forced_match_ignores_threshold() {
        let defaults = vec![CenterBox::new(0.5, 0.5, 0.2, 0.2), CenterBox::new(0.1, 0.1, 0.1, 0.1)];
        let truth = gt(Bbox::new(0.3, 0.3, 0.9, 0.9), 1);
        let a = match_default_boxes(&[truth], &defaults, 0.99);
        assert_eq!(a.positives().map(|(i, _)| i).collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn shared_best_box_still_leaves_every_truth_matched() {
        let defaults = vec![CenterBox::new(0.5, 0.5, 0.4, 0.4), CenterBox::new(0.9, 0.9, 0.05, 0.05)];
        let gts = [
            gt(Bbox::new(0.3, 0.3, 0.7, 0.7), 1),
            gt(Bbox::new(0.32, 0.3, 0.7, 0.7), 3),
        ];
        let a = match_default_boxes(&gts, &defaults, 0.5);
        let mut truths: Vec<usize> = a.positives().map(|(_, m)| m.truth).collect();
        truths.sort();
        truths.dedup();
        assert_eq!(truths, vec![0, 1]);
    }
}
