//! Random crop augmentation constrained by Jaccard overlap with the
//! ground-truth objects.

use image::{imageops, RgbImage};
use rand::Rng;

use super::boxes::{jaccard, Bbox};
use super::GroundTruth;

/// Overlap thresholds drawn by [`PatchConstraint::random`].
pub const MIN_JACCARD_CHOICES: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

/// Number of candidate patches tried before falling back to the whole image.
pub const PATCH_TRIALS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PatchConstraint {
    WholeImage,
    /// The patch must overlap at least one ground truth by this Jaccard.
    MinJaccard(f64),
    /// Any patch keeping at least one object centre.
    Unconstrained,
}

impl PatchConstraint {
    /// Uniform choice among whole image, each `MIN_JACCARD_CHOICES` value,
    /// and an unconstrained patch.
    pub fn random(rng: &mut impl Rng) -> Self {
        match rng.gen_range(0..MIN_JACCARD_CHOICES.len() + 2) {
            0 => PatchConstraint::WholeImage,
            1 => PatchConstraint::Unconstrained,
            k => PatchConstraint::MinJaccard(MIN_JACCARD_CHOICES[k - 2]),
        }
    }
}

/// Samples a patch of `image` satisfying `constraint`.
///
/// `gts` are in normalized image coordinates; the returned ground truths are
/// clipped and re-normalized to the patch, keeping only objects whose centre
/// lies inside it. Falls back to the whole image when no candidate satisfies
/// the constraint within [`PATCH_TRIALS`] attempts.
pub fn sample_patch(
    image: &RgbImage,
    gts: &[GroundTruth],
    constraint: PatchConstraint,
    rng: &mut impl Rng,
) -> (RgbImage, Vec<GroundTruth>) {
    let (w, h) = image.dimensions();
    let whole = || (image.clone(), gts.to_vec());
    if constraint == PatchConstraint::WholeImage || w < 2 || h < 2 {
        return whole();
    }
    for _ in 0..PATCH_TRIALS {
        let pw = ((rng.gen_range(0.3..=1.0) * w as f64).round() as u32).clamp(1, w);
        let ph = ((rng.gen_range(0.3..=1.0) * h as f64).round() as u32).clamp(1, h);
        let aspect = pw as f64 / ph as f64;
        if !(0.5..=2.0).contains(&aspect) {
            continue;
        }
        let x0 = rng.gen_range(0..=w - pw);
        let y0 = rng.gen_range(0..=h - ph);
        let rect = Bbox::new(
            x0 as f64 / w as f64,
            y0 as f64 / h as f64,
            (x0 + pw) as f64 / w as f64,
            (y0 + ph) as f64 / h as f64,
        );
        if let PatchConstraint::MinJaccard(min) = constraint {
            if !gts.iter().any(|g| jaccard(&rect, &g.bbox) >= min) {
                continue;
            }
        }
        let remapped = remap_into(&rect, gts);
        if !gts.is_empty() && remapped.is_empty() {
            continue;
        }
        let crop = imageops::crop_imm(image, x0, y0, pw, ph).to_image();
        return (crop, remapped);
    }
    whole()
}

fn remap_into(rect: &Bbox, gts: &[GroundTruth]) -> Vec<GroundTruth> {
    let (rw, rh) = (rect.width(), rect.height());
    gts.iter()
        .filter(|g| {
            let (cx, cy) = g.bbox.center();
            cx > rect.xmin && cx < rect.xmax && cy > rect.ymin && cy < rect.ymax
        })
        .map(|g| {
            let b = Bbox::new(
                (g.bbox.xmin - rect.xmin) / rw,
                (g.bbox.ymin - rect.ymin) / rh,
                (g.bbox.xmax - rect.xmin) / rw,
                (g.bbox.ymax - rect.ymin) / rh,
            );
            GroundTruth {
                bbox: b.clip_unit(),
                class: g.class,
            }
        })
        .filter(|g| g.bbox.area() > 0.0)
        .collect()
}
