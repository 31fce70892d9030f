use serde::{Deserialize, Serialize};

use super::boxes::CenterBox;
use super::DetectorError;

/// Layout of default boxes over a pyramid of square feature maps.
///
/// `scales[k]` is the box scale of level `k`. When `extra_box` is set each
/// cell also emits a ratio-1 box of scale `sqrt(s_k * s_{k+1})`, where the
/// scale after the last level is `scales[levels]` if given, else 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefaultBoxSpec {
    pub grid_sizes: Vec<usize>,
    pub scales: Vec<f64>,
    pub aspect_ratios: Vec<f64>,
    pub extra_box: bool,
}

impl DefaultBoxSpec {
    /// Linearly spaced scales `s_k = s_min + (s_max - s_min)(k - 1)/(m - 1)`.
    pub fn from_scale_range(
        grid_sizes: Vec<usize>,
        s_min: f64,
        s_max: f64,
        aspect_ratios: Vec<f64>,
        extra_box: bool,
    ) -> Self {
        let m = grid_sizes.len();
        let scales = if m <= 1 {
            vec![s_min]
        } else {
            (0..m)
                .map(|k| s_min + (s_max - s_min) * k as f64 / (m - 1) as f64)
                .collect()
        };
        Self {
            grid_sizes,
            scales,
            aspect_ratios,
            extra_box,
        }
    }

    pub fn levels(&self) -> usize {
        self.grid_sizes.len()
    }

    pub fn boxes_per_cell(&self) -> usize {
        self.aspect_ratios.len() + self.extra_box as usize
    }

    pub fn total_boxes(&self) -> usize {
        self.grid_sizes.iter().map(|f| f * f).sum::<usize>() * self.boxes_per_cell()
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        let bad = |m: String| Err(DetectorError::InvalidConfig(m));
        let m = self.levels();
        if m == 0 {
            return bad("at least one feature map is required".into());
        }
        if self.grid_sizes.contains(&0) {
            return bad("feature-map grid sizes must be positive".into());
        }
        if self.scales.len() != m && self.scales.len() != m + 1 {
            return bad(format!(
                "{} scales for {m} feature maps (expected {m} or {})",
                self.scales.len(),
                m + 1
            ));
        }
        if self.scales.iter().any(|&s| !(s > 0.0 && s <= 1.0)) {
            return bad(format!("scales {:?} must lie in (0, 1]", self.scales));
        }
        if self.scales.windows(2).any(|w| w[1] <= w[0]) {
            return bad(format!("scales {:?} must be strictly increasing", self.scales));
        }
        if self.aspect_ratios.is_empty() || self.aspect_ratios.iter().any(|&a| !a.is_finite() || a <= 0.0) {
            return bad("aspect ratios must be a non-empty set of positive values".into());
        }
        Ok(())
    }

    fn next_scale(&self, k: usize) -> f64 {
        self.scales.get(k + 1).copied().unwrap_or(1.0)
    }
}

/// Default boxes in centre form, ordered level-major, then row-major over
/// the grid, then by aspect ratio with the extra box last.
pub fn generate_default_boxes(spec: &DefaultBoxSpec) -> Result<Vec<CenterBox>, DetectorError> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.total_boxes());
    for (k, &f) in spec.grid_sizes.iter().enumerate() {
        let s = spec.scales[k];
        let extra = (s * spec.next_scale(k)).sqrt();
        for i in 0..f {
            let cy = (i as f64 + 0.5) / f as f64;
            for j in 0..f {
                let cx = (j as f64 + 0.5) / f as f64;
                for &a in &spec.aspect_ratios {
                    let r = a.sqrt();
                    out.push(CenterBox::new(cx, cy, s * r, s / r));
                }
                if spec.extra_box {
                    out.push(CenterBox::new(cx, cy, extra, extra));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_single_ratio() {
        let spec = DefaultBoxSpec {
            grid_sizes: vec![1],
            scales: vec![0.5],
            aspect_ratios: vec![1.0],
            extra_box: false,
        };
        assert_eq!(
            generate_default_boxes(&spec).unwrap(),
            vec![CenterBox::new(0.5, 0.5, 0.5, 0.5)]
        );
    }

    #[test]
    fn count_matches_enumeration() {
        let spec = DefaultBoxSpec {
            grid_sizes: vec![2],
            scales: vec![0.3, 0.6],
            aspect_ratios: vec![1.0, 2.0, 0.5],
            extra_box: true,
        };
        let boxes = generate_default_boxes(&spec).unwrap();
        let mut enumerated = 0;
        for _row in 0..2 {
            for _col in 0..2 {
                enumerated += spec.aspect_ratios.len() + 1;
            }
        }
        assert_eq!(boxes.len(), enumerated);
        assert_eq!(boxes.len(), 16);
        // Ratio 2 is the second box of each cell.
        assert!((boxes[1].w / boxes[1].h - 2.0).abs() < 1e-12);
        assert!((boxes[3].w - (0.3f64 * 0.6).sqrt()).abs() < 1e-15);
        // Row-major: the second cell advances in x.
        assert_eq!((boxes[4].cx, boxes[4].cy), (0.75, 0.25));
        assert_eq!((boxes[8].cx, boxes[8].cy), (0.25, 0.75));
    }

    #[test]
    fn scale_range_and_validation() {
        let spec = DefaultBoxSpec::from_scale_range(vec![8, 4, 2], 0.2, 0.8, vec![1.0], true);
        assert_eq!(spec.scales.len(), 3);
        assert!((spec.scales[1] - 0.5).abs() < 1e-15);
        assert_eq!(generate_default_boxes(&spec).unwrap().len(), (64 + 16 + 4) * 2);

        let mut bad = spec.clone();
        bad.scales = vec![0.5, 0.4, 0.9];
        assert!(generate_default_boxes(&bad).is_err());
        bad.scales = vec![0.2, 0.5, 1.2];
        assert!(generate_default_boxes(&bad).is_err());
        bad.scales = vec![0.2];
        assert!(generate_default_boxes(&bad).is_err());
    }
}
