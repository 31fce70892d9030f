//! Box representations, Jaccard overlap, and offset encoding against
//! default boxes.

use serde::{Deserialize, Serialize};

use super::DetectorError;

/// Corner-form box `(xmin, ymin, xmax, ymax)`.
///
/// Detector code uses normalized image coordinates; dataset code uses the
/// same type in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bbox {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

/// Centre-form box `(cx, cy, w, h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl Bbox {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        Self { xmin, ymin, xmax, ymax }
    }

    pub fn width(&self) -> f64 {
        (self.xmax - self.xmin).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.ymax - self.ymin).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn is_valid(&self) -> bool {
        self.xmin <= self.xmax && self.ymin <= self.ymax
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.xmin + self.xmax), 0.5 * (self.ymin + self.ymax))
    }

    pub fn to_center(&self) -> CenterBox {
        let (cx, cy) = self.center();
        CenterBox {
            cx,
            cy,
            w: self.xmax - self.xmin,
            h: self.ymax - self.ymin,
        }
    }

    pub fn clip_unit(&self) -> Self {
        self.clip(1.0, 1.0)
    }

    pub fn clip(&self, max_x: f64, max_y: f64) -> Self {
        Self {
            xmin: self.xmin.clamp(0.0, max_x),
            ymin: self.ymin.clamp(0.0, max_y),
            xmax: self.xmax.clamp(0.0, max_x),
            ymax: self.ymax.clamp(0.0, max_y),
        }
    }

    pub fn scale(&self, sx: f64, sy: f64) -> Self {
        Self {
            xmin: self.xmin * sx,
            ymin: self.ymin * sy,
            xmax: self.xmax * sx,
            ymax: self.ymax * sy,
        }
    }

    pub fn intersection(&self, other: &Bbox) -> f64 {
        let w = self.xmax.min(other.xmax) - self.xmin.max(other.xmin);
        let h = self.ymax.min(other.ymax) - self.ymin.max(other.ymin);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }
}

impl CenterBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { cx, cy, w, h }
    }

    pub fn to_corners(&self) -> Bbox {
        Bbox {
            xmin: self.cx - 0.5 * self.w,
            ymin: self.cy - 0.5 * self.h,
            xmax: self.cx + 0.5 * self.w,
            ymax: self.cy + 0.5 * self.h,
        }
    }
}

impl From<CenterBox> for Bbox {
    fn from(b: CenterBox) -> Self {
        b.to_corners()
    }
}

impl From<Bbox> for CenterBox {
    fn from(b: Bbox) -> Self {
        b.to_center()
    }
}

/// Intersection over union; 0 when the union has zero area.
pub fn jaccard(a: &Bbox, b: &Bbox) -> f64 {
    let inter = a.intersection(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Regression target of ground truth `g` relative to default box `d`.
pub fn encode_offsets(g: &CenterBox, d: &CenterBox) -> Result<[f64; 4], DetectorError> {
    if !(g.w > 0.0 && g.h > 0.0) {
        return Err(DetectorError::DegenerateBox(format!(
            "ground truth {g:?} has zero area"
        )));
    }
    if !(d.w > 0.0 && d.h > 0.0) {
        return Err(DetectorError::DegenerateBox(format!("default box {d:?} has zero area")));
    }
    Ok([
        (g.cx - d.cx) / d.w,
        (g.cy - d.cy) / d.h,
        (g.w / d.w).ln(),
        (g.h / d.h).ln(),
    ])
}

/// Inverse of [`encode_offsets`].
pub fn decode_offsets(l: &[f64; 4], d: &CenterBox) -> CenterBox {
    CenterBox {
        cx: l[0] * d.w + d.cx,
        cy: l[1] * d.h + d.cy,
        w: d.w * l[2].exp(),
        h: d.h * l[3].exp(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn jaccard_examples() {
        let a = Bbox::new(0.1, 0.2, 0.5, 0.9);
        assert_eq!(jaccard(&a, &a), 1.0);
        assert_eq!(jaccard(&a, &Bbox::new(0.6, 0.0, 0.9, 0.1)), 0.0);
        // Touching edges share no area.
        assert_eq!(jaccard(&Bbox::new(0., 0., 1., 1.), &Bbox::new(1., 0., 2., 1.)), 0.0);
        let zero = Bbox::new(0.3, 0.3, 0.3, 0.3);
        assert_eq!(jaccard(&zero, &zero), 0.0);
    }

    #[test]
    fn jaccard_matches_pixel_count() {
        // Rasterize unit pixels: intersection 1 pixel, union 4 + 4 - 1 = 7.
        let a = Bbox::new(0.0, 0.0, 2.0, 2.0);
        let b = Bbox::new(1.0, 1.0, 3.0, 3.0);
        let inside = |r: &Bbox, x: usize, y: usize| {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            px > r.xmin && px < r.xmax && py > r.ymin && py < r.ymax
        };
        let (mut inter, mut union) = (0, 0);
        for y in 0..4 {
            for x in 0..4 {
                let (ia, ib) = (inside(&a, x, y), inside(&b, x, y));
                inter += (ia && ib) as usize;
                union += (ia || ib) as usize;
            }
        }
        assert_eq!((inter, union), (1, 7));
        assert!((jaccard(&a, &b) - inter as f64 / union as f64).abs() < 1e-15);
    }

    #[test]
    fn encoding_examples() {
        let d = CenterBox::new(0.4, 0.5, 0.2, 0.3);
        assert_eq!(encode_offsets(&d, &d).unwrap(), [0.0; 4]);
        let g = CenterBox::new(0.4, 0.5, 0.4, 0.3);
        let l = encode_offsets(&g, &d).unwrap();
        assert!((l[2] - 2f64.ln()).abs() < 1e-15);
        assert_eq!(decode_offsets(&[0.0; 4], &d), d);
        let doubled = decode_offsets(&[0.0, 0.0, 2f64.ln(), 0.0], &d);
        assert!((doubled.w - 0.4).abs() < 1e-15);
        assert!(encode_offsets(&CenterBox::new(0.5, 0.5, 0.0, 0.1), &d).is_err());
    }

    fn arb_box() -> impl Strategy<Value = Bbox> {
        (0.0f64..1.0, 0.0f64..1.0, 1e-3f64..1.0, 1e-3f64..1.0).prop_map(|(x, y, w, h)| Bbox::new(x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn jaccard_symmetric_in_range(a in arb_box(), b in arb_box()) {
            let ab = jaccard(&a, &b);
            prop_assert_eq!(ab, jaccard(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((jaccard(&a, &a) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn encode_decode_inverse(g in arb_box(), d in arb_box()) {
            let (gc, dc) = (g.to_center(), d.to_center());
            let back = decode_offsets(&encode_offsets(&gc, &dc).unwrap(), &dc);
            prop_assert!((back.cx - gc.cx).abs() < 1e-9);
            prop_assert!((back.cy - gc.cy).abs() < 1e-9);
            prop_assert!((back.w - gc.w).abs() < 1e-9);
            prop_assert!((back.h - gc.h).abs() < 1e-9);
        }

        #[test]
        fn corner_center_round_trip(b in arb_box()) {
            let back = b.to_center().to_corners();
            prop_assert!((back.xmin - b.xmin).abs() < 1e-12 && (back.ymax - b.ymax).abs() < 1e-12);
        }

        #[test]
        fn jaccard_scale_invariant(a in arb_box(), b in arb_box(), s in 0.5f64..400.0) {
            let scaled = jaccard(&a.scale(s, s), &b.scale(s, s));
            prop_assert!((scaled - jaccard(&a, &b)).abs() < 1e-9);
        }
    }
}
