//! Annotated copy of an image: detection outlines and a status banner.

use image::{Rgb, RgbImage};
use urbani_core::datasets::{PlanningLabel, SHAPE_COLORS};
use urbani_core::detector::Detection;
use urbani_core::raster::fill_rect;

const PLANNED_BANNER: Rgb<u8> = Rgb([40, 160, 60]);
const UNPLANNED_BANNER: Rgb<u8> = Rgb([200, 40, 40]);
const OTHER_CLASS: Rgb<u8> = Rgb([255, 255, 255]);

fn class_color(label: &str) -> Rgb<u8> {
    SHAPE_COLORS
        .iter()
        .find(|(name, _)| *name == label)
        .map_or(OTHER_CLASS, |(_, c)| Rgb(*c))
}

fn outline(img: &mut RgbImage, x0: u32, y0: u32, x1: u32, y1: u32, t: u32, color: Rgb<u8>) {
    fill_rect(img, x0, y0, x1, y0 + t, color);
    fill_rect(img, x0, y1.saturating_sub(t), x1, y1, color);
    fill_rect(img, x0, y0, x0 + t, y1, color);
    fill_rect(img, x1.saturating_sub(t), y0, x1, y1, color);
}

/// Same dimensions as the input.
pub fn annotate(image: &RgbImage, label: PlanningLabel, detections: &[Detection]) -> RgbImage {
    let mut out = image.clone();
    let (w, h) = out.dimensions();
    let t = (w.min(h) / 100).max(1);
    for d in detections {
        let b = d.bbox.scale(w as f64, h as f64);
        let (x0, y0) = (b.xmin.floor() as u32, b.ymin.floor() as u32);
        let (x1, y1) = ((b.xmax.ceil() as u32).min(w), (b.ymax.ceil() as u32).min(h));
        outline(&mut out, x0, y0, x1, y1, t, class_color(&d.label));
    }
    let banner = match label {
        PlanningLabel::Planned => PLANNED_BANNER,
        PlanningLabel::Unplanned => UNPLANNED_BANNER,
    };
    fill_rect(&mut out, 0, 0, w, (h / 16).max(2), banner);
    out
}
