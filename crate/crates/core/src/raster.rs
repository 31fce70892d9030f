//! Conversions between decoded RGB images and H×W×3 float tensors.

use image::{Rgb, RgbImage};
use urbani_nnet::Tensor;

/// Converts an RGB raster into an H×W×3 tensor, multiplying every
/// intensity by `scale`.
pub fn rgb_to_tensor(img: &RgbImage, scale: f64) -> Tensor {
    let (w, h) = img.dimensions();
    let data = img.as_raw().iter().map(|&v| v as f64 * scale).collect();
    Tensor::new(vec![h as usize, w as usize, 3], data).expect("rgb raster has 3 channels")
}

/// Converts an H×W×3 tensor of values in [0, 1] back into 8-bit RGB.
pub fn tensor_to_rgb(t: &Tensor) -> RgbImage {
    let (h, w) = (t.shape()[0], t.shape()[1]);
    let bytes = t
        .data()
        .iter()
        .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    RgbImage::from_raw(w as u32, h as u32, bytes).expect("tensor matches raster size")
}

/// Bilinear resampling with half-pixel centres and edge clamping.
///
/// Resizing to the same geometry returns the input unchanged.
pub fn resize_bilinear(t: &Tensor, out_h: usize, out_w: usize) -> Tensor {
    let (h, w, c) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    if h == out_h && w == out_w {
        return t.clone();
    }
    let src = t.data();
    let mut out = vec![0.0; out_h * out_w * c];
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    for oy in 0..out_h {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let ty = fy - y0 as f64;
        for ox in 0..out_w {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let tx = fx - x0 as f64;
            for ch in 0..c {
                let p = |y: usize, x: usize| src[(y * w + x) * c + ch];
                let top = p(y0, x0) * (1.0 - tx) + p(y0, x1) * tx;
                let bottom = p(y1, x0) * (1.0 - tx) + p(y1, x1) * tx;
                out[(oy * out_w + ox) * c + ch] = top * (1.0 - ty) + bottom * ty;
            }
        }
    }
    Tensor::new(vec![out_h, out_w, c], out).expect("resize output shape")
}

/// Bilinear sample at continuous pixel coordinates, clamped to the border.
pub(crate) fn sample_clamped(src: &[f64], h: usize, w: usize, c: usize, y: f64, x: f64, out: &mut [f64]) {
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (ty, tx) = (y - y0 as f64, x - x0 as f64);
    for (ch, o) in out.iter_mut().enumerate().take(c) {
        let p = |yy: usize, xx: usize| src[(yy * w + xx) * c + ch];
        let top = p(y0, x0) * (1.0 - tx) + p(y0, x1) * tx;
        let bottom = p(y1, x0) * (1.0 - tx) + p(y1, x1) * tx;
        *o = top * (1.0 - ty) + bottom * ty;
    }
}

/// Network input: resize to `side`×`side` and scale intensities to [0, 1].
pub fn preprocess(img: &RgbImage, side: usize) -> Tensor {
    resize_bilinear(&rgb_to_tensor(img, 1.0 / 255.0), side, side)
}

/// Fills the half-open pixel rectangle `[x0, x1) × [y0, y1)`.
pub fn fill_rect(img: &mut RgbImage, x0: u32, y0: u32, x1: u32, y1: u32, color: Rgb<u8>) {
    let (w, h) = img.dimensions();
    for y in y0.min(h)..y1.min(h) {
        for x in x0.min(w)..x1.min(w) {
            img.put_pixel(x, y, color);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_size_preprocess_only_scales() {
        let mut img = RgbImage::new(200, 200);
        img.put_pixel(3, 7, Rgb([255, 10, 0]));
        let t = preprocess(&img, 200);
        assert_eq!(t.shape(), &[200, 200, 3]);
        assert_eq!(t.at(&[7, 3, 0]), 1.0);
        assert_eq!(t.at(&[7, 3, 1]), 10.0 / 255.0);
    }

    #[test]
    fn constant_gray_stays_constant() {
        let img = RgbImage::from_pixel(37, 53, Rgb([128, 128, 128]));
        let t = preprocess(&img, 200);
        assert!(t.data().iter().all(|&v| (v - 128.0 / 255.0).abs() < 1e-15));
    }

    #[test]
    fn horizontal_gradient_stays_monotone() {
        let img = RgbImage::from_fn(400, 200, |x, _| {
            let v = (x * 255 / 399) as u8;
            Rgb([v, v, v])
        });
        let t = preprocess(&img, 200);
        assert_eq!(t.shape(), &[200, 200, 3]);
        for row in [0, 99, 199] {
            for col in 1..200 {
                assert!(t.at(&[row, col, 0]) >= t.at(&[row, col - 1, 0]));
            }
        }
        // Direct evaluation: output column c samples source x = 2c + 0.5.
        let src = rgb_to_tensor(&img, 1.0 / 255.0);
        let c = 57;
        let expected = 0.5 * (src.at(&[10, 2 * c, 0]) + src.at(&[10, 2 * c + 1, 0]));
        assert!((t.at(&[10, c, 0]) - expected).abs() < 1e-12);
    }
}
