//! Dataset loading, splitting, augmentation and synthetic generators.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::{ImageReader, Rgb, RgbImage};
use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use urbani_nnet::Tensor;
use walkdir::WalkDir;

use crate::detector::{Bbox, GroundTruth, TrainingImage};
use crate::raster::{fill_rect, rgb_to_tensor, sample_clamped};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing directory {0}")]
    MissingFolder(PathBuf),
    #[error("no decodable images under {0}")]
    NoImages(PathBuf),
    #[error("cannot decode {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed annotation {file}: field `{field}`: {message}")]
    MalformedAnnotation {
        file: PathBuf,
        field: String,
        message: String,
    },
    #[error("unknown class `{class}` in {file}")]
    UnknownClass { file: PathBuf, class: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanningLabel {
    Planned = 0,
    Unplanned = 1,
}

impl PlanningLabel {
    pub const ALL: [PlanningLabel; 2] = [PlanningLabel::Planned, PlanningLabel::Unplanned];

    pub fn folder(self) -> &'static str {
        match self {
            PlanningLabel::Planned => "planned",
            PlanningLabel::Unplanned => "unplanned",
        }
    }

    /// Training target of the sigmoid output.
    pub fn target(self) -> f64 {
        self as u8 as f64
    }
}

/// Where an example's pixels come from.
#[derive(Debug, Clone)]
pub enum ImageSource {
    File(PathBuf),
    Memory(Arc<RgbImage>),
}

impl ImageSource {
    pub fn load(&self) -> Result<RgbImage, DatasetError> {
        match self {
            ImageSource::File(p) => decode_image(p),
            ImageSource::Memory(img) => Ok((**img).clone()),
        }
    }

    pub fn path(&self) -> Option<&Path> {
        match self {
            ImageSource::File(p) => Some(p),
            ImageSource::Memory(_) => None,
        }
    }
}

pub fn decode_image(path: &Path) -> Result<RgbImage, DatasetError> {
    let reader = ImageReader::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = reader.with_guessed_format().map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let img = reader.decode().map_err(|e| DatasetError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if img.width() == 0 || img.height() == 0 {
        return Err(DatasetError::Decode {
            path: path.to_path_buf(),
            message: "empty image".into(),
        });
    }
    Ok(img.to_rgb8())
}

/// Regular files under `dir`, sorted by path.
pub fn sorted_files(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = WalkDir::new(dir)
        .follow_links(true)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| match e {
            Ok(e) => Some(e),
            Err(err) => {
                warn!("skipping unreadable entry: {err}");
                None
            }
        })
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .collect();
    files.sort();
    files
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    /// Multiplier applied to 8-bit intensities.
    pub rescale: f64,
    /// Horizontal shear angle drawn from ±this many degrees.
    pub shear_degrees: f64,
    /// Zoom factor drawn uniformly from this closed range.
    pub zoom_range: (f64, f64),
    pub flip_probability: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            rescale: 1.0 / 255.0,
            shear_degrees: 12.0,
            zoom_range: (0.8, 1.2),
            flip_probability: 0.5,
        }
    }
}

impl AugmentParams {
    /// Rescaling only.
    pub fn identity() -> Self {
        Self {
            shear_degrees: 0.0,
            zoom_range: (1.0, 1.0),
            flip_probability: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let (lo, hi) = self.zoom_range;
        let ok = self.rescale > 0.0
            && (0.0..90.0).contains(&self.shear_degrees)
            && lo > 0.0
            && lo <= hi
            && (0.0..=1.0).contains(&self.flip_probability);
        if ok {
            Ok(())
        } else {
            Err(DatasetError::InvalidParameter(format!("augmentation {self:?}")))
        }
    }
}

/// Rescale, then shear, zoom and horizontal flip; the output has the input's
/// dimensions with borders filled by edge replication.
pub fn augment_classification(image: &RgbImage, params: &AugmentParams, rng: &mut impl Rng) -> Tensor {
    augment_tensor(&rgb_to_tensor(image, params.rescale), params, rng)
}

/// Geometric part of [`augment_classification`] on an already rescaled
/// HWC tensor.
pub fn augment_tensor(x: &Tensor, params: &AugmentParams, rng: &mut impl Rng) -> Tensor {
    let shear = rng.gen_range(-params.shear_degrees..=params.shear_degrees).to_radians();
    let zoom = rng.gen_range(params.zoom_range.0..=params.zoom_range.1);
    let flip = rng.gen::<f64>() < params.flip_probability;
    let warped = if shear == 0.0 && zoom == 1.0 {
        x.clone()
    } else {
        shear_zoom(x, shear, zoom)
    };
    if flip {
        flip_horizontal(&warped)
    } else {
        warped
    }
}

/// Output pixel p samples the input at S⁻¹(Z⁻¹(p − c)) + c, with S a
/// horizontal shear by `shear` radians and Z a uniform zoom.
fn shear_zoom(x: &Tensor, shear: f64, zoom: f64) -> Tensor {
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let t = shear.tan();
    let mut out = vec![0.0; h * w * c];
    for i in 0..h {
        for j in 0..w {
            let v = (i as f64 - cy) / zoom;
            let u = (j as f64 - cx) / zoom;
            let base = (i * w + j) * c;
            sample_clamped(x.data(), h, w, c, v + cy, u - t * v + cx, &mut out[base..base + c]);
        }
    }
    Tensor::new(x.shape().to_vec(), out).expect("same shape")
}

/// Mirrors columns: `[r, c] ↔ [r, W−1−c]`.
pub fn flip_horizontal(x: &Tensor) -> Tensor {
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let src = x.data();
    let mut out = Vec::with_capacity(src.len());
    for i in 0..h {
        for j in (0..w).rev() {
            let base = (i * w + j) * c;
            out.extend_from_slice(&src[base..base + c]);
        }
    }
    Tensor::new(x.shape().to_vec(), out).expect("same shape")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl SplitSpec {
    /// `⌈fraction · n⌉`, tolerant of binary rounding in the product.
    pub fn train_size(&self, n: usize) -> usize {
        ((self.train_fraction * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
    }
}

/// Seeded shuffle, then the first `⌈fraction · n⌉` items train and the rest
/// test.
pub fn split<T: Clone>(items: &[T], spec: &SplitSpec) -> Result<(Vec<T>, Vec<T>), DatasetError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(DatasetError::InvalidParameter(format!(
            "train fraction {} outside (0, 1)",
            spec.train_fraction
        )));
    }
    if items.is_empty() {
        return Err(DatasetError::InvalidParameter("cannot split an empty dataset".into()));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let k = spec.train_size(items.len());
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Ok((pick(&order[..k]), pick(&order[k..])))
}

#[derive(Debug, Clone)]
pub struct ClassificationExample {
    pub source: ImageSource,
    pub label: PlanningLabel,
}

#[derive(Debug, Clone)]
pub struct ClassificationDataset {
    pub examples: Vec<ClassificationExample>,
    pub augment: AugmentParams,
    /// Files that failed to decode at load time.
    pub skipped: Vec<PathBuf>,
}

impl ClassificationDataset {
    pub fn new(examples: Vec<ClassificationExample>) -> Self {
        Self {
            examples,
            augment: AugmentParams::default(),
            skipped: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn count(&self, label: PlanningLabel) -> usize {
        self.examples.iter().filter(|e| e.label == label).count()
    }

    pub fn has_both_labels(&self) -> bool {
        PlanningLabel::ALL.iter().all(|&l| self.count(l) > 0)
    }

    pub fn split(&self, spec: &SplitSpec) -> Result<(Self, Self), DatasetError> {
        let (train, test) = split(&self.examples, spec)?;
        let with = |examples| Self {
            examples,
            augment: self.augment,
            skipped: Vec::new(),
        };
        Ok((with(train), with(test)))
    }

    /// Writes `planned/` and `unplanned/` folders of PNG files.
    pub fn save(&self, root: &Path) -> Result<Vec<PathBuf>, DatasetError> {
        let mut written = Vec::with_capacity(self.len());
        for label in PlanningLabel::ALL {
            let dir = root.join(label.folder());
            fs::create_dir_all(&dir).map_err(|source| DatasetError::Io {
                path: dir.clone(),
                source,
            })?;
        }
        for (i, e) in self.examples.iter().enumerate() {
            let path = root.join(e.label.folder()).join(format!("img{i:05}.png"));
            save_png(&e.source.load()?, &path)?;
            written.push(path);
        }
        Ok(written)
    }
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<(), DatasetError> {
    img.save(path).map_err(|e| DatasetError::Io {
        path: path.to_path_buf(),
        source: io::Error::other(e.to_string()),
    })
}

/// Examples from `root/planned` and `root/unplanned`, each in path order.
pub fn load_labeled_folders(root: impl AsRef<Path>) -> Result<ClassificationDataset, DatasetError> {
    let root = root.as_ref();
    let mut examples = Vec::new();
    let mut skipped = Vec::new();
    for label in PlanningLabel::ALL {
        let dir = root.join(label.folder());
        if !dir.is_dir() {
            return Err(DatasetError::MissingFolder(dir));
        }
        for path in sorted_files(&dir) {
            match decode_image(&path) {
                Ok(_) => examples.push(ClassificationExample {
                    source: ImageSource::File(path),
                    label,
                }),
                Err(e) => {
                    warn!("skipping {}: {e}", path.display());
                    skipped.push(path);
                }
            }
        }
    }
    if examples.is_empty() {
        return Err(DatasetError::NoImages(root.to_path_buf()));
    }
    Ok(ClassificationDataset {
        examples,
        augment: AugmentParams::default(),
        skipped,
    })
}

/// An object box in absolute pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionObject {
    pub bbox: Bbox,
    pub class: String,
}

#[derive(Debug, Clone)]
pub struct DetectionExample {
    pub source: ImageSource,
    pub name: String,
    pub width: u32,
    pub height: u32,
    pub objects: Vec<DetectionObject>,
}

impl DetectionExample {
    /// Ground truth in normalized coordinates with indices from `classes`.
    pub fn ground_truth(&self, classes: &[String]) -> Vec<GroundTruth> {
        let (w, h) = (self.width as f64, self.height as f64);
        self.objects
            .iter()
            .filter_map(|o| {
                let class = classes.iter().position(|c| c == &o.class)?;
                Some(GroundTruth {
                    bbox: o.bbox.scale(1.0 / w, 1.0 / h),
                    class,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct DetectionDataset {
    pub examples: Vec<DetectionExample>,
    /// Class names; index 0 is background.
    pub classes: Vec<String>,
}

pub fn default_detection_classes() -> Vec<String> {
    crate::detector::model::DEFAULT_CLASSES
        .iter()
        .map(|s| s.to_string())
        .collect()
}

impl DetectionDataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    /// Decoded images with normalized ground truth.
    pub fn training_images(&self) -> Result<Vec<TrainingImage>, DatasetError> {
        self.examples
            .iter()
            .map(|e| {
                let image = e.source.load()?;
                // Saved copies may differ in size from the annotation.
                let mut gts = e.ground_truth(&self.classes);
                if image.dimensions() != (e.width, e.height) {
                    warn!("{}: image size differs from its annotation", e.name);
                    gts.iter_mut().for_each(|g| g.bbox = g.bbox.clip_unit());
                }
                Ok(TrainingImage { image, gts })
            })
            .collect()
    }

    /// VOC layout: `Annotations/<name>.xml` and `JPEGImages/<name>.png`.
    pub fn save_voc(&self, root: &Path) -> Result<(), DatasetError> {
        let ann = root.join("Annotations");
        let img = root.join("JPEGImages");
        for dir in [&ann, &img] {
            fs::create_dir_all(dir).map_err(|source| DatasetError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
        for e in &self.examples {
            let file = format!("{}.png", e.name);
            save_png(&e.source.load()?, &img.join(&file))?;
            let mut xml = format!(
                "<annotation>\n  <filename>{file}</filename>\n  <size>\n    <width>{}</width>\n    <height>{}</height>\n    <depth>3</depth>\n  </size>\n",
                e.width, e.height
            );
            for o in &e.objects {
                xml.push_str(&format!(
                    "  <object>\n    <name>{}</name>\n    <bndbox>\n      <xmin>{}</xmin>\n      <ymin>{}</ymin>\n      <xmax>{}</xmax>\n      <ymax>{}</ymax>\n    </bndbox>\n  </object>\n",
                    o.class, o.bbox.xmin, o.bbox.ymin, o.bbox.xmax, o.bbox.ymax
                ));
            }
            xml.push_str("</annotation>\n");
            let path = ann.join(format!("{}.xml", e.name));
            fs::write(&path, xml).map_err(|source| DatasetError::Io { path, source })?;
        }
        Ok(())
    }
}

fn child<'a>(node: roxmltree::Node<'a, 'a>, name: &str) -> Option<roxmltree::Node<'a, 'a>> {
    node.children().find(|c| c.has_tag_name(name))
}

fn parse_annotation(
    file: &Path,
    text: &str,
    classes: &[String],
) -> Result<(String, u32, u32, Vec<DetectionObject>), DatasetError> {
    let malformed = |field: &str, message: String| DatasetError::MalformedAnnotation {
        file: file.to_path_buf(),
        field: field.to_string(),
        message,
    };
    let doc = roxmltree::Document::parse(text).map_err(|e| malformed("xml", e.to_string()))?;
    let root = doc.root_element();
    let text_of = |node: roxmltree::Node, field: &str| -> Result<String, DatasetError> {
        child(node, field)
            .and_then(|n| n.text())
            .map(|t| t.trim().to_string())
            .ok_or_else(|| malformed(field, "missing".into()))
    };
    let number = |node: roxmltree::Node, field: &str| -> Result<f64, DatasetError> {
        let t = text_of(node, field)?;
        t.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| malformed(field, format!("not a number: {t:?}")))
    };
    let filename = text_of(root, "filename")?;
    let size = child(root, "size").ok_or_else(|| malformed("size", "missing".into()))?;
    let (w, h) = (number(size, "width")?, number(size, "height")?);
    if w < 1.0 || h < 1.0 || w.fract() != 0.0 || h.fract() != 0.0 {
        return Err(malformed("size", format!("invalid dimensions {w}×{h}")));
    }
    let mut objects = Vec::new();
    for obj in root.children().filter(|c| c.has_tag_name("object")) {
        let class = text_of(obj, "name")?;
        if class == classes[0] || !classes.contains(&class) {
            return Err(DatasetError::UnknownClass {
                file: file.to_path_buf(),
                class,
            });
        }
        let bb = child(obj, "bndbox").ok_or_else(|| malformed("bndbox", "missing".into()))?;
        let (x0, y0, x1, y1) = (
            number(bb, "xmin")?,
            number(bb, "ymin")?,
            number(bb, "xmax")?,
            number(bb, "ymax")?,
        );
        if x0 > x1 {
            return Err(malformed("xmin", format!("xmin {x0} exceeds xmax {x1}")));
        }
        if y0 > y1 {
            return Err(malformed("ymin", format!("ymin {y0} exceeds ymax {y1}")));
        }
        let raw = Bbox::new(x0, y0, x1, y1);
        let clipped = raw.clip(w, h);
        if clipped != raw {
            warn!("{}: {class} box {raw:?} clipped to the image bounds", file.display());
        }
        if clipped.area() <= 0.0 {
            warn!("{}: dropping zero-area {class} box", file.display());
            continue;
        }
        objects.push(DetectionObject { bbox: clipped, class });
    }
    Ok((filename, w as u32, h as u32, objects))
}

/// VOC-style dataset under `root`: `Annotations/*.xml` naming images in
/// `JPEGImages/`. `classes[0]` is background.
pub fn load_detection_annotations(
    root: impl AsRef<Path>,
    classes: &[String],
) -> Result<DetectionDataset, DatasetError> {
    let root = root.as_ref();
    if classes.len() < 2 {
        return Err(DatasetError::InvalidParameter(
            "need background plus at least one class".into(),
        ));
    }
    let ann_dir = root.join("Annotations");
    let img_dir = root.join("JPEGImages");
    for dir in [&ann_dir, &img_dir] {
        if !dir.is_dir() {
            return Err(DatasetError::MissingFolder(dir.clone()));
        }
    }
    let mut examples = Vec::new();
    for file in sorted_files(&ann_dir)
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("xml")))
    {
        let text = fs::read_to_string(&file).map_err(|source| DatasetError::Io {
            path: file.clone(),
            source,
        })?;
        let (filename, width, height, objects) = parse_annotation(&file, &text, classes)?;
        let image = img_dir.join(&filename);
        if !image.is_file() {
            return Err(DatasetError::MalformedAnnotation {
                file,
                field: "filename".into(),
                message: format!("{} does not exist", image.display()),
            });
        }
        let name = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        examples.push(DetectionExample {
            source: ImageSource::File(image),
            name,
            width,
            height,
            objects,
        });
    }
    Ok(DetectionDataset {
        examples,
        classes: classes.to_vec(),
    })
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn hsv(h: f64, s: f64, v: f64) -> Rgb<u8> {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    Rgb([
        clamp_u8((r + m) * 255.0),
        clamp_u8((g + m) * 255.0),
        clamp_u8((b + m) * 255.0),
    ])
}

fn add_noise(img: &mut RgbImage, amplitude: i32, rng: &mut impl Rng) {
    for p in img.pixels_mut() {
        let n = rng.gen_range(-amplitude..=amplitude);
        for ch in p.0.iter_mut() {
            *ch = (*ch as i32 + n).clamp(0, 255) as u8;
        }
    }
}

/// Regular grid of aligned blocks in one hue family.
fn planned_scene(side: u32, rng: &mut impl Rng) -> RgbImage {
    let hue = rng.gen_range(0.0..360.0);
    let ground = hsv(hue + 180.0, 0.1, rng.gen_range(0.25..0.4));
    let mut img = RgbImage::from_pixel(side, side, ground);
    let period = rng.gen_range(side / 6..=side / 4).max(4);
    let block = (period as f64 * rng.gen_range(0.6..0.75)).round() as u32;
    let offset = rng.gen_range(0..period);
    let value = rng.gen_range(0.7..0.9);
    let mut y = offset % period;
    while y < side {
        let mut x = offset % period;
        while x < side {
            let c = hsv(hue + rng.gen_range(-6.0..6.0), 0.35, value);
            fill_rect(&mut img, x, y, x + block, y + block, c);
            x += period;
        }
        y += period;
    }
    add_noise(&mut img, 2, rng);
    img
}

/// Densely packed, overlapping, jittered blocks of unrelated hues.
fn unplanned_scene(side: u32, rng: &mut impl Rng) -> RgbImage {
    let ground = hsv(rng.gen_range(0.0..360.0), 0.3, rng.gen_range(0.3..0.5));
    let mut img = RgbImage::from_pixel(side, side, ground);
    let count = rng.gen_range(45..70) * (side as usize * side as usize) / (32 * 32);
    let count = count.max(45);
    let (lo, hi) = ((side / 12).max(2), (side / 4).max(3));
    for _ in 0..count {
        let w = rng.gen_range(lo..=hi);
        let h = rng.gen_range(lo..=hi);
        let x = rng.gen_range(0..side);
        let y = rng.gen_range(0..side);
        let c = hsv(
            rng.gen_range(0.0..360.0),
            rng.gen_range(0.4..0.9),
            rng.gen_range(0.3..1.0),
        );
        fill_rect(&mut img, x, y, x + w, y + h, c);
    }
    add_noise(&mut img, 6, rng);
    img
}

/// `n/2` planned scenes (even indices) and `n/2` unplanned scenes (odd
/// indices), each drawn from its own seeded stream.
pub fn generate_synthetic_classification(
    n: usize,
    side: u32,
    seed: u64,
) -> Result<ClassificationDataset, DatasetError> {
    if !n.is_multiple_of(2) {
        return Err(DatasetError::InvalidParameter(format!("n must be even, got {n}")));
    }
    if side < 16 {
        return Err(DatasetError::InvalidParameter(format!(
            "side must be at least 16, got {side}"
        )));
    }
    let examples = (0..n)
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let (label, image) = if i % 2 == 0 {
                (PlanningLabel::Planned, planned_scene(side, &mut rng))
            } else {
                (PlanningLabel::Unplanned, unplanned_scene(side, &mut rng))
            };
            ClassificationExample {
                source: ImageSource::Memory(Arc::new(image)),
                label,
            }
        })
        .collect();
    Ok(ClassificationDataset::new(examples))
}

/// Paint colour of each synthetic object class.
pub const SHAPE_COLORS: [(&str, [u8; 3]); 4] = [
    ("person", [220, 30, 30]),
    ("car", [30, 200, 30]),
    ("bus", [30, 30, 220]),
    ("motorbike", [220, 220, 30]),
];

fn overlaps(a: &[u32; 4], b: &[u32; 4]) -> bool {
    a[0] < b[2] && b[0] < a[2] && a[1] < b[3] && b[1] < a[3]
}

/// A noisy gray scene with 1–4 non-overlapping solid rectangles; returns the
/// image and `(class name, [x0, y0, x1, y1])` half-open pixel boxes.
pub fn synthetic_shape_scene(side: u32, rng: &mut impl Rng) -> (RgbImage, Vec<(&'static str, [u32; 4])>) {
    let mut img = RgbImage::new(side, side);
    for p in img.pixels_mut() {
        let g = rng.gen_range(110..=150u8);
        *p = Rgb([g, g, g]);
    }
    let wanted = rng.gen_range(1..=4);
    let mut placed: Vec<(&'static str, [u32; 4])> = Vec::new();
    let (min_side, max_side) = ((side as f64 * 0.2).round() as u32, (side as f64 * 0.45).round() as u32);
    let mut attempts = 0;
    while placed.len() < wanted && attempts < 200 {
        attempts += 1;
        let w = rng.gen_range(min_side..=max_side);
        let h = rng.gen_range(min_side..=max_side);
        if w as f64 / h as f64 > 2.0 || h as f64 / w as f64 > 2.0 {
            continue;
        }
        let x0 = rng.gen_range(0..=side - w);
        let y0 = rng.gen_range(0..=side - h);
        let b = [x0, y0, x0 + w, y0 + h];
        if placed.iter().any(|(_, p)| overlaps(p, &b)) {
            continue;
        }
        let (name, _) = SHAPE_COLORS[rng.gen_range(0..SHAPE_COLORS.len())];
        placed.push((name, b));
    }
    for (name, b) in &placed {
        let color = SHAPE_COLORS.iter().find(|(n, _)| n == name).expect("known class").1;
        fill_rect(&mut img, b[0], b[1], b[2], b[3], Rgb(color));
    }
    (img, placed)
}

/// `n` synthetic shape scenes kept in memory.
pub fn generate_synthetic_detection(n: usize, side: u32, seed: u64) -> Result<DetectionDataset, DatasetError> {
    if n == 0 {
        return Err(DatasetError::InvalidParameter("n must be at least 1".into()));
    }
    if side < 16 {
        return Err(DatasetError::InvalidParameter(format!(
            "side must be at least 16, got {side}"
        )));
    }
    let examples = (0..n)
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let (image, shapes) = synthetic_shape_scene(side, &mut rng);
            DetectionExample {
                source: ImageSource::Memory(Arc::new(image)),
                name: format!("synth{i:05}"),
                width: side,
                height: side,
                objects: shapes
                    .into_iter()
                    .map(|(class, b)| DetectionObject {
                        bbox: Bbox::new(b[0] as f64, b[1] as f64, b[2] as f64, b[3] as f64),
                        class: class.to_string(),
                    })
                    .collect(),
            }
        })
        .collect();
    Ok(DetectionDataset {
        examples,
        classes: default_detection_classes(),
    })
}
