//! Single-shot multibox model: a convolutional backbone whose successive
//! feature maps each feed a convolutional prediction head.

use std::path::Path;

use image::RgbImage;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use urbani_nnet::ops::softmax_slice;
use urbani_nnet::optim::parameter_shapes;
use urbani_nnet::{Checkpoint, LayerSpec, Mode, Network, OptimizerConfig, Tensor, Trace};

use super::boxes::{decode_offsets, CenterBox};
use super::loss::{multibox_terms, MultiboxConfig};
use super::nms::nms;
use super::patch::{sample_patch, PatchConstraint};
use super::priors::{generate_default_boxes, DefaultBoxSpec};
use super::{Detection, DetectorError, GroundTruth};
use crate::raster::preprocess;

pub const DEFAULT_CLASSES: [&str; 5] = ["background", "person", "car", "bus", "motorbike"];

const CHECKPOINT_KIND: &str = "ssd-detector";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Square input side in pixels.
    pub input_side: usize,
    /// Class names; index 0 is background.
    pub classes: Vec<String>,
    /// Layers from the input to the first feature map.
    pub stem: Vec<LayerSpec>,
    /// Each stage maps the previous feature map to the next one.
    pub extras: Vec<Vec<LayerSpec>>,
    pub head_kernel: usize,
    pub default_boxes: DefaultBoxSpec,
    pub multibox: MultiboxConfig,
    pub nms_iou: f64,
    pub top_k: usize,
    pub score_threshold: f64,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub steps: usize,
    /// Steps at which the learning rate is multiplied by `lr_decay_factor`.
    #[serde(default)]
    pub lr_decay_steps: Vec<usize>,
    #[serde(default = "default_decay_factor")]
    pub lr_decay_factor: f64,
    /// Random patch sampling during training.
    pub patch_sampling: bool,
}

fn default_decay_factor() -> f64 {
    0.1
}

fn conv_block(filters: usize) -> Vec<LayerSpec> {
    vec![LayerSpec::conv(filters, 3), LayerSpec::relu(), LayerSpec::pool(2)]
}

impl Default for DetectorConfig {
    /// Full-resolution layout: 300×300 input, six feature maps
    /// (37, 18, 9, 4, 2, 1).
    fn default() -> Self {
        let stem = [conv_block(32), conv_block(64), conv_block(64)].concat();
        let grids = vec![37, 18, 9, 4, 2, 1];
        Self {
            input_side: 300,
            classes: DEFAULT_CLASSES.iter().map(|s| s.to_string()).collect(),
            stem,
            extras: (0..5).map(|_| conv_block(64)).collect(),
            head_kernel: 3,
            default_boxes: DefaultBoxSpec::from_scale_range(grids, 0.2, 0.9, vec![1.0, 2.0, 0.5], true),
            multibox: MultiboxConfig::default(),
            nms_iou: 0.45,
            top_k: 200,
            score_threshold: 0.5,
            optimizer: OptimizerConfig::default(),
            batch_size: 32,
            steps: 10_000,
            lr_decay_steps: vec![6_000, 8_500],
            lr_decay_factor: default_decay_factor(),
            patch_sampling: true,
        }
    }
}

impl DetectorConfig {
    /// 64×64 input with four feature maps (8, 4, 2, 1); trains on a laptop CPU.
    pub fn desk() -> Self {
        Self {
            input_side: 64,
            stem: [conv_block(8), conv_block(16), conv_block(32)].concat(),
            extras: (0..3).map(|_| conv_block(32)).collect(),
            default_boxes: DefaultBoxSpec::from_scale_range(vec![8, 4, 2, 1], 0.2, 0.8, vec![1.0, 2.0, 0.5], true),
            batch_size: 10,
            steps: 1500,
            lr_decay_steps: vec![1_000, 1_300],
            ..Self::default()
        }
    }

    /// Desk layout without patch sampling and with full batches of 20,
    /// for memorizing a small set.
    pub fn overfit() -> Self {
        Self {
            patch_sampling: false,
            batch_size: 20,
            ..Self::desk()
        }
    }

    /// SGD with learning rate 0.1 and momentum 0.9.
    pub fn with_published_schedule(mut self) -> Self {
        self.optimizer = OptimizerConfig::Sgd {
            learning_rate: 0.1,
            momentum: 0.9,
        };
        self
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        let bad = |m: &str| Err(DetectorError::InvalidConfig(m.to_string()));
        if self.input_side == 0 {
            return bad("input side must be positive");
        }
        if self.classes.len() < 2 {
            return bad("at least one object class besides background is required");
        }
        if self.extras.len() + 1 != self.default_boxes.levels() {
            return bad("one default-box level is required per feature map");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return bad("learning-rate decay factor must lie in (0, 1]");
        }
        for t in [self.nms_iou, self.score_threshold] {
            if !(0.0..=1.0).contains(&t) {
                return bad("thresholds must lie in [0, 1]");
            }
        }
        if !(self.multibox.match_threshold > 0.0 && self.multibox.match_threshold < 1.0) {
            return bad("match threshold must lie in (0, 1)");
        }
        if self.multibox.alpha < 0.0 || self.multibox.neg_pos_ratio <= 0.0 {
            return bad("alpha must be ≥ 0 and the negative ratio > 0");
        }
        self.default_boxes.validate()
    }
}

/// One training image with ground truth in normalized coordinates.
#[derive(Debug, Clone)]
pub struct TrainingImage {
    pub image: RgbImage,
    pub gts: Vec<GroundTruth>,
}

/// Per-network traces of a training forward pass.
pub struct SsdTrace {
    stem: Trace,
    extras: Vec<Trace>,
    heads: Vec<Trace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsdModel {
    config: DetectorConfig,
    stem: Network,
    extras: Vec<Network>,
    heads: Vec<Network>,
    defaults: Vec<CenterBox>,
}

impl SsdModel {
    pub fn build(config: DetectorConfig, seed: u64) -> Result<Self, DetectorError> {
        config.validate()?;
        let side = config.input_side;
        let stem = Network::new(&[side, side, 3], config.stem.clone(), seed)?;
        let mut extras = Vec::with_capacity(config.extras.len());
        let mut features = vec![stem.output_shape().to_vec()];
        for (k, specs) in config.extras.iter().enumerate() {
            let input = features.last().expect("stem feature map").clone();
            let net = Network::new(&input, specs.clone(), seed.wrapping_add(1 + k as u64))?;
            features.push(net.output_shape().to_vec());
            extras.push(net);
        }
        let per_cell = config.default_boxes.boxes_per_cell() * (config.num_classes() + 4);
        let mut heads = Vec::with_capacity(features.len());
        for (k, shape) in features.iter().enumerate() {
            let grid = config.default_boxes.grid_sizes[k];
            if shape.len() != 3 || shape[0] != grid || shape[1] != grid {
                return Err(DetectorError::InvalidConfig(format!(
                    "feature map {k} has shape {shape:?}, default boxes expect {grid}×{grid}"
                )));
            }
            heads.push(Network::new(
                shape,
                vec![LayerSpec::conv(per_cell, config.head_kernel)],
                seed.wrapping_add(1000 + k as u64),
            )?);
        }
        let defaults = generate_default_boxes(&config.default_boxes)?;
        Ok(Self {
            config,
            stem,
            extras,
            heads,
            defaults,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn defaults(&self) -> &[CenterBox] {
        &self.defaults
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes()
    }

    fn networks(&self) -> impl Iterator<Item = &Network> {
        std::iter::once(&self.stem)
            .chain(self.extras.iter())
            .chain(self.heads.iter())
    }

    pub fn parameter_count(&self) -> usize {
        self.networks().map(Network::parameter_count).sum()
    }

    pub fn parameters(&self) -> impl Iterator<Item = &Tensor> {
        self.networks().flat_map(|n| n.parameters())
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        std::iter::once(&mut self.stem)
            .chain(self.extras.iter_mut())
            .chain(self.heads.iter_mut())
            .flat_map(|n| n.parameters_mut())
            .collect()
    }

    /// Confidence logits `[boxes, classes]` and offsets `[boxes, 4]`.
    pub fn forward(
        &self,
        x: &Tensor,
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<(Tensor, Tensor, SsdTrace), DetectorError> {
        let (mut feature, stem_trace) = self.stem.forward_with(x.clone(), mode, rng)?;
        let mut features = Vec::with_capacity(self.heads.len());
        let mut extra_traces = Vec::with_capacity(self.extras.len());
        for net in &self.extras {
            let (next, trace) = net.forward_with(feature.clone(), mode, rng)?;
            features.push(feature);
            extra_traces.push(trace);
            feature = next;
        }
        features.push(feature);

        let classes = self.num_classes();
        let per_box = classes + 4;
        let mut conf = Vec::with_capacity(self.defaults.len() * classes);
        let mut loc = Vec::with_capacity(self.defaults.len() * 4);
        let mut head_traces = Vec::with_capacity(self.heads.len());
        for (head, f) in self.heads.iter().zip(features) {
            let (out, trace) = head.forward_with(f, mode, rng)?;
            for chunk in out.data().chunks_exact(per_box) {
                conf.extend_from_slice(&chunk[..classes]);
                loc.extend_from_slice(&chunk[classes..]);
            }
            head_traces.push(trace);
        }
        let boxes = self.defaults.len();
        Ok((
            Tensor::new(vec![boxes, classes], conf)?,
            Tensor::new(vec![boxes, 4], loc)?,
            SsdTrace {
                stem: stem_trace,
                extras: extra_traces,
                heads: head_traces,
            },
        ))
    }

    /// Parameter gradients (in `parameters()` order) for loss gradients
    /// with respect to the confidence logits and offsets.
    pub fn backward(
        &self,
        trace: &SsdTrace,
        grad_conf: &Tensor,
        grad_loc: &Tensor,
    ) -> Result<Vec<Tensor>, DetectorError> {
        let classes = self.num_classes();
        let per_box = classes + 4;
        let mut head_grads = Vec::with_capacity(self.heads.len());
        let mut feature_grads = Vec::with_capacity(self.heads.len());
        let mut box_offset = 0;
        for (head, htrace) in self.heads.iter().zip(&trace.heads) {
            let shape = head.output_shape();
            let boxes = shape.iter().product::<usize>() / per_box;
            let mut g = Vec::with_capacity(boxes * per_box);
            for b in box_offset..box_offset + boxes {
                g.extend_from_slice(&grad_conf.data()[b * classes..(b + 1) * classes]);
                g.extend_from_slice(&grad_loc.data()[b * 4..(b + 1) * 4]);
            }
            box_offset += boxes;
            let (grads, dx) = head.backward_with(htrace, Tensor::new(shape.to_vec(), g)?, true)?;
            head_grads.push(grads);
            feature_grads.push(dx.expect("input gradient requested"));
        }

        let mut extra_grads = vec![None; self.extras.len()];
        let mut upstream = feature_grads.pop().expect("at least one head");
        for k in (0..self.extras.len()).rev() {
            let (grads, dx) = self.extras[k].backward_with(&trace.extras[k], upstream, true)?;
            extra_grads[k] = Some(grads);
            let mut g = feature_grads.pop().expect("one head per feature map");
            for (a, b) in g.data_mut().iter_mut().zip(dx.expect("requested").data()) {
                *a += b;
            }
            upstream = g;
        }
        let (stem_grads, _) = self.stem.backward_with(&trace.stem, upstream, false)?;

        let mut out = stem_grads.into_tensors();
        for g in extra_grads.into_iter().flatten() {
            out.extend(g.into_tensors());
        }
        for g in head_grads {
            out.extend(g.into_tensors());
        }
        Ok(out)
    }

    pub fn predict(&self, x: &Tensor) -> Result<(Tensor, Tensor), DetectorError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (conf, loc, _) = self.forward(x, Mode::Infer, &mut rng)?;
        Ok((conf, loc))
    }

    /// Per-class score filter (`score > threshold`) and NMS over a
    /// preprocessed input; results sorted by descending score.
    pub fn detect_tensor(&self, x: &Tensor, score_threshold: f64) -> Result<Vec<Detection>, DetectorError> {
        let (conf, loc) = self.predict(x)?;
        let classes = self.num_classes();
        let mut per_class: Vec<Vec<Detection>> = vec![Vec::new(); classes];
        for (i, d) in self.defaults.iter().enumerate() {
            let probs = softmax_slice(&conf.data()[i * classes..(i + 1) * classes]);
            let l: [f64; 4] = loc.data()[i * 4..(i + 1) * 4].try_into().expect("4 offsets");
            let bbox = decode_offsets(&l, d).to_corners().clip_unit();
            for (c, &p) in probs.iter().enumerate().skip(1) {
                if p > score_threshold {
                    per_class[c].push(Detection {
                        class: c,
                        label: self.config.classes[c].clone(),
                        score: p,
                        bbox,
                    });
                }
            }
        }
        let mut out: Vec<Detection> = per_class
            .iter()
            .flat_map(|dets| nms(dets, self.config.nms_iou, self.config.top_k))
            .collect();
        out.sort_by(|a, b| b.score.total_cmp(&a.score));
        Ok(out)
    }

    pub fn detect(&self, image: &RgbImage, score_threshold: f64) -> Result<Vec<Detection>, DetectorError> {
        self.detect_tensor(&preprocess(image, self.config.input_side), score_threshold)
    }

    pub fn to_checkpoint(&self, seed: u64, history: &DetectorHistory) -> Checkpoint {
        let mut ckpt = Checkpoint::new(
            seed,
            serde_json::json!({
                "kind": CHECKPOINT_KIND,
                "config": self.config,
                "history": history,
            }),
        )
        .with_network("stem", self.stem.clone());
        for (k, n) in self.extras.iter().enumerate() {
            ckpt = ckpt.with_network(format!("extra{k}"), n.clone());
        }
        for (k, n) in self.heads.iter().enumerate() {
            ckpt = ckpt.with_network(format!("head{k}"), n.clone());
        }
        ckpt
    }

    pub fn from_checkpoint(mut ckpt: Checkpoint) -> Result<(Self, DetectorHistory), DetectorError> {
        if ckpt.metadata.get("kind").and_then(|k| k.as_str()) != Some(CHECKPOINT_KIND) {
            return Err(DetectorError::InvalidConfig(
                "checkpoint does not hold a detector".into(),
            ));
        }
        let config: DetectorConfig = serde_json::from_value(ckpt.metadata["config"].clone())
            .map_err(|e| DetectorError::InvalidConfig(format!("detector header: {e}")))?;
        let history: DetectorHistory = serde_json::from_value(ckpt.metadata["history"].clone()).unwrap_or_default();
        config.validate()?;
        let stem = ckpt.take_network("stem")?;
        let extras = (0..config.extras.len())
            .map(|k| ckpt.take_network(&format!("extra{k}")))
            .collect::<Result<Vec<_>, _>>()?;
        let heads = (0..config.default_boxes.levels())
            .map(|k| ckpt.take_network(&format!("head{k}")))
            .collect::<Result<Vec<_>, _>>()?;
        let defaults = generate_default_boxes(&config.default_boxes)?;
        Ok((
            Self {
                config,
                stem,
                extras,
                heads,
                defaults,
            },
            history,
        ))
    }

    pub fn save(&self, path: impl AsRef<Path>, seed: u64, history: &DetectorHistory) -> Result<(), DetectorError> {
        Ok(self.to_checkpoint(seed, history).save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, DetectorHistory), DetectorError> {
        Self::from_checkpoint(Checkpoint::load(path)?)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectorHistory {
    /// Batch multibox loss per optimizer step.
    pub step_losses: Vec<f64>,
    /// Multibox loss over the full training set after the last step.
    pub final_loss: f64,
}

struct Prepared {
    input: Tensor,
    gts: Vec<GroundTruth>,
}

fn prepare(side: usize, image: &RgbImage, gts: Vec<GroundTruth>) -> Prepared {
    Prepared {
        input: preprocess(image, side),
        gts,
    }
}

/// Multibox loss over `data`, normalized by the total number of matches.
pub fn dataset_loss(model: &SsdModel, data: &[TrainingImage]) -> Result<f64, DetectorError> {
    let (mut sum, mut positives) = (0.0, 0usize);
    for item in data {
        let x = preprocess(&item.image, model.config.input_side);
        let (conf, loc) = model.predict(&x)?;
        let terms = multibox_terms(&conf, &loc, &item.gts, &model.defaults, &model.config.multibox)?;
        sum += terms.loss.confidence + model.config.multibox.alpha * terms.loss.localization;
        positives += terms.loss.num_positives;
    }
    Ok(if positives == 0 { 0.0 } else { sum / positives as f64 })
}

/// Minimizes the multibox loss over `data` for `config.steps` optimizer
/// steps; deterministic for a given seed.
pub fn train_detector(
    model: &mut SsdModel,
    data: &[TrainingImage],
    seed: u64,
    mut on_step: impl FnMut(usize, f64),
) -> Result<DetectorHistory, DetectorError> {
    if data.is_empty() {
        return Err(DetectorError::EmptyDataset);
    }
    let config = model.config.clone();
    let side = config.input_side;
    let cached: Option<Vec<Prepared>> =
        (!config.patch_sampling).then(|| data.iter().map(|d| prepare(side, &d.image, d.gts.clone())).collect());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut optimizer = config.optimizer.build(&parameter_shapes(model.parameters()));
    let mut order: Vec<usize> = Vec::new();
    let mut history = DetectorHistory::default();

    for step in 0..config.steps {
        if config.lr_decay_steps.contains(&step) {
            let lr = optimizer.learning_rate() * config.lr_decay_factor;
            optimizer.set_learning_rate(lr);
            log::info!("step {step}: learning rate {lr:e}");
        }
        let mut batch = Vec::with_capacity(config.batch_size);
        while batch.len() < config.batch_size.min(data.len()) {
            if order.is_empty() {
                order = (0..data.len()).collect();
                order.shuffle(&mut rng);
                order.reverse();
            }
            batch.push(order.pop().expect("refilled"));
        }

        let mut grads: Option<Vec<Tensor>> = None;
        let (mut sum, mut positives) = (0.0, 0usize);
        for &i in &batch {
            let owned;
            let item = match &cached {
                Some(c) => &c[i],
                None => {
                    let constraint = PatchConstraint::random(&mut rng);
                    let (patch, gts) = sample_patch(&data[i].image, &data[i].gts, constraint, &mut rng);
                    owned = prepare(side, &patch, gts);
                    &owned
                }
            };
            let (conf, loc, trace) = model.forward(&item.input, Mode::Train, &mut rng)?;
            let terms = multibox_terms(&conf, &loc, &item.gts, &model.defaults, &config.multibox)?;
            sum += terms.loss.confidence + config.multibox.alpha * terms.loss.localization;
            positives += terms.loss.num_positives;
            if terms.loss.num_positives == 0 {
                continue;
            }
            let g = model.backward(&trace, &terms.grad_conf, &terms.grad_loc)?;
            match grads.as_mut() {
                None => grads = Some(g),
                Some(acc) => {
                    for (a, b) in acc.iter_mut().zip(&g) {
                        for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                            *x += y;
                        }
                    }
                }
            }
        }
        let loss = if positives == 0 { 0.0 } else { sum / positives as f64 };
        if let Some(mut g) = grads {
            let scale = 1.0 / positives as f64;
            for t in &mut g {
                for v in t.data_mut() {
                    *v *= scale;
                }
            }
            let mut params = model.parameters_mut();
            optimizer.update(&mut params, &g)?;
        }
        history.step_losses.push(loss);
        on_step(step, loss);
    }
    history.final_loss = dataset_loss(model, data)?;
    Ok(history)
}
