//! Binary planned/unplanned scene classifier.

use std::io::Write;
use std::path::Path;

use image::RgbImage;
use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use urbani_nnet::ops::{binary_cross_entropy, binary_cross_entropy_grad};
use urbani_nnet::optim::parameter_shapes;
use urbani_nnet::{Checkpoint, Gradients, LayerSpec, Mode, Network, NnError, OptimizerConfig, Tensor};

use crate::datasets::{augment_tensor, AugmentParams, ClassificationDataset, DatasetError};
use crate::raster::{resize_bilinear, rgb_to_tensor};

pub use crate::datasets::PlanningLabel;

const CHECKPOINT_KIND: &str = "slumsnet";
const NETWORK_NAME: &str = "slumsnet";

#[derive(Debug, Error)]
pub enum SlumsNetError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training data: {0}")]
    Data(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Network(#[from] NnError),
    #[error("metrics log: {0}")]
    Log(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlumsNetConfig {
    pub input_side: usize,
    pub conv_filters: Vec<usize>,
    /// Whether a max-pool follows each convolution.
    pub pool_after: Vec<bool>,
    pub kernel_size: usize,
    pub pool_size: usize,
    pub dense_units: Vec<usize>,
    /// Dropout after each hidden dense layer.
    pub dropout_rates: Vec<f64>,
    pub batch_size: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    /// Cap on validation batches evaluated per epoch.
    pub validation_steps: usize,
    pub optimizer: OptimizerConfig,
    pub threshold: f64,
}

impl Default for SlumsNetConfig {
    fn default() -> Self {
        Self {
            input_side: 200,
            conv_filters: vec![32, 32, 32, 128],
            pool_after: vec![false, true, true, true],
            kernel_size: 3,
            pool_size: 2,
            dense_units: vec![256, 64],
            dropout_rates: vec![0.5, 0.5],
            batch_size: 32,
            epochs: 3,
            steps_per_epoch: 9000,
            validation_steps: 2000,
            optimizer: OptimizerConfig::default(),
            threshold: 0.5,
        }
    }
}

impl SlumsNetConfig {
    /// Same layer chain at 32×32 with narrower layers and short epochs.
    pub fn desk() -> Self {
        Self {
            input_side: 32,
            conv_filters: vec![8, 8, 8, 16],
            dense_units: vec![64, 32],
            batch_size: 16,
            epochs: 3,
            steps_per_epoch: 200,
            validation_steps: 10,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SlumsNetError> {
        let bad = |m: String| Err(SlumsNetError::InvalidConfig(m));
        if self.input_side < 8 {
            return bad(format!("input side {} is below 8", self.input_side));
        }
        if self.conv_filters.is_empty() || self.conv_filters.contains(&0) {
            return bad("convolution filter counts must be positive".into());
        }
        if self.pool_after.len() != self.conv_filters.len() {
            return bad("pool_after needs one flag per convolution".into());
        }
        if self.dense_units.contains(&0) {
            return bad("dense widths must be positive".into());
        }
        if self.dropout_rates.len() != self.dense_units.len() {
            return bad("dropout_rates needs one rate per hidden dense layer".into());
        }
        if self.dropout_rates.iter().any(|r| !(0.0..1.0).contains(r)) {
            return bad("dropout rates must lie in [0, 1)".into());
        }
        if self.kernel_size == 0 || self.pool_size == 0 {
            return bad("kernel and pool sizes must be positive".into());
        }
        if self.batch_size == 0 || self.epochs == 0 || self.steps_per_epoch == 0 {
            return bad("batch size, epochs and steps per epoch must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold {} outside [0, 1]", self.threshold));
        }
        let mut side = self.input_side;
        for &p in &self.pool_after {
            if p {
                side /= self.pool_size;
            }
        }
        if side == 0 {
            return bad("pooling reduces the feature map to nothing".into());
        }
        Ok(())
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        for (&filters, &pool) in self.conv_filters.iter().zip(&self.pool_after) {
            specs.push(LayerSpec::conv(filters, self.kernel_size));
            specs.push(LayerSpec::relu());
            if pool {
                specs.push(LayerSpec::pool(self.pool_size));
            }
        }
        specs.push(LayerSpec::Flatten);
        for (&units, &rate) in self.dense_units.iter().zip(&self.dropout_rates) {
            specs.push(LayerSpec::dense(units));
            specs.push(LayerSpec::relu());
            specs.push(LayerSpec::dropout(rate));
        }
        specs.push(LayerSpec::dense(1));
        specs.push(LayerSpec::sigmoid());
        specs
    }
}

pub fn build_slumsnet(config: &SlumsNetConfig, seed: u64) -> Result<Network, SlumsNetError> {
    config.validate()?;
    let side = config.input_side;
    Ok(Network::new(&[side, side, 3], config.layer_specs(), seed)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanningStatus {
    pub probability_unplanned: f64,
    pub label: PlanningLabel,
    pub threshold: f64,
}

impl PlanningStatus {
    /// Unplanned when `probability ≥ threshold`.
    pub fn from_probability(probability_unplanned: f64, threshold: f64) -> Self {
        Self {
            probability_unplanned,
            label: if probability_unplanned >= threshold {
                PlanningLabel::Unplanned
            } else {
                PlanningLabel::Planned
            },
            threshold,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub step_losses: Vec<f64>,
    pub validation_losses: Vec<f64>,
    pub validation_accuracies: Vec<f64>,
}

/// Classifier input at `side`: rescale intensities then bilinear resize.
pub fn classifier_input(image: &RgbImage, side: usize, rescale: f64) -> Tensor {
    resize_bilinear(&rgb_to_tensor(image, rescale), side, side)
}

fn load_inputs(ds: &ClassificationDataset, side: usize) -> Result<Vec<(Tensor, f64)>, SlumsNetError> {
    ds.examples
        .iter()
        .map(|e| {
            let img = e.source.load()?;
            Ok((classifier_input(&img, side, ds.augment.rescale), e.label.target()))
        })
        .collect()
}

fn probability(net: &Network, x: &Tensor) -> Result<f64, SlumsNetError> {
    Ok(net.infer(x)?.data()[0])
}

/// Mean loss and accuracy over unaugmented inputs.
fn evaluate(net: &Network, data: &[(Tensor, f64)], threshold: f64) -> Result<(f64, f64), SlumsNetError> {
    let (mut loss, mut correct) = (0.0, 0usize);
    for (x, t) in data {
        let p = probability(net, x)?;
        loss += binary_cross_entropy(*t, p)?;
        let label = PlanningStatus::from_probability(p, threshold).label;
        correct += (label.target() == *t) as usize;
    }
    let n = data.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Accuracy of thresholded predictions over a dataset.
pub fn accuracy(net: &Network, ds: &ClassificationDataset, threshold: f64) -> Result<f64, SlumsNetError> {
    let side = net.input_shape()[0];
    Ok(evaluate(net, &load_inputs(ds, side)?, threshold)?.1)
}

/// Mini-batch training with the binary cross-entropy loss.
///
/// Each step draws `batch_size` examples from a reshuffled pass over the
/// training set, augments them with the dataset's parameters, and applies
/// one optimizer update on the batch-mean gradient. Validation uses
/// unaugmented images. Deterministic for a given seed.
pub fn train(
    net: &mut Network,
    train_set: &ClassificationDataset,
    validation: Option<&ClassificationDataset>,
    config: &SlumsNetConfig,
    seed: u64,
    mut metrics: Option<&mut dyn Write>,
) -> Result<TrainingHistory, SlumsNetError> {
    config.validate()?;
    train_set.augment.validate()?;
    if train_set.is_empty() {
        return Err(SlumsNetError::Data("empty training set".into()));
    }
    if !train_set.has_both_labels() {
        return Err(SlumsNetError::Data("training set holds a single class".into()));
    }
    let side = net.input_shape()[0];
    let inputs = load_inputs(train_set, side)?;
    let val_inputs = match validation {
        Some(v) => {
            let mut all = load_inputs(v, side)?;
            all.truncate(config.validation_steps.saturating_mul(config.batch_size));
            all
        }
        None => Vec::new(),
    };
    let augment: AugmentParams = train_set.augment;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut optimizer = config.optimizer.build(&parameter_shapes(net.parameters()));
    let mut order: Vec<usize> = Vec::new();
    let mut history = TrainingHistory::default();
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        for _ in 0..config.steps_per_epoch {
            let mut grads = Gradients::zeros_like(net);
            let mut loss = 0.0;
            for _ in 0..config.batch_size {
                if order.is_empty() {
                    order = (0..inputs.len()).collect();
                    order.shuffle(&mut rng);
                    order.reverse();
                }
                let (x, t) = &inputs[order.pop().expect("refilled")];
                let x = augment_tensor(x, &augment, &mut rng);
                let (y, trace) = net.forward_with(x, Mode::Train, &mut rng)?;
                let p = y.data()[0];
                loss += binary_cross_entropy(*t, p)?;
                let g = Tensor::new(y.shape().to_vec(), vec![binary_cross_entropy_grad(*t, p)])?;
                let (g, _) = net.backward_with(&trace, g, false)?;
                grads.accumulate(&g);
            }
            let b = config.batch_size as f64;
            grads.scale(1.0 / b);
            loss /= b;
            let mut params: Vec<&mut Tensor> = net.parameters_mut().collect();
            optimizer.update(&mut params, grads.tensors())?;
            if let Some(w) = metrics.as_deref_mut() {
                writeln!(w, "{step} {loss}")?;
            }
            debug!("step {step} loss {loss:.6}");
            history.step_losses.push(loss);
            step += 1;
        }
        if !val_inputs.is_empty() {
            let (vl, va) = evaluate(net, &val_inputs, config.threshold)?;
            info!("epoch {} validation loss {vl:.4} accuracy {va:.4}", epoch + 1);
            history.validation_losses.push(vl);
            history.validation_accuracies.push(va);
        }
    }
    Ok(history)
}

/// A trained classifier with its configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SlumsNet {
    pub config: SlumsNetConfig,
    pub network: Network,
    /// Intensity multiplier applied before the network.
    pub rescale: f64,
}

impl SlumsNet {
    pub fn new(config: SlumsNetConfig, network: Network) -> Self {
        Self {
            config,
            network,
            rescale: AugmentParams::default().rescale,
        }
    }

    pub fn probability(&self, image: &RgbImage) -> Result<f64, SlumsNetError> {
        let x = classifier_input(image, self.config.input_side, self.rescale);
        probability(&self.network, &x)
    }

    pub fn predict_planning(&self, image: &RgbImage) -> Result<PlanningStatus, SlumsNetError> {
        self.predict_with_threshold(image, self.config.threshold)
    }

    pub fn predict_with_threshold(&self, image: &RgbImage, threshold: f64) -> Result<PlanningStatus, SlumsNetError> {
        Ok(PlanningStatus::from_probability(self.probability(image)?, threshold))
    }

    pub fn to_checkpoint(&self, seed: u64, history: &TrainingHistory) -> Checkpoint {
        Checkpoint::new(
            seed,
            serde_json::json!({
                "kind": CHECKPOINT_KIND,
                "config": self.config,
                "rescale": self.rescale,
                "history": history,
            }),
        )
        .with_network(NETWORK_NAME, self.network.clone())
    }

    pub fn from_checkpoint(mut ckpt: Checkpoint) -> Result<(Self, TrainingHistory), SlumsNetError> {
        if ckpt.metadata.get("kind").and_then(|k| k.as_str()) != Some(CHECKPOINT_KIND) {
            return Err(SlumsNetError::InvalidConfig(
                "checkpoint does not hold a classifier".into(),
            ));
        }
        let config: SlumsNetConfig = serde_json::from_value(ckpt.metadata["config"].clone())
            .map_err(|e| SlumsNetError::InvalidConfig(format!("classifier header: {e}")))?;
        config.validate()?;
        let rescale = ckpt.metadata["rescale"].as_f64().unwrap_or(1.0 / 255.0);
        let history = serde_json::from_value(ckpt.metadata["history"].clone()).unwrap_or_default();
        let network = ckpt.take_network(NETWORK_NAME)?;
        if network.specs() != config.layer_specs() {
            return Err(SlumsNetError::InvalidConfig(
                "stored network does not match its configuration".into(),
            ));
        }
        Ok((
            Self {
                config,
                network,
                rescale,
            },
            history,
        ))
    }

    pub fn save(&self, path: impl AsRef<Path>, seed: u64, history: &TrainingHistory) -> Result<(), SlumsNetError> {
        Ok(self.to_checkpoint(seed, history).save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, TrainingHistory), SlumsNetError> {
        Self::from_checkpoint(Checkpoint::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_chain_matches_published_layout() {
        let cfg = SlumsNetConfig::default();
        let kinds: Vec<&str> = cfg.layer_specs().iter().map(|s| s.kind()).collect();
        assert_eq!(
            kinds,
            [
                "conv2d",
                "activation",
                "conv2d",
                "activation",
                "maxpool2d",
                "conv2d",
                "activation",
                "maxpool2d",
                "conv2d",
                "activation",
                "maxpool2d",
                "flatten",
                "dense",
                "activation",
                "dropout",
                "dense",
                "activation",
                "dropout",
                "dense",
                "activation"
            ]
        );
        let dense: Vec<usize> = cfg
            .layer_specs()
            .iter()
            .filter_map(|s| match s {
                LayerSpec::Dense { units } => Some(*units),
                _ => None,
            })
            .collect();
        assert_eq!(dense, [256, 64, 1]);
    }

    #[test]
    fn small_input_builds_and_outputs_probability() {
        let cfg = SlumsNetConfig {
            input_side: 16,
            conv_filters: vec![4, 4, 4, 8],
            dense_units: vec![8, 4],
            ..SlumsNetConfig::default()
        };
        let net = build_slumsnet(&cfg, 1).unwrap();
        assert_eq!(net.output_shape(), &[1]);
        let y = net.infer(&Tensor::filled(&[16, 16, 3], 0.3)).unwrap();
        assert!(y.data()[0] > 0.0 && y.data()[0] < 1.0);
    }

    #[test]
    fn threshold_rule_is_inclusive() {
        assert_eq!(
            PlanningStatus::from_probability(0.5, 0.5).label,
            PlanningLabel::Unplanned
        );
        assert_eq!(
            PlanningStatus::from_probability(0.4999, 0.5).label,
            PlanningLabel::Planned
        );
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = SlumsNetConfig::desk();
        cfg.input_side = 4;
        assert!(cfg.validate().is_err());
        let mut cfg = SlumsNetConfig::desk();
        cfg.dropout_rates = vec![0.5];
        assert!(cfg.validate().is_err());
    }
}
