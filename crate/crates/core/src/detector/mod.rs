//! SSD-style single-shot object detector: default boxes, matching,
//! multibox loss, non-maximum suppression and the convolutional model.

use thiserror::Error;

pub mod boxes;
pub mod eval;
pub mod loss;
pub mod matching;
pub mod model;
pub mod nms;
pub mod patch;
pub mod priors;

pub use boxes::{decode_offsets, encode_offsets, jaccard, Bbox, CenterBox};
pub use loss::{multibox_loss, multibox_loss_grad, MultiboxConfig, MultiboxLoss};
pub use matching::{match_default_boxes, MatchAssignment, MatchedBox};
pub use model::{train_detector, DetectorConfig, DetectorHistory, SsdModel, TrainingImage};
pub use nms::nms;
pub use priors::{generate_default_boxes, DefaultBoxSpec};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("degenerate box: {0}")]
    DegenerateBox(String),
    #[error("invalid detector configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no training images")]
    EmptyDataset,
    #[error(transparent)]
    Network(#[from] urbani_nnet::NnError),
}

/// A labelled object box in normalized image coordinates; class 0 is
/// reserved for background.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub bbox: Bbox,
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub class: usize,
    pub label: String,
    pub score: f64,
    pub bbox: Bbox,
}
