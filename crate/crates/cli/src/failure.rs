//! Exit-code classification of command failures.

use std::path::Path;

use anyhow::Context;
use urbani_core::detector::SsdModel;
use urbani_core::slumsnet::SlumsNet;

pub const USAGE: u8 = 1;
pub const DATA: u8 = 2;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: USAGE,
            error: error.into(),
        }
    }

    pub fn data(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: DATA,
            error: error.into(),
        }
    }
}

pub trait Classify<T> {
    /// Usage or configuration error (exit 1).
    fn or_usage(self) -> Result<T, Failure>;
    /// Input data error (exit 2).
    fn or_data(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn or_usage(self) -> Result<T, Failure> {
        self.map_err(Failure::usage)
    }

    fn or_data(self) -> Result<T, Failure> {
        self.map_err(Failure::data)
    }
}

pub fn check_threshold(name: &str, v: f64) -> Result<(), Failure> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Failure::usage(anyhow::anyhow!("{name} must lie in [0, 1], got {v}")))
    }
}

pub fn load_models(classifier: &Path, detector: &Path) -> Result<(SlumsNet, SsdModel), Failure> {
    let (net, _) = SlumsNet::load(classifier)
        .with_context(|| format!("loading classifier {}", classifier.display()))
        .or_usage()?;
    let (det, _) = SsdModel::load(detector)
        .with_context(|| format!("loading detector {}", detector.display()))
        .or_usage()?;
    Ok((net, det))
}
