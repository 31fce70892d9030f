//! Versioned binary container for one or more named networks.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "URBNCKPT"
//! version  u32
//! header   u64 length, then UTF-8 JSON (layer specs, tensor names/shapes,
//!          seed, free-form metadata)
//! payload  f64 values of every tensor, in header order
//! ```
//!
//! Parameters are stored as raw IEEE-754 bits, so a load reproduces
//! forward outputs bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::layer::LayerSpec;
use crate::network::Network;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"URBNCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    seed: u64,
    metadata: serde_json::Value,
    networks: Vec<NetworkHeader>,
}

#[derive(Serialize, Deserialize)]
struct NetworkHeader {
    name: String,
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    tensors: Vec<TensorHeader>,
}

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub metadata: serde_json::Value,
    pub networks: Vec<(String, Network)>,
}

impl Checkpoint {
    pub fn new(seed: u64, metadata: serde_json::Value) -> Self {
        Self {
            seed,
            metadata,
            networks: Vec::new(),
        }
    }

    pub fn with_network(mut self, name: impl Into<String>, net: Network) -> Self {
        self.networks.push((name.into(), net));
        self
    }

    pub fn network(&self, name: &str) -> Option<&Network> {
        self.networks.iter().find(|(n, _)| n == name).map(|(_, net)| net)
    }

    pub fn take_network(&mut self, name: &str) -> Result<Network> {
        let pos = self
            .networks
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| NnError::Checkpoint(format!("no network named {name:?}")))?;
        Ok(self.networks.remove(pos).1)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let header = Header {
            version: CHECKPOINT_VERSION,
            seed: self.seed,
            metadata: self.metadata.clone(),
            networks: self
                .networks
                .iter()
                .map(|(name, net)| NetworkHeader {
                    name: name.clone(),
                    input_shape: net.input_shape().to_vec(),
                    layers: net.specs(),
                    tensors: net
                        .parameter_names()
                        .into_iter()
                        .zip(net.parameters())
                        .map(|(name, t)| TensorHeader {
                            name,
                            shape: t.shape().to_vec(),
                        })
                        .collect(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| NnError::Checkpoint(format!("encoding header: {e}")))?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for (_, net) in &self.networks {
            for t in net.parameters() {
                for v in t.data() {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(NnError::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!("unsupported format version {version}")));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let header: Header =
            serde_json::from_slice(&json).map_err(|e| NnError::Checkpoint(format!("decoding header: {e}")))?;

        let mut networks = Vec::with_capacity(header.networks.len());
        for nh in header.networks {
            let mut params = Vec::with_capacity(nh.tensors.len());
            for th in &nh.tensors {
                let count: usize = th.shape.iter().product();
                let mut bytes = vec![0u8; count * 8];
                r.read_exact(&mut bytes)
                    .map_err(|e| NnError::Checkpoint(format!("reading tensor {}: {e}", th.name)))?;
                let data = bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect();
                params.push(Tensor::new(th.shape.clone(), data)?);
            }
            let net = Network::from_parameters(&nh.input_shape, nh.layers, params, header.seed)?;
            networks.push((nh.name, net));
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(NnError::Checkpoint("trailing bytes after payload".into()));
        }
        Ok(Self {
            seed: header.seed,
            metadata: header.metadata,
            networks,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_net(seed: u64) -> Network {
        Network::new(
            &[8, 8, 3],
            vec![
                LayerSpec::conv(4, 3),
                LayerSpec::relu(),
                LayerSpec::pool(2),
                LayerSpec::Flatten,
                LayerSpec::dense(6),
                LayerSpec::dropout(0.5),
                LayerSpec::dense(1),
                LayerSpec::sigmoid(),
            ],
            seed,
        )
        .unwrap()
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let net = sample_net(17);
        let ckpt = Checkpoint::new(17, serde_json::json!({"history": {"loss": [0.7, 0.31]}}))
            .with_network("main", net.clone());
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded, ckpt);
        let x = Tensor::filled(&[8, 8, 3], 0.25);
        let a = net.infer(&x).unwrap();
        let b = loaded.network("main").unwrap().infer(&x).unwrap();
        assert_eq!(a.data()[0].to_bits(), b.data()[0].to_bits());
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(Checkpoint::read_from(&b"NOTACKPT\x01\0\0\0"[..]).is_err());
        let mut bytes = Vec::new();
        Checkpoint::new(0, serde_json::Value::Null)
            .with_network("n", sample_net(0))
            .write_to(&mut bytes)
            .unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(Checkpoint::read_from(&bytes[..]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn arbitrary_parameters_survive(seed in any::<u64>(), bias in prop::num::f64::NORMAL) {
            let mut net = sample_net(seed);
            net.parameters_mut().nth(1).unwrap().data_mut()[0] = bias;
            let mut bytes = Vec::new();
            Checkpoint::new(seed, serde_json::Value::Null).with_network("n", net.clone()).write_to(&mut bytes).unwrap();
            let back = Checkpoint::read_from(&bytes[..]).unwrap();
            prop_assert_eq!(back.network("n").unwrap(), &net);
        }
    }
}
