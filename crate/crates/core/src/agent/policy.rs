//! Portable JSON policy document.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Dense, QNetwork};
use super::Normalizer;
use crate::error::{Error, Result};

pub const POLICY_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub inputs: usize,
    pub outputs: usize,
    /// "relu" for hidden layers, "identity" for the output layer.
    pub activation: String,
    /// Row-major, `outputs × inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub format_version: u32,
    /// Scales applied to the raw observation before the first layer.
    pub normalization: Normalizer,
    pub layers: Vec<LayerRecord>,
}

impl PolicyFile {
    pub fn from_network(q: &QNetwork, normalization: Normalizer) -> Self {
        let n = q.layers().len();
        let layers = q
            .layers()
            .iter()
            .enumerate()
            .map(|(i, l)| LayerRecord {
                inputs: l.inputs,
                outputs: l.outputs,
                activation: if i + 1 < n { "relu" } else { "identity" }.to_string(),
                weights: l.weights.clone(),
                biases: l.biases.clone(),
            })
            .collect();
        Self {
            format_version: POLICY_FORMAT_VERSION,
            normalization,
            layers,
        }
    }

    pub fn to_network(&self) -> Result<QNetwork> {
        if self.format_version != POLICY_FORMAT_VERSION {
            return Err(Error::Policy(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        let n = self.layers.len();
        for (i, l) in self.layers.iter().enumerate() {
            let expected = if i + 1 < n { "relu" } else { "identity" };
            if l.activation != expected {
                return Err(Error::Policy(format!(
                    "layer {i} activation `{}`, expected `{expected}`",
                    l.activation
                )));
            }
        }
        QNetwork::from_layers(
            self.layers
                .iter()
                .map(|l| Dense {
                    inputs: l.inputs,
                    outputs: l.outputs,
                    weights: l.weights.clone(),
                    biases: l.biases.clone(),
                })
                .collect(),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ChamberConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let q = QNetwork::new(&mut ChaCha8Rng::seed_from_u64(21));
        let doc = PolicyFile::from_network(&q, Normalizer::from(&ChamberConfig::default()));
        let back = PolicyFile::from_json(&doc.to_json().unwrap()).unwrap();
        assert_eq!(back, doc);
        let q2 = back.to_network().unwrap();
        for (a, b) in q.parameters().zip(q2.parameters()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_unknown_version_and_bad_shapes() {
        let q = QNetwork::zeros(&[11, 4, 3]);
        let mut doc = PolicyFile::from_network(&q, Normalizer::from(&ChamberConfig::default()));
        doc.format_version = 99;
        assert!(doc.to_network().is_err());
        doc.format_version = POLICY_FORMAT_VERSION;
        doc.layers[0].weights.pop();
        assert!(doc.to_network().is_err());
    }
}
