use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::network::{LayerSpec, Network};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointLayer {
    #[serde(flatten)]
    spec: LayerSpec,
    weights: Matrix,
}

/// Versioned on-disk network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub num_classes: usize,
    layers: Vec<CheckpointLayer>,
    pub seed: u64,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

impl Checkpoint {
    pub fn new(net: &Network, seed: u64, metadata: serde_json::Value) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            num_classes: net.num_classes(),
            layers: net
                .layers()
                .iter()
                .map(|l| CheckpointLayer { spec: l.spec, weights: l.weight.clone() })
                .collect(),
            seed,
            metadata,
        }
    }

    pub fn network(&self) -> Result<Network> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(Error::ArtifactMismatch(format!(
                "checkpoint format {} (this build reads {})",
                self.format_version, CHECKPOINT_VERSION
            )));
        }
        Network::from_parts(
            self.layers.iter().map(|l| l.spec).collect(),
            self.layers.iter().map(|l| l.weights.clone()).collect(),
            self.num_classes,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// SHA-256 of the architecture and weight bit patterns.
pub fn network_hash(net: &Network) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&net.specs()).expect("specs serialize"));
    h.update((net.num_classes() as u64).to_le_bytes());
    for w in net.weights() {
        for v in w.as_slice() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    #[test]
    fn save_load_is_bit_exact() {
        let net = Network::init(
            vec![
                LayerSpec::Conv {
                    in_channels: 1,
                    out_channels: 2,
                    kernel_size: 2,
                    stride: 1,
                    in_height: 3,
                    in_width: 3,
                    activation: Activation::Relu,
                },
                LayerSpec::dense(8, 3, Activation::Identity),
            ],
            3,
            17,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("net.json");
        Checkpoint::new(&net, 17, serde_json::json!({"note": "t"})).save(&p).unwrap();
        let back = Checkpoint::load(&p).unwrap().network().unwrap();
        assert_eq!(back, net);
        assert_eq!(network_hash(&back), network_hash(&net));
    }

    #[test]
    fn missing_file_is_a_missing_artifact() {
        let err = Checkpoint::load(Path::new("/nonexistent/net.json")).unwrap_err();
        assert!(matches!(err, Error::MissingArtifact(_)));
    }
}
