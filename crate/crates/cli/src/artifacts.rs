//! On-disk artifacts. Every JSON artifact carries a [`Stamp`] naming the
//! config, seed and dataset it was produced from.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use unsc::data::{load_csv, Dataset};
use unsc::experiment::ExperimentConfig;
use unsc::nn::{Checkpoint, Network, TrainLog};
use unsc::subspace::ClassSubspace;
use unsc::{Error, Result};

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamp {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub data_hash: String,
}

impl Stamp {
    pub fn new(config: &ExperimentConfig, data_hash: &str) -> Self {
        Stamp {
            format_version: ARTIFACT_VERSION,
            config_hash: config.hash(),
            seed: config.seed,
            data_hash: data_hash.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataMeta {
    pub stamp: Stamp,
    pub num_classes: usize,
    pub samples: usize,
    pub provenance: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub stamp: Stamp,
    pub role: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_log: Option<TrainLog>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<unsc::unlearn::RunManifest>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubspaceSet {
    pub stamp: Stamp,
    pub source_checkpoint_hash: String,
    pub batch_size: usize,
    pub subspaces: Vec<ClassSubspace>,
}

pub struct Layout {
    pub dir: PathBuf,
}

impl Layout {
    pub fn new(dir: PathBuf) -> Self {
        Layout { dir }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn data_csv(&self) -> PathBuf {
        self.path("data.csv")
    }

    pub fn data_meta(&self) -> PathBuf {
        self.path("data.json")
    }

    pub fn checkpoint(&self, model: &str) -> PathBuf {
        self.path(&format!("model-{}.json", file_stem(model)))
    }

    pub fn subspaces(&self) -> PathBuf {
        self.path("subspaces.json")
    }

    pub fn evaluation(&self, model: &str) -> PathBuf {
        self.path(&format!("evaluation-{}.json", file_stem(model)))
    }
}

fn file_stem(model: &str) -> String {
    model.replace('+', "-")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::ArtifactMismatch(format!("{} does not parse: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

/// Loads the dataset and checks it against its recorded hash.
pub fn load_data(layout: &Layout) -> Result<(Dataset, DataMeta)> {
    let meta: DataMeta = read_json(&layout.data_meta())?;
    let csv = layout.data_csv();
    if !csv.exists() {
        return Err(Error::MissingArtifact(csv));
    }
    let ds = load_csv(&csv, Some(meta.num_classes))?;
    let hash = ds.content_hash();
    if hash != meta.stamp.data_hash {
        return Err(Error::ArtifactMismatch(format!(
            "{} hashes to {hash}, metadata records {}",
            csv.display(),
            meta.stamp.data_hash
        )));
    }
    Ok((ds, meta))
}

pub fn save_checkpoint(path: &Path, net: &Network, meta: &CheckpointMeta) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Checkpoint::new(net, meta.stamp.seed, serde_json::to_value(meta)?).save(path)
}

/// Loads a checkpoint written from the dataset with hash `data_hash`.
pub fn load_checkpoint(path: &Path, data_hash: &str) -> Result<(Network, CheckpointMeta)> {
    let ckpt = Checkpoint::load(path)?;
    let meta: CheckpointMeta = serde_json::from_value(ckpt.metadata.clone())
        .map_err(|e| Error::ArtifactMismatch(format!("{}: metadata: {e}", path.display())))?;
    check_data_hash(path, &meta.stamp, data_hash)?;
    Ok((ckpt.network()?, meta))
}

pub fn check_data_hash(path: &Path, stamp: &Stamp, data_hash: &str) -> Result<()> {
    if stamp.data_hash != data_hash {
        return Err(Error::ArtifactMismatch(format!(
            "{} was built from data {}, current data is {data_hash}",
            path.display(),
            stamp.data_hash
        )));
    }
    Ok(())
}
