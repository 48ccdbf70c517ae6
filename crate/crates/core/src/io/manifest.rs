//! Run manifests and content hashes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::render_config;
use crate::error::{Error, Result};
use crate::trainer::TrainConfig;

pub const DATASET_FILES: [&str; 5] = [
    "meta.json",
    "edges.tsv",
    "features.tsv",
    "labels.tsv",
    "splits.json",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub dataset: String,
    pub config: TrainConfig,
    pub seed: u64,
    pub config_hash: String,
    /// sha256 over the dataset files and the resolved config.
    pub input_hash: String,
    pub outputs: BTreeMap<String, String>,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(command: &str, dataset: &Path, config: &TrainConfig) -> Result<Self> {
        Ok(Self {
            command: command.into(),
            dataset: dataset.display().to_string(),
            seed: config.seed,
            config_hash: config_hash(config),
            input_hash: hash_inputs(dataset, config)?,
            config: config.clone(),
            outputs: BTreeMap::new(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&super::read_text(path)?)?)
    }
}

pub fn config_hash(cfg: &TrainConfig) -> String {
    hex::encode(Sha256::digest(render_config(cfg).as_bytes()))
}

pub fn hash_inputs(dataset: &Path, cfg: &TrainConfig) -> Result<String> {
    let mut h = Sha256::new();
    for name in DATASET_FILES {
        let p = dataset.join(name);
        if !p.exists() {
            continue;
        }
        let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    h.update(render_config(cfg).as_bytes());
    Ok(hex::encode(h.finalize()))
}
