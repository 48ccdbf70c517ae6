//! On-disk formats: dataset directories, run configuration, manifests,
//! metric reports, and derived splits.

pub mod config;
pub mod dataset;
pub mod manifest;
pub mod report;
pub mod split;

use std::path::Path;

use crate::error::{Error, Result};

pub use config::{load_config, parse_config, render_config};
pub use dataset::{load_dataset, read_pairs, write_dataset, write_pairs, Meta};
pub use manifest::{config_hash, hash_inputs, RunManifest};
pub use report::{reports_to_csv, MetricsReport};
pub use split::{link_split, node_split, LinkSplit};

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(e) => format!("{}.tmp", e.to_string_lossy()),
        None => "tmp".into(),
    });
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}
