//! Downstream and diagnostic measurements on frozen representations.

pub mod auc;
pub mod cluster;
pub mod diagnostics;
pub mod mad;
pub mod probe;

use serde::Serialize;

use crate::diffgrad::Tensor2;
use crate::error::{Error, Result};

pub use auc::{link_auc, roc_auc};
pub use cluster::{contingency, kmeans, kmeans_nmi, nmi, KMeansOptions, KMeansResult};
pub use diagnostics::{dataset_diagnostics, normalize_inverse_smoothness, DatasetDiagnostics};
pub use mad::{mad_suite, MadOptions, MadReport};
pub use probe::{linear_probe, ProbeOptions, ProbeReport};

/// Final node representations with where they came from.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    pub h: Tensor2,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub checkpoint: Option<String>,
    pub config_hash: Option<String>,
}

impl EmbeddingSet {
    pub fn new(h: Tensor2, num_nodes: usize) -> Result<Self> {
        Self::with_provenance(h, num_nodes, Provenance::default())
    }

    pub fn with_provenance(h: Tensor2, num_nodes: usize, provenance: Provenance) -> Result<Self> {
        if h.rows() != num_nodes {
            return Err(Error::shape(
                "embedding set",
                format!("{} rows for a graph of {num_nodes} nodes", h.rows()),
            ));
        }
        h.ensure_finite("embedding set")?;
        Ok(Self { h, provenance })
    }

    pub fn num_nodes(&self) -> usize {
        self.h.rows()
    }

    pub fn dim(&self) -> usize {
        self.h.cols()
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
