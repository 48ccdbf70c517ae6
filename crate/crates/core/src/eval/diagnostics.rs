//! Per-dataset structure and feature diagnostics.

use serde::Serialize;

use crate::error::Result;
use crate::graph::{avg_clustering_coefficient, feature_smoothness, Graph};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetDiagnostics {
    pub smoothness: f64,
    /// `1/λ_f`; `+inf` for perfectly smooth features (serialized as null).
    pub inverse_smoothness: f64,
    pub clustering: f64,
}

pub fn dataset_diagnostics(g: &Graph) -> Result<DatasetDiagnostics> {
    let smoothness = feature_smoothness(g)?;
    Ok(DatasetDiagnostics {
        smoothness,
        inverse_smoothness: if smoothness > 0.0 {
            1.0 / smoothness
        } else {
            f64::INFINITY
        },
        clustering: avg_clustering_coefficient(g),
    })
}

/// Scales `1/λ_f` values by the largest finite one; infinities stay infinite.
pub fn normalize_inverse_smoothness(values: &[f64]) -> Vec<f64> {
    let max = values
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    values
        .iter()
        .map(|&v| {
            if v.is_finite() && max > 0.0 {
                v / max
            } else {
                v
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_features_diverge() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2)], 2, vec![1.0; 6]).unwrap();
        let d = dataset_diagnostics(&g).unwrap();
        assert_eq!(d.inverse_smoothness, f64::INFINITY);
    }

    #[test]
    fn triangle_clustering() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2), (0, 2)], 1, vec![0.0, 1.0, 0.5]).unwrap();
        let d = dataset_diagnostics(&g).unwrap();
        assert_eq!(d.clustering, 1.0);
        assert!(d.inverse_smoothness.is_finite());
        let edgeless = Graph::from_edges(2, [], 1, vec![0.0, 1.0]).unwrap();
        assert!(dataset_diagnostics(&edgeless).is_err());
    }

    #[test]
    fn normalization() {
        assert_eq!(
            normalize_inverse_smoothness(&[2.0, 4.0, f64::INFINITY]),
            vec![0.5, 1.0, f64::INFINITY]
        );
    }
}
