//! Immutable undirected attributed graph in CSR form, the symmetric
//! normalization used by the encoder, hop-distance queries and the
//! structural and feature diagnostics.

mod diagnostics;
mod hops;
mod norm;

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub use diagnostics::{avg_clustering_coefficient, feature_smoothness, local_clustering};
pub use hops::{khop_sets, khop_within, KHopSets};
pub use norm::{normalized_adjacency, propagate_twice, NormAdj};

/// Simple undirected graph with dense `f32` node features.
///
/// Neighbor lists are strictly ascending, symmetric and free of self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    num_features: usize,
    features: Vec<f32>,
    labels: Option<Vec<usize>>,
    splits: BTreeMap<String, Vec<usize>>,
}

impl Graph {
    /// Builds a graph from an edge list in either orientation. Duplicate
    /// edges are merged, self-loops dropped and the result symmetrized.
    pub fn from_edges(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        num_features: usize,
        features: Vec<f32>,
    ) -> Result<Self> {
        if features.len() != n * num_features {
            return Err(Error::InvalidGraph(format!(
                "feature buffer has {} values, expected {n}x{num_features}",
                features.len()
            )));
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) references a node outside 0..{n}"
                )));
            }
            if u != v {
                adj[u].push(v);
                adj[v].push(u);
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for mut list in adj {
            list.sort_unstable();
            list.dedup();
            neighbors.extend(list);
            offsets.push(neighbors.len());
        }
        Ok(Self {
            n,
            offsets,
            neighbors,
            num_features,
            features,
            labels: None,
            splits: BTreeMap::new(),
        })
    }

    /// Graph with no features, for structure-only work.
    pub fn structure(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        Self::from_edges(n, edges, 0, Vec::new())
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::InvalidGraph(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.n
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_split(mut self, name: &str, nodes: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = nodes.iter().find(|&&v| v >= self.n) {
            return Err(Error::InvalidGraph(format!(
                "split {name:?} references node {bad} outside 0..{}",
                self.n
            )));
        }
        self.splits.insert(name.to_owned(), nodes);
        Ok(self)
    }

    /// Same nodes, features, labels and splits with a different edge set.
    pub fn with_edges(&self, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Self::from_edges(self.n, edges, self.num_features, self.features.clone())?;
        g.labels = self.labels.clone();
        g.splits = self.splits.clone();
        Ok(g)
    }

    pub fn with_features(&self, num_features: usize, features: Vec<f32>) -> Result<Self> {
        if features.len() != self.n * num_features {
            return Err(Error::InvalidGraph("feature buffer size".into()));
        }
        let mut g = self.clone();
        g.num_features = num_features;
        g.features = features;
        Ok(g)
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.n
    }

    /// Undirected edge count.
    #[inline]
    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    /// Directed incidences, i.e. `Σ_i d_i`.
    #[inline]
    pub fn num_incidences(&self) -> usize {
        self.neighbors.len()
    }

    #[inline]
    pub fn num_features(&self) -> usize {
        self.num_features
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in CSR order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn feature_row(&self, v: usize) -> &[f32] {
        &self.features[v * self.num_features..(v + 1) * self.num_features]
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().max())
            .map_or(0, |m| m + 1)
    }

    pub fn split(&self, name: &str) -> Option<&[usize]> {
        self.splits.get(name).map(Vec::as_slice)
    }

    pub fn splits(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.splits
    }

    /// Copy with every feature row scaled to unit L1 norm (all-zero rows kept).
    pub fn row_normalized(&self) -> Self {
        let mut g = self.clone();
        let f = self.num_features;
        if f == 0 {
            return g;
        }
        for row in g.features.chunks_exact_mut(f) {
            let s: f64 = row.iter().map(|v| v.abs() as f64).sum();
            if s > 0.0 {
                for v in row {
                    *v = (*v as f64 / s) as f32;
                }
            }
        }
        g
    }

    /// Relabels node `v` as `perm[v]`, carrying features, labels and splits.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::InvalidArgument("permutation length".into()));
        }
        let f = self.num_features;
        let mut features = vec![0.0f32; self.features.len()];
        for v in 0..self.n {
            features[perm[v] * f..(perm[v] + 1) * f].copy_from_slice(self.feature_row(v));
        }
        let mut g = Self::from_edges(
            self.n,
            self.edges().map(|(u, v)| (perm[u], perm[v])),
            f,
            features,
        )?;
        if let Some(l) = &self.labels {
            let mut nl = vec![0; self.n];
            for v in 0..self.n {
                nl[perm[v]] = l[v];
            }
            g.labels = Some(nl);
        }
        g.splits = self
            .splits
            .iter()
            .map(|(k, s)| (k.clone(), s.iter().map(|&v| perm[v]).collect()))
            .collect();
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ingestion_dedups_symmetrizes_and_drops_loops() {
        let g = Graph::structure(4, [(0, 1), (1, 0), (1, 1), (2, 1), (0, 1), (3, 2)]).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert_eq!(g.neighbors(2), &[1, 3]);
        assert_eq!(g.num_edges(), 3);
        assert_eq!(g.num_incidences(), 6);
        for u in 0..4 {
            for &v in g.neighbors(u) {
                assert!(g.has_edge(v, u));
                assert_ne!(u, v);
            }
        }
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2), (2, 3)]);
    }

    #[test]
    fn out_of_range_edge_is_rejected() {
        assert!(Graph::structure(2, [(0, 2)]).is_err());
        assert!(Graph::from_edges(2, [(0, 1)], 3, vec![0.0; 5]).is_err());
    }

    #[test]
    fn row_normalization_sums_to_one() {
        let g = Graph::from_edges(2, [(0, 1)], 3, vec![1.0, 3.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let r = g.row_normalized();
        assert_eq!(r.feature_row(0), &[0.25, 0.75, 0.0]);
        assert_eq!(r.feature_row(1), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn permutation_relabels_everything() {
        let g = Graph::from_edges(3, [(0, 1)], 1, vec![10.0, 20.0, 30.0])
            .unwrap()
            .with_labels(vec![0, 1, 2])
            .unwrap()
            .with_split("train", vec![0])
            .unwrap();
        let p = g.permuted(&[2, 0, 1]).unwrap();
        assert!(p.has_edge(2, 0));
        assert_eq!(p.feature_row(2), &[10.0]);
        assert_eq!(p.labels().unwrap(), &[1, 2, 0]);
        assert_eq!(p.split("train").unwrap(), &[2]);
    }
}
