#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use sail_core::{Graph, SeedStream};

/// Connected-ish random graph: a ring plus random chords, with dense
/// random features in `[0, 1)` (sparsified by `density`).
pub fn random_graph(n: usize, f: usize, chords: usize, density: f64, seed: u64) -> Graph {
    let mut rng = SeedStream::new(seed).rng("test-graph", 0);
    let mut edges: Vec<(usize, usize)> = (0..n).map(|u| (u, (u + 1) % n)).collect();
    for _ in 0..chords {
        edges.push((rng.random_range(0..n), rng.random_range(0..n)));
    }
    let x = (0..n * f)
        .map(|_| {
            if rng.random_bool(density) {
                rng.random_range(0.05..1.0)
            } else {
                0.0
            }
        })
        .collect();
    Graph::from_edges(n, edges, f, x).unwrap()
}

/// Ring of `n` nodes split into `parts` disjoint arcs (several components).
pub fn fragmented_graph(n: usize, f: usize, parts: usize, seed: u64) -> Graph {
    let mut rng = SeedStream::new(seed).rng("test-graph", 1);
    let cut = n / parts;
    let edges: Vec<(usize, usize)> = (0..n - 1)
        .filter(|u| (u + 1) % cut != 0)
        .map(|u| (u, u + 1))
        .collect();
    let x = (0..n * f).map(|_| rng.random_range(-1.0..1.0)).collect();
    Graph::from_edges(n, edges, f, x).unwrap()
}

fn repo_root() -> PathBuf {
    let core = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    core.parent()
        .and_then(|p| p.parent())
        .map_or(core.clone(), PathBuf::from)
}

pub fn toy_dataset() -> PathBuf {
    repo_root().join("data/toy30")
}

pub fn data_root() -> PathBuf {
    std::env::var_os("SAIL_DATA_ROOT")
        .map(PathBuf::from)
        .unwrap_or_else(|| repo_root().join("data"))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}
