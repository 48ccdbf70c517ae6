//! Synthetic fixtures shared by the benchmarks.

use rand::Rng;
use sail_core::{Graph, SeedStream};

/// Planted-partition graph with sparse binary features, sized like a
/// citation benchmark when called with `(2708, 1433, 7, 3.9)`.
pub fn planted_graph(
    n: usize,
    features: usize,
    classes: usize,
    avg_degree: f64,
    seed: u64,
) -> Graph {
    let mut rng = SeedStream::new(seed).rng("bench-graph", 0);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let mut by_class = vec![Vec::new(); classes];
    for (v, &l) in labels.iter().enumerate() {
        by_class[l].push(v);
    }
    let m = (avg_degree * n as f64 / 2.0) as usize;
    let mut edges = Vec::with_capacity(m);
    while edges.len() < m {
        let u = rng.random_range(0..n);
        let v = if rng.random_bool(0.8) {
            let c = &by_class[labels[u]];
            c[rng.random_range(0..c.len())]
        } else {
            rng.random_range(0..n)
        };
        if u != v {
            edges.push((u, v));
        }
    }
    let per_row = 18.min(features);
    let mut x = vec![0.0f32; n * features];
    for v in 0..n {
        for _ in 0..per_row {
            let base = labels[v] * features / classes;
            let c = if rng.random_bool(0.5) {
                (base + rng.random_range(0..(features / classes).max(1))) % features
            } else {
                rng.random_range(0..features)
            };
            x[v * features + c] = 1.0;
        }
    }
    Graph::from_edges(n, edges, features, x)
        .and_then(|g| g.with_labels(labels))
        .expect("fixture graph is valid")
}
