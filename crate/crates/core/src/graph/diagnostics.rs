use super::Graph;
use crate::error::{Error, Result};

/// `λ_f = ‖Σ_i Σ_{j∈N(i)} (x_i − x_j)²‖₁ / (|E|·F)` over features min-max
/// scaled into `[0, 1]` per dimension. `|E|` counts directed incidences,
/// matching the double sum. Constant dimensions scale to 0.
pub fn feature_smoothness(g: &Graph) -> Result<f64> {
    if g.num_incidences() == 0 {
        return Err(Error::UndefinedSmoothness);
    }
    let f = g.num_features();
    if f == 0 {
        return Err(Error::InvalidArgument("graph has no features".into()));
    }
    let mut lo = vec![f64::INFINITY; f];
    let mut hi = vec![f64::NEG_INFINITY; f];
    for v in 0..g.num_nodes() {
        for (c, &x) in g.feature_row(v).iter().enumerate() {
            lo[c] = lo[c].min(x as f64);
            hi[c] = hi[c].max(x as f64);
        }
    }
    let scale: Vec<f64> = lo
        .iter()
        .zip(&hi)
        .map(|(l, h)| if h > l { 1.0 / (h - l) } else { 0.0 })
        .collect();
    let mut total = 0.0;
    for i in 0..g.num_nodes() {
        let xi = g.feature_row(i);
        for &j in g.neighbors(i) {
            let xj = g.feature_row(j);
            for c in 0..f {
                let d = (xi[c] as f64 - xj[c] as f64) * scale[c];
                total += d * d;
            }
        }
    }
    Ok(total / (g.num_incidences() as f64 * f as f64))
}

/// Watts–Strogatz local coefficient; nodes of degree < 2 score 0.
pub fn local_clustering(g: &Graph, v: usize) -> f64 {
    let nbrs = g.neighbors(v);
    let d = nbrs.len();
    if d < 2 {
        return 0.0;
    }
    let mut links = 0usize;
    for (a, &u) in nbrs.iter().enumerate() {
        // count neighbors of u that are in nbrs and come after u
        let un = g.neighbors(u);
        let rest = &nbrs[a + 1..];
        let (mut p, mut q) = (0, 0);
        while p < un.len() && q < rest.len() {
            match un[p].cmp(&rest[q]) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => {
                    links += 1;
                    p += 1;
                    q += 1;
                }
            }
        }
    }
    2.0 * links as f64 / (d * (d - 1)) as f64
}

pub fn avg_clustering_coefficient(g: &Graph) -> f64 {
    if g.num_nodes() == 0 {
        return 0.0;
    }
    (0..g.num_nodes())
        .map(|v| local_clustering(g, v))
        .sum::<f64>()
        / g.num_nodes() as f64
}
