//! Seeded samplers: contrastive triples, pseudo local structures and
//! evaluation non-edges.

use std::collections::HashSet;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::uniform_index;

/// `(i, j, k)` with `(i, j)` an edge and `(i, k)` a non-edge, `k ≠ i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EdgeTriple {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

#[derive(Debug, Clone, Default)]
pub struct TripleBatch {
    pub triples: Vec<EdgeTriple>,
    /// Anchors adjacent to every other node; they yield no triples.
    pub saturated_anchors: Vec<usize>,
}

/// `K` negatives for every directed incidence `(i, j)`, drawn uniformly with
/// rejection against `N(i) ∪ {i}`.
pub fn sample_triples<R: Rng + ?Sized>(
    g: &Graph,
    negatives: usize,
    rng: &mut R,
) -> Result<TripleBatch> {
    if negatives == 0 {
        return Err(Error::InvalidArgument(
            "negatives per edge must be ≥ 1".into(),
        ));
    }
    let n = g.num_nodes();
    let mut out = TripleBatch {
        triples: Vec::with_capacity(g.num_incidences() * negatives),
        saturated_anchors: Vec::new(),
    };
    for i in 0..n {
        let nbrs = g.neighbors(i);
        if nbrs.is_empty() {
            continue;
        }
        if nbrs.len() + 1 >= n {
            out.saturated_anchors.push(i);
            continue;
        }
        for &j in nbrs {
            for _ in 0..negatives {
                let k = loop {
                    let k = uniform_index(rng, n);
                    if k != i && nbrs.binary_search(&k).is_err() {
                        break k;
                    }
                };
                out.triples.push(EdgeTriple { i, j, k });
            }
        }
    }
    if !out.saturated_anchors.is_empty() {
        log::warn!(
            "{} anchor node(s) are adjacent to every other node; no negatives, skipped",
            out.saturated_anchors.len()
        );
    }
    Ok(out)
}

/// `LS_i`: `d` distinct nodes other than `center`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoLocalSet {
    pub center: usize,
    pub members: Vec<usize>,
}

/// One pseudo local set per node, uniform without replacement.
pub fn sample_pseudo_local<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    rng: &mut R,
) -> Result<Vec<PseudoLocalSet>> {
    if d == 0 || d >= n {
        return Err(Error::InvalidArgument(format!(
            "pseudo local size {d} must satisfy 1 ≤ d ≤ n−1 = {}",
            n.saturating_sub(1)
        )));
    }
    Ok((0..n)
        .map(|center| {
            let members = rand::seq::index::sample(rng, n - 1, d)
                .into_iter()
                .map(|m| if m >= center { m + 1 } else { m })
                .collect();
            PseudoLocalSet { center, members }
        })
        .collect())
}

/// `m` distinct unordered non-edges `(u, v)`, `u < v`, sampled uniformly.
pub fn sample_eval_negatives<R: Rng + ?Sized>(
    g: &Graph,
    m: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    let n = g.num_nodes();
    let total_pairs = n * n.saturating_sub(1) / 2;
    let available = total_pairs - g.num_edges();
    if m > available {
        return Err(Error::Sampling(format!(
            "requested {m} non-edges but the graph only has {available}"
        )));
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    if 2 * m > available {
        // Dense regime: enumerate and take a uniform subset.
        let all: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|&(u, v)| !g.has_edge(u, v))
            .collect();
        let mut picked: Vec<(usize, usize)> = rand::seq::index::sample(rng, all.len(), m)
            .into_iter()
            .map(|i| all[i])
            .collect();
        picked.sort_unstable();
        return Ok(picked);
    }
    let mut seen = HashSet::with_capacity(m);
    let mut out = Vec::with_capacity(m);
    while out.len() < m {
        let a = uniform_index(rng, n);
        let b = uniform_index(rng, n);
        if a == b {
            continue;
        }
        let (u, v) = (a.min(b), a.max(b));
        if g.has_edge(u, v) || !seen.insert((u, v)) {
            continue;
        }
        out.push((u, v));
    }
    Ok(out)
}
