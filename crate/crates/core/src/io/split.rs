//! Held-out edge split for link prediction and seeded node splits.

use rand::seq::SliceRandom;

use crate::error::Result;
use crate::graph::Graph;
use crate::rng::{tag, SeedStream};
use crate::sampling::sample_eval_negatives;

#[derive(Debug, Clone)]
pub struct LinkSplit {
    pub train: Graph,
    pub test_edges: Vec<(usize, usize)>,
    pub test_negatives: Vec<(usize, usize)>,
}

/// Removes `⌊fraction · d_u⌋` incidences at every node `u` (visited in a
/// seeded order), counting edges already removed through earlier partners.
/// An edge is only removed if both endpoints keep at least one edge.
/// Negatives are an equal number of non-edges of the full graph.
pub fn link_split(g: &Graph, fraction: f64, seed: u64) -> Result<LinkSplit> {
    let n = g.num_nodes();
    let streams = SeedStream::new(seed);
    let mut rng = streams.rng(tag::LINK_SPLIT, 0);
    let quota: Vec<usize> = (0..n)
        .map(|u| (fraction * g.degree(u) as f64).floor() as usize)
        .collect();
    let mut degree: Vec<usize> = (0..n).map(|u| g.degree(u)).collect();
    let mut removed_at = vec![0usize; n];
    let mut removed = std::collections::BTreeSet::new();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    for &u in &order {
        if removed_at[u] >= quota[u] {
            continue;
        }
        let mut cand: Vec<usize> = g.neighbors(u).to_vec();
        cand.shuffle(&mut rng);
        for v in cand {
            if removed_at[u] >= quota[u] {
                break;
            }
            let e = (u.min(v), u.max(v));
            if removed.contains(&e) || degree[u] <= 1 || degree[v] <= 1 {
                continue;
            }
            removed.insert(e);
            degree[u] -= 1;
            degree[v] -= 1;
            removed_at[u] += 1;
            removed_at[v] += 1;
        }
    }
    let train = g.with_edges(g.edges().filter(|e| !removed.contains(e)))?;
    let test_edges: Vec<(usize, usize)> = removed.into_iter().collect();
    let test_negatives = sample_eval_negatives(
        g,
        test_edges.len(),
        &mut streams.rng(tag::EVAL_NEGATIVES, 0),
    )?;
    Ok(LinkSplit {
        train,
        test_edges,
        test_negatives,
    })
}

/// Seeded `train/val/test` partition with the given train and val fractions.
pub fn node_split(n: usize, train: f64, val: f64, seed: u64) -> [(String, Vec<usize>); 3] {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut SeedStream::new(seed).rng(tag::NODE_SPLIT, 0));
    let nt = (train * n as f64).round() as usize;
    let nv = ((val * n as f64).round() as usize).min(n - nt.min(n));
    let mut parts = [
        order[..nt.min(n)].to_vec(),
        order[nt.min(n)..(nt + nv).min(n)].to_vec(),
        order[(nt + nv).min(n)..].to_vec(),
    ];
    parts.iter_mut().for_each(|p| p.sort_unstable());
    let [a, b, c] = parts;
    [("train".into(), a), ("val".into(), b), ("test".into(), c)]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star_plus_clique() -> Graph {
        let mut edges: Vec<(usize, usize)> = (1..6).map(|v| (0, v)).collect();
        for u in 6..12 {
            for v in u + 1..12 {
                edges.push((u, v));
            }
        }
        edges.push((5, 6));
        Graph::structure(12, edges).unwrap()
    }

    #[test]
    fn leaves_keep_their_edge_and_quotas_hold() {
        let g = star_plus_clique();
        let s = link_split(&g, 0.2, 3).unwrap();
        for v in 0..12 {
            assert!(s.train.degree(v) >= 1, "node {v} lost all edges");
            let removed = g.degree(v) - s.train.degree(v);
            let here = s.test_edges.iter().filter(|e| e.0 == v || e.1 == v).count();
            assert_eq!(removed, here);
        }
        // Leaves 1..=4 have degree 1 and keep their only edge.
        for v in 1..5 {
            assert_eq!(s.train.degree(v), 1);
        }
        assert_eq!(s.train.num_edges() + s.test_edges.len(), g.num_edges());
        assert_eq!(s.test_negatives.len(), s.test_edges.len());
        assert!(s.test_negatives.iter().all(|&(u, v)| !g.has_edge(u, v)));
        assert!(s.test_edges.iter().all(|&(u, v)| g.has_edge(u, v)));
    }

    #[test]
    fn same_seed_same_split() {
        let g = star_plus_clique();
        let a = link_split(&g, 0.2, 9).unwrap();
        let b = link_split(&g, 0.2, 9).unwrap();
        assert_eq!(a.test_edges, b.test_edges);
        assert_eq!(a.test_negatives, b.test_negatives);
    }

    #[test]
    fn node_split_partitions() {
        let [(_, tr), (_, va), (_, te)] = node_split(50, 0.2, 0.1, 1);
        assert_eq!((tr.len(), va.len(), te.len()), (10, 5, 35));
        let mut all: Vec<usize> = tr.iter().chain(&va).chain(&te).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        assert_eq!(node_split(50, 0.2, 0.1, 1)[0].1, tr);
    }
}
