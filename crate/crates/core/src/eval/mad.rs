//! Mean average cosine distance between nodes near each other and nodes far
//! apart in the graph.
//!
//! Pairs `(s, v)` with `v` within `hops` steps of `s` are neighbors; all
//! other pairs (including cross-component ones) are remote. Both classes are
//! pooled means over ordered pairs.

use rayon::prelude::*;
use serde::Serialize;

use super::EmbeddingSet;
use crate::diffgrad::tensor::{dot, norm};
use crate::error::{Error, Result};
use crate::graph::{khop_within, Graph};
use crate::rng::{tag, SeedStream};

#[derive(Debug, Clone)]
pub struct MadOptions {
    pub hops: usize,
    /// Graphs above this size use a source sample.
    pub sample_above: usize,
    pub sample_sources: usize,
    pub seed: u64,
}

impl Default for MadOptions {
    fn default() -> Self {
        Self {
            hops: 3,
            sample_above: 5000,
            sample_sources: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MadReport {
    pub mad_nei: f64,
    pub mad_rmt: f64,
    pub mad_gap: f64,
    /// `None` when `mad_nei` is zero.
    pub mad_ratio: Option<f64>,
    pub neighbor_pairs: u64,
    pub remote_pairs: u64,
    pub sources: usize,
    pub sampled: bool,
    pub excluded_zero_rows: usize,
}

pub fn mad_suite(emb: &EmbeddingSet, g: &Graph, opts: &MadOptions) -> Result<MadReport> {
    let n = g.num_nodes();
    if emb.num_nodes() != n {
        return Err(Error::Eval("embedding rows differ from graph nodes".into()));
    }
    let dim = emb.dim();
    let mut unit = emb.h.clone();
    let mut valid = vec![true; n];
    for (v, ok) in valid.iter_mut().enumerate() {
        let nv = norm(emb.h.row(v));
        if nv == 0.0 {
            *ok = false;
        } else {
            unit.row_mut(v).iter_mut().for_each(|x| *x /= nv);
        }
    }
    let excluded = valid.iter().filter(|v| !**v).count();
    if excluded > 0 {
        log::warn!("MAD: {excluded} zero-norm embedding row(s) excluded");
    }
    let live: Vec<usize> = (0..n).filter(|&v| valid[v]).collect();
    let mut total = vec![0.0; dim];
    for &v in &live {
        for (t, x) in total.iter_mut().zip(unit.row(v)) {
            *t += x;
        }
    }
    let sampled = n > opts.sample_above && live.len() > opts.sample_sources;
    let sources: Vec<usize> = if sampled {
        let mut rng = SeedStream::new(opts.seed).rng(tag::MAD_SOURCES, 0);
        let mut s: Vec<usize> = rand::seq::index::sample(&mut rng, live.len(), opts.sample_sources)
            .into_iter()
            .map(|i| live[i])
            .collect();
        s.sort_unstable();
        s
    } else {
        live.clone()
    };
    // Per source: (neighbor distance sum, neighbor count, all-pair distance sum).
    let per: Vec<(f64, u64, f64)> = sources
        .par_iter()
        .map(|&s| {
            let us = unit.row(s);
            let mut nsum = 0.0;
            let mut ncount = 0u64;
            for v in khop_within(g, s, opts.hops) {
                if valid[v] {
                    nsum += 1.0 - dot(us, unit.row(v));
                    ncount += 1;
                }
            }
            let others = (live.len() - 1) as f64;
            let all = others - (dot(us, &total) - dot(us, us));
            (nsum, ncount, all)
        })
        .collect();
    let mut nei = (0.0, 0u64);
    let mut rmt = (0.0, 0u64);
    for &(nsum, ncount, all) in &per {
        nei.0 += nsum;
        nei.1 += ncount;
        rmt.0 += all - nsum;
        rmt.1 += (live.len() as u64 - 1) - ncount;
    }
    if nei.1 == 0 || rmt.1 == 0 {
        return Err(Error::Eval(format!(
            "MAD needs both neighbor and remote pairs (found {} and {})",
            nei.1, rmt.1
        )));
    }
    // Cancellation in the total-sum trick can leave tiny negatives.
    let mad_nei = (nei.0 / nei.1 as f64).max(0.0);
    let mad_rmt = (rmt.0 / rmt.1 as f64).max(0.0);
    let mad_gap = mad_rmt - mad_nei;
    Ok(MadReport {
        mad_nei,
        mad_rmt,
        mad_gap,
        mad_ratio: (mad_nei > 0.0).then(|| mad_gap / mad_nei),
        neighbor_pairs: nei.1,
        remote_pairs: rmt.1,
        sources: sources.len(),
        sampled,
        excluded_zero_rows: excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffgrad::Tensor2;

    fn path(n: usize) -> Graph {
        Graph::structure(n, (0..n - 1).map(|i| (i, i + 1))).unwrap()
    }

    fn brute(h: &Tensor2, g: &Graph) -> (f64, f64) {
        let hops = crate::graph::khop_sets(g, 3).unwrap();
        let cos = |a: &[f64], b: &[f64]| dot(a, b) / (norm(a) * norm(b));
        let (mut ns, mut nc, mut rs, mut rc) = (0.0, 0.0, 0.0, 0.0);
        for s in 0..g.num_nodes() {
            for v in 0..g.num_nodes() {
                if v == s {
                    continue;
                }
                let d = 1.0 - cos(h.row(s), h.row(v));
                if hops.within(s).contains(&v) {
                    ns += d;
                    nc += 1.0;
                } else {
                    rs += d;
                    rc += 1.0;
                }
            }
        }
        (ns / nc, rs / rc)
    }

    #[test]
    fn identical_embeddings_are_degenerate() {
        let g = path(6);
        let emb = EmbeddingSet::new(Tensor2::filled(6, 3, 1.0), 6).unwrap();
        let r = mad_suite(&emb, &g, &MadOptions::default()).unwrap();
        assert!(r.mad_nei.abs() < 1e-12 && r.mad_rmt.abs() < 1e-12);
        assert_eq!(r.mad_ratio, None);
    }

    #[test]
    fn path_with_orthogonal_ends() {
        let g = path(5);
        let h = Tensor2::from_rows(&[
            vec![1.0, 0.0],
            vec![1.0, 0.1],
            vec![1.0, 1.0],
            vec![0.1, 1.0],
            vec![0.0, 1.0],
        ])
        .unwrap();
        let emb = EmbeddingSet::new(h.clone(), 5).unwrap();
        let r = mad_suite(&emb, &g, &MadOptions::default()).unwrap();
        let (nei, rmt) = brute(&h, &g);
        assert!((r.mad_nei - nei).abs() < 1e-12);
        assert!((r.mad_rmt - rmt).abs() < 1e-12);
        assert!(
            (r.mad_rmt - 1.0).abs() < 1e-12,
            "only remote pairs are the endpoints"
        );
        assert!(r.mad_gap > 0.0);
        assert_eq!(r.remote_pairs, 2);
    }

    #[test]
    fn components_count_as_remote_and_zero_rows_drop() {
        let g = Graph::structure(6, [(0, 1), (1, 2), (3, 4)]).unwrap();
        let h = Tensor2::from_fn(6, 3, |r, c| {
            ((r * 5 + c) as f64).sin()
                + if r == 5 {
                    -(((r * 5 + c) as f64).sin())
                } else {
                    0.0
                }
        });
        let emb = EmbeddingSet::new(h.clone(), 6).unwrap();
        let r = mad_suite(&emb, &g, &MadOptions::default()).unwrap();
        assert_eq!(r.excluded_zero_rows, 1);
        let g5 = Graph::structure(5, [(0, 1), (1, 2), (3, 4)]).unwrap();
        let h5 = h.select_rows(&[0, 1, 2, 3, 4]);
        let (nei, rmt) = brute(&h5, &g5);
        assert!((r.mad_nei - nei).abs() < 1e-12);
        assert!((r.mad_rmt - rmt).abs() < 1e-12);
    }

    #[test]
    fn no_remote_pairs_is_an_error() {
        let g = Graph::structure(3, [(0, 1), (1, 2)]).unwrap();
        let emb = EmbeddingSet::new(Tensor2::from_fn(3, 2, |r, c| (r + c + 1) as f64), 3).unwrap();
        assert!(mad_suite(&emb, &g, &MadOptions::default()).is_err());
    }

    #[test]
    fn sampling_is_seeded() {
        let g = path(40);
        let emb = EmbeddingSet::new(
            Tensor2::from_fn(40, 4, |r, c| ((r * 3 + c) as f64 * 0.2).cos()),
            40,
        )
        .unwrap();
        let opts = MadOptions {
            sample_above: 10,
            sample_sources: 8,
            ..MadOptions::default()
        };
        let a = mad_suite(&emb, &g, &opts).unwrap();
        assert!(a.sampled && a.sources == 8);
        assert_eq!(a, mad_suite(&emb, &g, &opts).unwrap());
    }
}
