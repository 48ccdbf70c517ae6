//! k-means (k-means++ seeding, restarts) and normalized mutual information.

use rand::Rng;
use rayon::prelude::*;

use super::EmbeddingSet;
use crate::diffgrad::Tensor2;
use crate::error::{Error, Result};
use crate::rng::{tag, SeedStream};

#[derive(Debug, Clone)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iter: 300,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub assignment: Vec<usize>,
    pub centroids: Tensor2,
    pub inertia: f64,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus<R: Rng>(x: &Tensor2, k: usize, rng: &mut R) -> Tensor2 {
    let n = x.rows();
    let mut cent = Tensor2::zeros(k, x.cols());
    cent.row_mut(0)
        .copy_from_slice(x.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), cent.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    idx = i;
                    break;
                }
                r -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        cent.row_mut(c).copy_from_slice(x.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), cent.row(c)));
        }
    }
    cent
}

fn assign(x: &Tensor2, cent: &Tensor2) -> Vec<(usize, f64)> {
    (0..x.rows())
        .into_par_iter()
        .map(|i| {
            let mut best = (0, f64::INFINITY);
            for c in 0..cent.rows() {
                let d = sq_dist(x.row(i), cent.row(c));
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .collect()
}

fn lloyd<R: Rng>(x: &Tensor2, k: usize, max_iter: usize, rng: &mut R) -> KMeansResult {
    let mut cent = plus_plus(x, k, rng);
    let mut labels = vec![usize::MAX; x.rows()];
    let mut iterations = 0;
    loop {
        let a = assign(x, &cent);
        let changed = a.iter().zip(&labels).any(|(n, o)| n.0 != *o);
        labels = a.iter().map(|p| p.0).collect();
        let inertia = a.iter().map(|p| p.1).sum();
        if !changed || iterations == max_iter {
            return KMeansResult {
                assignment: labels,
                centroids: cent,
                inertia,
                iterations,
            };
        }
        iterations += 1;
        let mut sums = Tensor2::zeros(k, x.cols());
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, v) in sums.row_mut(l).iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        #[allow(clippy::needless_range_loop)]
        for c in 0..k {
            if counts[c] == 0 {
                // Empty cluster: reseed at the point farthest from its centroid.
                let far = a
                    .iter()
                    .enumerate()
                    .max_by(|p, q| p.1 .1.total_cmp(&q.1 .1))
                    .map_or(0, |p| p.0);
                cent.row_mut(c).copy_from_slice(x.row(far));
            } else {
                let inv = 1.0 / counts[c] as f64;
                for (o, s) in cent.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *o = s * inv;
                }
            }
        }
    }
}

/// Best-inertia Lloyd run over `restarts` k-means++ initializations.
pub fn kmeans(x: &Tensor2, k: usize, opts: &KMeansOptions) -> Result<KMeansResult> {
    if k < 2 {
        return Err(Error::Eval(format!("k-means needs k ≥ 2, got {k}")));
    }
    if x.rows() < k {
        return Err(Error::Eval(format!(
            "{} points cannot form {k} clusters",
            x.rows()
        )));
    }
    let streams = SeedStream::new(opts.seed);
    let mut best: Option<KMeansResult> = None;
    for r in 0..opts.restarts.max(1) {
        let res = lloyd(x, k, opts.max_iter, &mut streams.rng(tag::KMEANS, r as u64));
        if best.as_ref().is_none_or(|b| res.inertia < b.inertia) {
            best = Some(res);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Counts `table[a][b]` of items with label `a` in `u` and `b` in `v`.
pub fn contingency(u: &[usize], v: &[usize]) -> Vec<Vec<usize>> {
    let ku = u.iter().max().map_or(0, |m| m + 1);
    let kv = v.iter().max().map_or(0, |m| m + 1);
    let mut t = vec![vec![0usize; kv]; ku];
    for (&a, &b) in u.iter().zip(v) {
        t[a][b] += 1;
    }
    t
}

/// `2 I(U; V) / (H(U) + H(V))`; 1 when both labelings are constant.
pub fn nmi(u: &[usize], v: &[usize]) -> Result<f64> {
    if u.len() != v.len() || u.is_empty() {
        return Err(Error::Eval(
            "NMI needs two non-empty labelings of equal length".into(),
        ));
    }
    let n = u.len() as f64;
    let t = contingency(u, v);
    let rows: Vec<f64> = t.iter().map(|r| r.iter().sum::<usize>() as f64).collect();
    let cols: Vec<f64> = (0..t.first().map_or(0, Vec::len))
        .map(|b| t.iter().map(|r| r[b]).sum::<usize>() as f64)
        .collect();
    let entropy = |c: &[f64]| {
        -c.iter()
            .filter(|&&x| x > 0.0)
            .map(|&x| (x / n) * (x / n).ln())
            .sum::<f64>()
    };
    let (hu, hv) = (entropy(&rows), entropy(&cols));
    if hu == 0.0 && hv == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for (a, row) in t.iter().enumerate() {
        for (b, &c) in row.iter().enumerate() {
            if c > 0 {
                let p = c as f64 / n;
                mi += p * (p * n * n / (rows[a] * cols[b])).ln();
            }
        }
    }
    Ok((2.0 * mi / (hu + hv)).clamp(0.0, 1.0))
}

/// NMI between the k-means partition of `emb` and `labels`.
pub fn kmeans_nmi(
    emb: &EmbeddingSet,
    labels: &[usize],
    k: usize,
    opts: &KMeansOptions,
) -> Result<f64> {
    if labels.len() != emb.num_nodes() {
        return Err(Error::Eval("one label per node required".into()));
    }
    let res = kmeans(&emb.h, k, opts)?;
    nmi(&res.assignment, labels)
}
