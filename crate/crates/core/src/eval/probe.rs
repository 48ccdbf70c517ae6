//! L2-regularized multinomial logistic regression on frozen representations.
//!
//! Features are z-scored with statistics over all nodes. The objective
//! `mean CE + (l2/2)‖W‖²` (bias unregularized) is minimized by accelerated
//! gradient descent with step `1/L`; `L` bounds the Hessian through a power
//! iteration on the train design matrix.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{mean_std, EmbeddingSet};
use crate::diffgrad::ops::softmax;
use crate::diffgrad::Tensor2;
use crate::error::{Error, Result};
use crate::rng::{tag, SeedStream};

#[derive(Debug, Clone)]
pub struct ProbeOptions {
    /// Candidate L2 weights; chosen on the `val` split when one exists.
    pub l2_grid: Vec<f64>,
    /// Used when there is no validation split.
    pub default_l2: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seeds: usize,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            l2_grid: vec![1e-4, 1e-3, 1e-2, 1e-1],
            default_l2: 1e-3,
            tol: 1e-6,
            max_iter: 1000,
            seeds: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub mean: f64,
    pub std: f64,
    pub accuracies: Vec<f64>,
    pub l2: f64,
    pub val_accuracy: Option<f64>,
    pub protocol: &'static str,
}

pub const PROTOCOL: &str = "in-repo logistic probe";

fn zscore(h: &Tensor2) -> Tensor2 {
    let n = h.rows() as f64;
    let mut out = h.clone();
    for c in 0..h.cols() {
        let mean = (0..h.rows()).map(|r| h.get(r, c)).sum::<f64>() / n;
        let var = (0..h.rows())
            .map(|r| (h.get(r, c) - mean).powi(2))
            .sum::<f64>()
            / n;
        let inv = if var > 0.0 { 1.0 / var.sqrt() } else { 0.0 };
        for r in 0..h.rows() {
            out.set(r, c, (h.get(r, c) - mean) * inv);
        }
    }
    out
}

/// Fitted weights: `classes × (dim + 1)`, bias in the last column.
struct Model {
    w: Tensor2,
}

impl Model {
    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        (0..self.w.rows())
            .map(|k| {
                let row = self.w.row(k);
                row[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + row[d]
            })
            .collect()
    }

    fn predict(&self, x: &[f64]) -> usize {
        let l = self.logits(x);
        (0..l.len()).fold(0, |best, k| if l[k] > l[best] { k } else { best })
    }
}

const CHUNK: usize = 256;

fn objective_and_grad(
    x: &Tensor2,
    idx: &[usize],
    y: &[usize],
    w: &Tensor2,
    l2: f64,
    grad: &mut Tensor2,
) -> f64 {
    let d = x.cols();
    let inv = 1.0 / idx.len() as f64;
    let model = Model { w: w.clone() };
    // Fixed-size chunks reduced in order keep the sum independent of thread count.
    let parts: Vec<(f64, Tensor2)> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = Tensor2::zeros(w.rows(), w.cols());
            let mut loss = 0.0;
            for &i in chunk {
                let xi = x.row(i);
                let p = softmax(&model.logits(xi));
                loss -= p[y[i]].max(1e-300).ln() * inv;
                for (k, pk) in p.iter().enumerate() {
                    let coef = (pk - if k == y[i] { 1.0 } else { 0.0 }) * inv;
                    let gk = g.row_mut(k);
                    for (gc, xc) in gk[..d].iter_mut().zip(xi) {
                        *gc += coef * xc;
                    }
                    gk[d] += coef;
                }
            }
            (loss, g)
        })
        .collect();
    grad.as_mut_slice().iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        grad.add_assign(g);
    }
    for k in 0..w.rows() {
        let (wr, gr) = (w.row(k), grad.row_mut(k));
        for c in 0..d {
            gr[c] += l2 * wr[c];
            loss += 0.5 * l2 * wr[c] * wr[c];
        }
    }
    loss
}

/// Largest eigenvalue of `ZᵀZ / m` for `Z = [x | 1]` over the train rows.
fn gram_top_eigenvalue(x: &Tensor2, idx: &[usize]) -> f64 {
    let d = x.cols() + 1;
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut lambda = 0.0;
    for _ in 0..100 {
        let mut out = vec![0.0; d];
        for &i in idx {
            let xi = x.row(i);
            let proj = xi.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() + v[d - 1];
            for (o, a) in out.iter_mut().zip(xi) {
                *o += proj * a;
            }
            out[d - 1] += proj;
        }
        let m = idx.len() as f64;
        out.iter_mut().for_each(|o| *o /= m);
        let nrm = out.iter().map(|o| o * o).sum::<f64>().sqrt();
        if nrm == 0.0 {
            return 0.0;
        }
        let next = nrm;
        v = out.into_iter().map(|o| o / nrm).collect();
        if (next - lambda).abs() <= 1e-9 * next {
            return next;
        }
        lambda = next;
    }
    lambda
}

fn fit(
    x: &Tensor2,
    idx: &[usize],
    y: &[usize],
    classes: usize,
    l2: f64,
    opts: &ProbeOptions,
    seed: u64,
) -> Model {
    let d = x.cols();
    // Softmax cross-entropy Hessian is bounded by ½·ZᵀZ/m per class block.
    let lip = 0.5 * gram_top_eigenvalue(x, idx) + l2;
    let step = if lip > 0.0 { 1.0 / lip } else { 1.0 };
    let mut rng = SeedStream::new(opts.seed).rng(tag::PROBE, seed);
    let mut w = Tensor2::from_fn(classes, d + 1, |_, _| rng.random_range(-0.01..0.01));
    let mut prev = w.clone();
    let mut grad = Tensor2::zeros(classes, d + 1);
    let mut f_prev = f64::INFINITY;
    for k in 0..opts.max_iter {
        let beta = k as f64 / (k as f64 + 3.0);
        let mut look = w.clone();
        for ((l, a), b) in look
            .as_mut_slice()
            .iter_mut()
            .zip(w.as_slice())
            .zip(prev.as_slice())
        {
            *l = a + beta * (a - b);
        }
        let f = objective_and_grad(x, idx, y, &look, l2, &mut grad);
        prev = w;
        w = look;
        w.add_scaled(&grad, -step);
        if (f_prev - f).abs() <= opts.tol * f.abs().max(1.0) {
            break;
        }
        f_prev = f;
    }
    Model { w }
}

fn accuracy(model: &Model, x: &Tensor2, idx: &[usize], y: &[usize]) -> f64 {
    let hits = idx
        .iter()
        .filter(|&&i| model.predict(x.row(i)) == y[i])
        .count();
    hits as f64 / idx.len() as f64
}

/// Test accuracy of a probe fit on `train`, over `opts.seeds` probe seeds.
pub fn linear_probe(
    emb: &EmbeddingSet,
    labels: &[usize],
    train: &[usize],
    val: Option<&[usize]>,
    test: &[usize],
    opts: &ProbeOptions,
) -> Result<ProbeReport> {
    let n = emb.num_nodes();
    if labels.len() != n {
        return Err(Error::Eval(format!(
            "{} labels for {n} nodes",
            labels.len()
        )));
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::Eval(
            "probe needs non-empty train and test splits".into(),
        ));
    }
    if let Some(&bad) = train
        .iter()
        .chain(test)
        .chain(val.unwrap_or(&[]))
        .find(|&&i| i >= n)
    {
        return Err(Error::Eval(format!("split index {bad} out of range")));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
    let x = zscore(&emb.h);
    let (l2, val_accuracy) = match val {
        Some(v) if !v.is_empty() && opts.l2_grid.len() > 1 => {
            let mut best = (opts.l2_grid[0], f64::NEG_INFINITY);
            for &l2 in &opts.l2_grid {
                let a = accuracy(&fit(&x, train, labels, classes, l2, opts, 0), &x, v, labels);
                if a > best.1 {
                    best = (l2, a);
                }
            }
            (best.0, Some(best.1))
        }
        _ => (
            opts.l2_grid
                .first()
                .copied()
                .filter(|_| opts.l2_grid.len() == 1)
                .unwrap_or(opts.default_l2),
            None,
        ),
    };
    let accuracies: Vec<f64> = (0..opts.seeds.max(1) as u64)
        .map(|s| {
            accuracy(
                &fit(&x, train, labels, classes, l2, opts, s),
                &x,
                test,
                labels,
            )
        })
        .collect();
    let (mean, std) = mean_std(&accuracies);
    Ok(ProbeReport {
        mean,
        std,
        accuracies,
        l2,
        val_accuracy,
        protocol: PROTOCOL,
    })
}
