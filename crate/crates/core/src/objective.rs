//! Loss terms: the edge contrastive loss, the intra-model distillation over
//! pseudo local structures, and the inter-model distillation towards the
//! mean-field CRF target.
//!
//! Every term is mean-normalized (per triple or per node). Teacher signals
//! (`S^t` for intra, `Z*` for inter) are computed once per step and held
//! constant, so each `*_with` function below is an ordinary differentiable
//! function of the student views for fixed targets.

use serde::{Deserialize, Serialize};

use crate::diffgrad::ops::{
    cross_entropy_rows, cross_entropy_rows_vjp, log_sigmoid, log_sigmoid_grad, softmax_rows,
};
use crate::diffgrad::tensor::{axpy, dot, norm};
use crate::diffgrad::Tensor2;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{ViewGrads, Views};
use crate::sampling::{EdgeTriple, PseudoLocalSet};

/// Pairwise scoring function `ψ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Score {
    #[default]
    Dot,
    Cosine,
}

const COSINE_EPS: f64 = 1e-12;

impl Score {
    pub fn eval(self, u: &[f64], v: &[f64]) -> f64 {
        match self {
            Score::Dot => dot(u, v),
            Score::Cosine => {
                let (nu, nv) = (norm(u), norm(v));
                if nu < COSINE_EPS || nv < COSINE_EPS {
                    0.0
                } else {
                    dot(u, v) / (nu * nv)
                }
            }
        }
    }

    /// Accumulates `g·∂ψ/∂u` into `du` and `g·∂ψ/∂v` into `dv`.
    pub fn accumulate_grad(
        self,
        u: &[f64],
        v: &[f64],
        g: f64,
        du: Option<&mut [f64]>,
        dv: Option<&mut [f64]>,
    ) {
        match self {
            Score::Dot => {
                if let Some(du) = du {
                    axpy(g, v, du);
                }
                if let Some(dv) = dv {
                    axpy(g, u, dv);
                }
            }
            Score::Cosine => {
                let (nu, nv) = (norm(u), norm(v));
                if nu < COSINE_EPS || nv < COSINE_EPS {
                    return;
                }
                let s = dot(u, v) / (nu * nv);
                if let Some(du) = du {
                    axpy(g / (nu * nv), v, du);
                    axpy(-g * s / (nu * nu), u, du);
                }
                if let Some(dv) = dv {
                    axpy(g / (nu * nv), u, dv);
                    axpy(-g * s / (nv * nv), v, dv);
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Score::Dot => "dot",
            Score::Cosine => "cosine",
        }
    }
}

impl std::str::FromStr for Score {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "dot" => Ok(Score::Dot),
            "cosine" => Ok(Score::Cosine),
            other => Err(format!("unknown score {other:?} (expected dot|cosine)")),
        }
    }
}

/// Dot-product `ψ(u, v)`.
pub fn score(u: &[f64], v: &[f64]) -> f64 {
    Score::Dot.eval(u, v)
}

/// Disjoint mutable borrows of two rows `a != b`.
fn two_rows(t: &mut Tensor2, a: usize, b: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert_ne!(a, b);
    let cols = t.cols();
    let data = t.as_mut_slice();
    if a < b {
        let (lo, hi) = data.split_at_mut(b * cols);
        (&mut lo[a * cols..(a + 1) * cols], &mut hi[..cols])
    } else {
        let (lo, hi) = data.split_at_mut(a * cols);
        (&mut hi[..cols], &mut lo[b * cols..(b + 1) * cols])
    }
}

/// Mean over triples of `−ln σ(ψ(h_i, x̃_j) − ψ(h_i, x̃_k))`.
pub fn edge_mi_loss(views: &Views, triples: &[EdgeTriple], psi: Score) -> Result<f64> {
    edge_mi_loss_with(views, triples, psi, None)
}

/// Edge loss, accumulating `scale·∂L/∂views` into `grads` when given.
///
/// Consecutive triples sharing `(i, j)` (the sampler's layout) reuse the
/// positive score and fold their positive-side gradient into one update.
pub fn edge_mi_loss_with(
    views: &Views,
    triples: &[EdgeTriple],
    psi: Score,
    mut grads: Option<(&mut ViewGrads, f64)>,
) -> Result<f64> {
    if triples.is_empty() {
        return Err(Error::InvalidArgument(
            "edge loss needs at least one triple".into(),
        ));
    }
    let inv = 1.0 / triples.len() as f64;
    let mut total = 0.0;
    let mut start = 0;
    while start < triples.len() {
        let (i, j) = (triples[start].i, triples[start].j);
        let mut end = start + 1;
        while end < triples.len() && triples[end].i == i && triples[end].j == j {
            end += 1;
        }
        let hi = views.h.row(i);
        let xj = views.xlow.row(j);
        let pos = psi.eval(hi, xj);
        let mut pos_coef = 0.0;
        for t in &triples[start..end] {
            let xk = views.xlow.row(t.k);
            let margin = pos - psi.eval(hi, xk);
            total -= log_sigmoid(margin);
            if let Some((g, scale)) = grads.as_mut() {
                let dm = -log_sigmoid_grad(margin) * inv * *scale;
                pos_coef += dm;
                psi.accumulate_grad(hi, xk, -dm, Some(g.h.row_mut(i)), None);
                psi.accumulate_grad(hi, xk, -dm, None, Some(g.xlow.row_mut(t.k)));
            }
        }
        if let Some((g, _)) = grads.as_mut() {
            psi.accumulate_grad(hi, xj, pos_coef, Some(g.h.row_mut(i)), None);
            psi.accumulate_grad(hi, xj, pos_coef, None, Some(g.xlow.row_mut(j)));
        }
        start = end;
    }
    Ok(total * inv)
}

/// `S^t`: per node, softmax over `LS_i` of `ψ(h_i, x̃_j)`.
#[derive(Debug, Clone)]
pub struct IntraTargets {
    pub probs: Tensor2,
}

fn check_sets(views: &Views, sets: &[PseudoLocalSet]) -> Result<usize> {
    let d = sets.first().map_or(0, |s| s.members.len());
    if d == 0 {
        return Err(Error::InvalidArgument(
            "pseudo local sets must be non-empty".into(),
        ));
    }
    if sets.len() != views.num_nodes() {
        return Err(Error::shape(
            "intra_distill",
            "one pseudo local set per node required",
        ));
    }
    if sets
        .iter()
        .enumerate()
        .any(|(i, s)| s.center != i || s.members.len() != d)
    {
        return Err(Error::shape(
            "intra_distill",
            "sets must be ordered by center with equal size",
        ));
    }
    Ok(d)
}

/// Logit matrix `n × d` of `ψ(left_i, x̃_j)` for `j ∈ LS_i`.
fn set_logits(
    left: &Tensor2,
    xlow: &Tensor2,
    sets: &[PseudoLocalSet],
    psi: Score,
    d: usize,
) -> Tensor2 {
    let mut out = Tensor2::zeros(sets.len(), d);
    for (i, s) in sets.iter().enumerate() {
        for (c, &j) in s.members.iter().enumerate() {
            out.set(i, c, psi.eval(left.row(i), xlow.row(j)));
        }
    }
    out
}

pub fn intra_teacher(views: &Views, sets: &[PseudoLocalSet], psi: Score) -> Result<IntraTargets> {
    let d = check_sets(views, sets)?;
    let probs = softmax_rows(&set_logits(&views.h, &views.xlow, sets, psi, d))?;
    Ok(IntraTargets { probs })
}

/// `R_intra = (1/n) Σ_i CE(S^t_i, S^s_i)` with the teacher computed from `views`.
pub fn intra_distill(views: &Views, sets: &[PseudoLocalSet], psi: Score) -> Result<f64> {
    let targets = intra_teacher(views, sets, psi)?;
    intra_distill_with(views, sets, &targets, psi, None)
}

/// `R_intra` against fixed targets; gradients flow only through `S^s`.
pub fn intra_distill_with(
    views: &Views,
    sets: &[PseudoLocalSet],
    targets: &IntraTargets,
    psi: Score,
    grads: Option<(&mut ViewGrads, f64)>,
) -> Result<f64> {
    let d = check_sets(views, sets)?;
    let logits = set_logits(&views.xlow, &views.xlow, sets, psi, d);
    let value = cross_entropy_rows(&targets.probs, &logits)?;
    if let Some((g, scale)) = grads {
        let gl = cross_entropy_rows_vjp(&targets.probs, &logits, scale)?;
        for (i, s) in sets.iter().enumerate() {
            for (c, &j) in s.members.iter().enumerate() {
                let gij = gl.get(i, c);
                if gij == 0.0 {
                    continue;
                }
                let (xi, xj) = (views.xlow.row(i), views.xlow.row(j));
                let (gi, gj) = two_rows(&mut g.xlow, i, j);
                psi.accumulate_grad(xi, xj, gij, Some(gi), Some(gj));
            }
        }
    }
    Ok(value)
}

/// Mean-field CRF solution with mean-pooling weights `β_ij = 1/|N(i)|`:
/// `Z*_i = (1−α) h^t_i + α · mean_{j∈N(i)} m_j`, and `Z*_i = h^t_i` for
/// isolated nodes.
pub fn crf_target(h_t: &Tensor2, m_s: &Tensor2, g: &Graph, alpha: f64) -> Result<Tensor2> {
    h_t.ensure_same_shape(m_s, "crf_target")?;
    if h_t.rows() != g.num_nodes() {
        return Err(Error::shape(
            "crf_target",
            "row count differs from node count",
        ));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "alpha {alpha} outside [0, 1]"
        )));
    }
    if alpha == 0.0 {
        return Ok(h_t.clone());
    }
    let mut out = h_t.clone();
    let mut mean = vec![0.0; h_t.cols()];
    for i in 0..g.num_nodes() {
        let nbrs = g.neighbors(i);
        if nbrs.is_empty() {
            continue;
        }
        mean.iter_mut().for_each(|v| *v = 0.0);
        for &j in nbrs {
            axpy(1.0, m_s.row(j), &mut mean);
        }
        let inv = 1.0 / nbrs.len() as f64;
        let row = out.row_mut(i);
        if alpha == 1.0 {
            for (o, m) in row.iter_mut().zip(&mean) {
                *o = m * inv;
            }
        } else {
            for (o, m) in row.iter_mut().zip(&mean) {
                *o = (1.0 - alpha) * *o + alpha * (m * inv);
            }
        }
    }
    Ok(out)
}

/// Frozen inter-distillation targets for both student views.
#[derive(Debug, Clone)]
pub struct InterTargets {
    pub z_xlow: Tensor2,
    pub z_h: Tensor2,
}

pub fn inter_targets(
    h_t: &Tensor2,
    views_s: &Views,
    g: &Graph,
    alpha: f64,
) -> Result<InterTargets> {
    Ok(InterTargets {
        z_xlow: crf_target(h_t, &views_s.xlow, g, alpha)?,
        z_h: crf_target(h_t, &views_s.h, g, alpha)?,
    })
}

fn mean_sq_distance(m: &Tensor2, z: &Tensor2, grad: Option<(&mut Tensor2, f64)>) -> f64 {
    let n = m.rows().max(1) as f64;
    let mut total = 0.0;
    let mut grad = grad;
    for i in 0..m.rows() {
        let (mi, zi) = (m.row(i), z.row(i));
        total += mi
            .iter()
            .zip(zi)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        if let Some((g, scale)) = grad.as_mut() {
            for ((o, a), b) in g.row_mut(i).iter_mut().zip(mi).zip(zi) {
                *o += 2.0 * *scale * (a - b) / n;
            }
        }
    }
    total / n
}

/// `KD(Y, M | G)`: mean over nodes of `‖M_i − Z*_i‖²`.
pub fn kd(h_t: &Tensor2, m_s: &Tensor2, g: &Graph, alpha: f64) -> Result<f64> {
    let z = crf_target(h_t, m_s, g, alpha)?;
    Ok(mean_sq_distance(m_s, &z, None))
}

/// `R_inter = KD(H_t, X̃_s) + KD(H_t, H_s)`.
pub fn inter_distill(h_t: &Tensor2, views_s: &Views, g: &Graph, alpha: f64) -> Result<f64> {
    if h_t.shape() != views_s.h.shape() {
        return Err(Error::shape(
            "inter_distill",
            "teacher and student widths differ",
        ));
    }
    let targets = inter_targets(h_t, views_s, g, alpha)?;
    inter_distill_with(views_s, &targets, None)
}

pub fn inter_distill_with(
    views_s: &Views,
    targets: &InterTargets,
    grads: Option<(&mut ViewGrads, f64)>,
) -> Result<f64> {
    views_s
        .xlow
        .ensure_same_shape(&targets.z_xlow, "inter_distill")?;
    views_s.h.ensure_same_shape(&targets.z_h, "inter_distill")?;
    Ok(match grads {
        Some((g, scale)) => {
            mean_sq_distance(&views_s.xlow, &targets.z_xlow, Some((&mut g.xlow, scale)))
                + mean_sq_distance(&views_s.h, &targets.z_h, Some((&mut g.h, scale)))
        }
        None => {
            mean_sq_distance(&views_s.xlow, &targets.z_xlow, None)
                + mean_sq_distance(&views_s.h, &targets.z_h, None)
        }
    })
}

/// Which regularizers participate; used for the ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Terms {
    pub intra: bool,
    pub inter: bool,
}

impl Default for Terms {
    fn default() -> Self {
        Self {
            intra: true,
            inter: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub edge_mi: f64,
    pub r_intra: f64,
    pub r_inter: f64,
    pub total: f64,
    pub lambda: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.edge_mi, self.r_intra, self.r_inter, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Everything besides the student views that the total loss depends on.
#[derive(Debug, Clone, Copy)]
pub struct LossInputs<'a> {
    pub graph: &'a Graph,
    pub triples: &'a [EdgeTriple],
    pub sets: &'a [PseudoLocalSet],
    /// Frozen teacher output; `None` during pretraining.
    pub teacher_h: Option<&'a Tensor2>,
    pub alpha: f64,
    pub lambda: f64,
    pub terms: Terms,
    pub score: Score,
}

/// Teacher signals computed from the current student at the start of a step.
#[derive(Debug, Clone)]
pub struct FrozenTargets {
    pub intra: Option<IntraTargets>,
    pub inter: Option<InterTargets>,
}

pub fn freeze_targets(views: &Views, inputs: &LossInputs<'_>) -> Result<FrozenTargets> {
    let active = inputs.lambda != 0.0;
    let intra = if active && inputs.terms.intra {
        Some(intra_teacher(views, inputs.sets, inputs.score)?)
    } else {
        None
    };
    let inter = match inputs.teacher_h {
        Some(h_t) if active && inputs.terms.inter => {
            if h_t.shape() != views.h.shape() {
                return Err(Error::shape(
                    "inter_distill",
                    "teacher and student widths differ",
                ));
            }
            Some(inter_targets(h_t, views, inputs.graph, inputs.alpha)?)
        }
        _ => None,
    };
    Ok(FrozenTargets { intra, inter })
}

/// Total loss against fixed targets; fills `grads` with `∂total/∂views`.
pub fn loss_with_targets(
    views: &Views,
    inputs: &LossInputs<'_>,
    targets: &FrozenTargets,
    mut grads: Option<&mut ViewGrads>,
) -> Result<LossBreakdown> {
    let lambda = inputs.lambda;
    let edge_mi = edge_mi_loss_with(
        views,
        inputs.triples,
        inputs.score,
        grads.as_deref_mut().map(|g| (g, 1.0)),
    )?;
    let r_intra = match &targets.intra {
        Some(t) => intra_distill_with(
            views,
            inputs.sets,
            t,
            inputs.score,
            grads.as_deref_mut().map(|g| (g, lambda)),
        )?,
        None => 0.0,
    };
    let r_inter = match &targets.inter {
        Some(t) => inter_distill_with(views, t, grads.map(|g| (g, lambda)))?,
        None => 0.0,
    };
    let out = LossBreakdown {
        edge_mi,
        r_intra,
        r_inter,
        total: edge_mi + lambda * (r_intra + r_inter),
        lambda,
    };
    Ok(out)
}

/// `ℓ_edge + λ (R_intra + R_inter)` with targets derived from `views` itself.
pub fn total_loss(views: &Views, inputs: &LossInputs<'_>) -> Result<LossBreakdown> {
    let targets = freeze_targets(views, inputs)?;
    loss_with_targets(views, inputs, &targets, None)
}

pub fn total_loss_and_grad(
    views: &Views,
    inputs: &LossInputs<'_>,
) -> Result<(LossBreakdown, ViewGrads)> {
    let targets = freeze_targets(views, inputs)?;
    let mut grads = ViewGrads::like(views);
    let b = loss_with_targets(views, inputs, &targets, Some(&mut grads))?;
    Ok((b, grads))
}
