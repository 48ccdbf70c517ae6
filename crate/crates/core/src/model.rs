//! Single-layer encoder `H = σ(Ã² X W)` and the teacher/student parameter
//! lifecycle.
//!
//! One forward pass yields both self-augmented views: the low-level
//! `X̃ = XW` and the smoothed `H`.

use rand::Rng;

use crate::diffgrad::ops::activation_vjp;
use crate::diffgrad::{Activation, CsrMatrix, Tensor2};
use crate::error::{Error, Result};
use crate::graph::{normalized_adjacency, propagate_twice, Graph, NormAdj};

/// Encoder weights, `F × F′`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub w: Tensor2,
}

/// Half-width of the Glorot-uniform init interval.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out).max(1) as f64).sqrt()
}

impl Params {
    pub fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let b = glorot_bound(fan_in, fan_out);
        Self {
            w: Tensor2::from_fn(fan_in, fan_out, |_, _| rng.random_range(-b..=b)),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.w.cols()
    }
}

/// Deep copy of the student; later student updates never reach it.
pub fn copy_to_teacher(student: &Params) -> Params {
    student.clone()
}

/// `θ ← wθ + (1−w)ε`, with `ε` drawn per coordinate from the init law.
pub fn fade_student<R: Rng + ?Sized>(student: &Params, w: f64, rng: &mut R) -> Result<Params> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::InvalidArgument(format!(
            "fade weight {w} outside [0, 1]"
        )));
    }
    if w == 1.0 {
        return Ok(student.clone());
    }
    let noise = Params::glorot(student.in_dim(), student.out_dim(), rng);
    if w == 0.0 {
        return Ok(noise);
    }
    let mut out = student.clone();
    for (p, e) in out.w.as_mut_slice().iter_mut().zip(noise.w.as_slice()) {
        *p = w * *p + (1.0 - w) * e;
    }
    Ok(out)
}

/// Both views of one forward pass, plus the pre-activation kept for backward.
#[derive(Debug, Clone)]
pub struct Views {
    pub xlow: Tensor2,
    pub h: Tensor2,
    pub pre: Tensor2,
}

impl Views {
    pub fn num_nodes(&self) -> usize {
        self.h.rows()
    }

    pub fn dim(&self) -> usize {
        self.h.cols()
    }
}

/// Gradient of a scalar loss w.r.t. both views.
#[derive(Debug, Clone)]
pub struct ViewGrads {
    pub xlow: Tensor2,
    pub h: Tensor2,
}

impl ViewGrads {
    pub fn zeros(n: usize, dim: usize) -> Self {
        Self {
            xlow: Tensor2::zeros(n, dim),
            h: Tensor2::zeros(n, dim),
        }
    }

    pub fn like(views: &Views) -> Self {
        Self::zeros(views.num_nodes(), views.dim())
    }
}

/// Graph-bound encoder: caches `Ã`, a sparse copy of `X` and its transpose.
#[derive(Debug, Clone)]
pub struct Encoder {
    adj: NormAdj,
    x: CsrMatrix,
    x_t: CsrMatrix,
    activation: Activation,
}

impl Encoder {
    pub fn new(g: &Graph, activation: Activation) -> Self {
        Self::with_adjacency(g, normalized_adjacency(g), activation)
    }

    pub fn with_adjacency(g: &Graph, adj: NormAdj, activation: Activation) -> Self {
        let x = CsrMatrix::from_dense_f32(g.num_nodes(), g.num_features(), g.features());
        let x_t = x.transpose();
        Self {
            adj,
            x,
            x_t,
            activation,
        }
    }

    pub fn adjacency(&self) -> &NormAdj {
        &self.adj
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_features(&self) -> usize {
        self.x.cols()
    }

    fn check(&self, p: &Params) -> Result<()> {
        if p.in_dim() != self.x.cols() {
            return Err(Error::shape(
                "encoder forward",
                format!(
                    "graph has {} features, W has {} rows",
                    self.x.cols(),
                    p.in_dim()
                ),
            ));
        }
        Ok(())
    }

    /// `Ã² X W`.
    pub fn preactivation(&self, p: &Params) -> Result<Tensor2> {
        self.check(p)?;
        propagate_twice(&self.adj, &self.x.matmul_dense(&p.w)?)
    }

    pub fn forward(&self, p: &Params) -> Result<Views> {
        self.check(p)?;
        let xlow = self.x.matmul_dense(&p.w)?;
        xlow.ensure_finite("encoder X̃")?;
        let pre = propagate_twice(&self.adj, &xlow)?;
        let act = self.activation;
        let h = pre.map(|v| act.apply(v));
        h.ensure_finite("encoder H")?;
        Ok(Views { xlow, h, pre })
    }

    /// `dL/dW` from `dL/dX̃` and `dL/dH`.
    pub fn backward(&self, views: &Views, grads: &ViewGrads) -> Result<Tensor2> {
        let g_pre = activation_vjp(self.activation, &views.pre, &grads.h)?;
        // Ã is symmetric, so its VJP is itself.
        let mut g_xlow = propagate_twice(&self.adj, &g_pre)?;
        g_xlow.add_assign(&grads.xlow);
        self.x_t.matmul_dense(&g_xlow)
    }

    /// True when no activation kink separates the two parameter points.
    pub fn smooth_between(&self, a: &Params, b: &Params) -> bool {
        match (self.preactivation(a), self.preactivation(b)) {
            (Ok(pa), Ok(pb)) => pa
                .as_slice()
                .iter()
                .zip(pb.as_slice())
                .all(|(&x, &y)| !self.activation.kink_between(x, y)),
            _ => false,
        }
    }
}

/// Convenience one-shot forward.
pub fn forward(p: &Params, g: &Graph, adj: &NormAdj, activation: Activation) -> Result<Views> {
    Encoder::with_adjacency(g, adj.clone(), activation).forward(p)
}
