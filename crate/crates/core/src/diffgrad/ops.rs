//! Differentiable primitives and their vector-Jacobian products.
//!
//! Each forward `op` has an `op_vjp` that maps an upstream gradient to the
//! gradient of its differentiable inputs. Stop-gradient is expressed by the
//! caller simply not propagating into an input.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sparse::CsrMatrix;
use super::tensor::{axpy, Tensor2};
use crate::error::{Error, Result};

/// Smallest probability admitted inside a logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

pub fn matmul(a: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    if a.cols() != b.rows() {
        return Err(Error::shape(
            "matmul",
            format!("{}x{} · {}x{}", a.rows(), a.cols(), b.rows(), b.cols()),
        ));
    }
    let width = b.cols();
    let mut out = Tensor2::zeros(a.rows(), width);
    if width == 0 {
        return Ok(out);
    }
    out.as_mut_slice()
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(r, dst)| {
            for (k, &v) in a.row(r).iter().enumerate() {
                if v != 0.0 {
                    axpy(v, b.row(k), dst);
                }
            }
        });
    out.ensure_finite("matmul")?;
    Ok(out)
}

/// Returns `(dL/da, dL/db)` for `c = a·b` given `g = dL/dc`.
pub fn matmul_vjp(a: &Tensor2, b: &Tensor2, g: &Tensor2) -> Result<(Tensor2, Tensor2)> {
    let ga = matmul(g, &b.transpose())?;
    let gb = matmul(&a.transpose(), g)?;
    Ok((ga, gb))
}

pub fn sparse_dense_matmul(s: &CsrMatrix, m: &Tensor2) -> Result<Tensor2> {
    let out = s.matmul_dense(m)?;
    out.ensure_finite("sparse_dense_matmul")?;
    Ok(out)
}

/// Gradient w.r.t. the dense operand of `s·m`: `sᵀ·g`.
pub fn sparse_dense_matmul_vjp(s: &CsrMatrix, g: &Tensor2) -> Result<Tensor2> {
    s.transpose().matmul_dense(g)
}

pub fn add(a: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    a.ensure_same_shape(b, "add")?;
    let mut out = a.clone();
    out.add_assign(b);
    out.ensure_finite("add")?;
    Ok(out)
}

pub fn add_vjp(g: &Tensor2) -> (Tensor2, Tensor2) {
    (g.clone(), g.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative; ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }

    /// Whether the derivative is discontinuous between `a` and `b`.
    pub fn kink_between(self, a: f64, b: f64) -> bool {
        match self {
            Activation::Relu => (a > 0.0) != (b > 0.0),
            Activation::Tanh => false,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(format!("unknown activation {other:?} (expected relu|tanh)")),
        }
    }
}

pub fn activation(act: Activation, x: &Tensor2) -> Result<Tensor2> {
    let out = x.map(|v| act.apply(v));
    out.ensure_finite("activation")?;
    Ok(out)
}

/// Gradient w.r.t. the pre-activation `x`.
pub fn activation_vjp(act: Activation, x: &Tensor2, g: &Tensor2) -> Result<Tensor2> {
    x.ensure_same_shape(g, "activation_vjp")?;
    let mut out = g.clone();
    for (o, &xi) in out.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *o *= act.derivative(xi);
    }
    Ok(out)
}

#[inline]
fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Softmax of a single vector.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(z);
    z.iter().map(|v| (v - lse).exp()).collect()
}

pub fn softmax_rows(a: &Tensor2) -> Result<Tensor2> {
    let mut out = Tensor2::zeros(a.rows(), a.cols());
    for r in 0..a.rows() {
        out.row_mut(r).copy_from_slice(&softmax(a.row(r)));
    }
    out.ensure_finite("softmax_rows")?;
    Ok(out)
}

/// Gradient w.r.t. the logits, given the softmax output `s`.
pub fn softmax_rows_vjp(s: &Tensor2, g: &Tensor2) -> Result<Tensor2> {
    s.ensure_same_shape(g, "softmax_rows_vjp")?;
    let mut out = Tensor2::zeros(s.rows(), s.cols());
    for r in 0..s.rows() {
        let (sr, gr) = (s.row(r), g.row(r));
        let inner: f64 = sr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for (o, (si, gi)) in out.row_mut(r).iter_mut().zip(sr.iter().zip(gr)) {
            *o = si * (gi - inner);
        }
    }
    Ok(out)
}

/// Per-row cross-entropy `−Σ_j t_j ln max(softmax(z)_j, PROB_FLOOR)`.
pub fn cross_entropy_row(target: &[f64], logits: &[f64]) -> f64 {
    let lse = log_sum_exp(logits);
    let ln_floor = PROB_FLOOR.ln();
    -target
        .iter()
        .zip(logits)
        .map(|(t, z)| t * (z - lse).max(ln_floor))
        .sum::<f64>()
}

/// Gradient of [`cross_entropy_row`] w.r.t. the logits. Clamped entries are
/// constant and contribute nothing.
pub fn cross_entropy_row_grad(target: &[f64], logits: &[f64], out: &mut [f64]) {
    let lse = log_sum_exp(logits);
    let ln_floor = PROB_FLOOR.ln();
    let mut live_mass = 0.0;
    for (o, (t, z)) in out.iter_mut().zip(target.iter().zip(logits)) {
        let live = (z - lse) >= ln_floor;
        *o = if live { -t } else { 0.0 };
        if live {
            live_mass += t;
        }
    }
    for (o, z) in out.iter_mut().zip(logits) {
        *o += live_mass * (z - lse).exp();
    }
}

/// Mean over rows of [`cross_entropy_row`].
pub fn cross_entropy_rows(target: &Tensor2, logits: &Tensor2) -> Result<f64> {
    target.ensure_same_shape(logits, "cross_entropy_rows")?;
    if target.rows() == 0 {
        return Ok(0.0);
    }
    let total: f64 = (0..target.rows())
        .map(|r| cross_entropy_row(target.row(r), logits.row(r)))
        .sum();
    let v = total / target.rows() as f64;
    if !v.is_finite() {
        return Err(Error::NonFinite {
            op: "cross_entropy_rows",
            index: 0,
        });
    }
    Ok(v)
}

/// Gradient of [`cross_entropy_rows`] w.r.t. the logits (target held constant).
pub fn cross_entropy_rows_vjp(target: &Tensor2, logits: &Tensor2, g: f64) -> Result<Tensor2> {
    target.ensure_same_shape(logits, "cross_entropy_rows_vjp")?;
    let mut out = Tensor2::zeros(logits.rows(), logits.cols());
    let scale = g / logits.rows().max(1) as f64;
    for r in 0..logits.rows() {
        cross_entropy_row_grad(target.row(r), logits.row(r), out.row_mut(r));
        for v in out.row_mut(r) {
            *v *= scale;
        }
    }
    Ok(out)
}

/// `ln σ(x)`, computed without overflow for large `|x|`.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `d/dx ln σ(x) = σ(−x)`.
#[inline]
pub fn log_sigmoid_grad(x: f64) -> f64 {
    sigmoid(-x)
}

pub fn squared_row_distance(a: &Tensor2, b: &Tensor2) -> Result<Vec<f64>> {
    a.ensure_same_shape(b, "squared_row_distance")?;
    Ok((0..a.rows())
        .map(|r| {
            a.row(r)
                .iter()
                .zip(b.row(r))
                .map(|(x, y)| (x - y) * (x - y))
                .sum()
        })
        .collect())
}

/// Returns `(dL/da, dL/db)` given per-row upstream gradients `g`.
pub fn squared_row_distance_vjp(a: &Tensor2, b: &Tensor2, g: &[f64]) -> Result<(Tensor2, Tensor2)> {
    a.ensure_same_shape(b, "squared_row_distance_vjp")?;
    if g.len() != a.rows() {
        return Err(Error::shape("squared_row_distance_vjp", "gradient length"));
    }
    let mut ga = Tensor2::zeros(a.rows(), a.cols());
    for (r, &gr) in g.iter().enumerate() {
        for ((o, x), y) in ga.row_mut(r).iter_mut().zip(a.row(r)).zip(b.row(r)) {
            *o = 2.0 * gr * (x - y);
        }
    }
    let mut gb = ga.clone();
    gb.scale(-1.0);
    Ok((ga, gb))
}

pub fn sum(t: &Tensor2) -> f64 {
    t.sum()
}

pub fn sum_vjp(rows: usize, cols: usize, g: f64) -> Tensor2 {
    Tensor2::filled(rows, cols, g)
}

pub fn mean(t: &Tensor2) -> f64 {
    if t.is_empty() {
        0.0
    } else {
        t.sum() / t.len() as f64
    }
}

pub fn mean_vjp(rows: usize, cols: usize, g: f64) -> Tensor2 {
    let n = (rows * cols).max(1) as f64;
    Tensor2::filled(rows, cols, g / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffgrad::fdcheck::{finite_difference_check, FdOptions};
    use crate::rng::SeedStream;
    use rand::Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Tensor2 {
        let mut rng = SeedStream::new(seed).rng("test", 0);
        Tensor2::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn weights(rows: usize, cols: usize, seed: u64) -> Tensor2 {
        random(rows, cols, seed + 1000)
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let s = softmax(&[0.0, 0.0, 0.0]);
        for v in s {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn log_sigmoid_at_zero() {
        assert!((log_sigmoid(0.0) + std::f64::consts::LN_2).abs() < 1e-15);
        assert!(log_sigmoid(800.0).abs() < 1e-300);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-9);
    }

    #[test]
    fn activation_slopes_bounded_by_one() {
        for act in [Activation::Relu, Activation::Tanh] {
            for i in -2000..=2000 {
                let x = i as f64 * 0.005;
                assert!(act.derivative(x).abs() <= 1.0, "{act:?} at {x}");
            }
        }
    }

    #[test]
    fn matmul_gradient_matches_central_differences() {
        let a = random(3, 4, 1);
        let b = random(4, 2, 2);
        let probe = weights(3, 2, 3);
        let loss = |a: &Tensor2, b: &Tensor2| {
            let c = matmul(a, b).unwrap();
            c.as_slice()
                .iter()
                .zip(probe.as_slice())
                .map(|(x, y)| x * y)
                .sum::<f64>()
        };
        let (ga, gb) = matmul_vjp(&a, &b, &probe).unwrap();
        let opts = FdOptions::default();
        assert!(finite_difference_check(|x| loss(x, &b), &a, &ga, &opts).passed);
        assert!(finite_difference_check(|x| loss(&a, x), &b, &gb, &opts).passed);
    }

    #[test]
    fn sparse_matmul_gradient_matches_central_differences() {
        let s = CsrMatrix::from_row_lists(
            3,
            vec![vec![(0, 0.5), (2, -1.0)], vec![], vec![(1, 2.0), (2, 0.25)]],
        )
        .unwrap();
        let m = random(3, 4, 4);
        let probe = weights(3, 4, 5);
        let loss = |m: &Tensor2| {
            let c = sparse_dense_matmul(&s, m).unwrap();
            c.as_slice()
                .iter()
                .zip(probe.as_slice())
                .map(|(x, y)| x * y)
                .sum::<f64>()
        };
        let gm = sparse_dense_matmul_vjp(&s, &probe).unwrap();
        assert!(finite_difference_check(loss, &m, &gm, &FdOptions::default()).passed);
        assert_eq!(s.transpose().transpose(), s);
    }

    #[test]
    fn add_gradient_matches_central_differences() {
        let a = random(2, 3, 6);
        let b = random(2, 3, 7);
        let probe = weights(2, 3, 8);
        let loss = |a: &Tensor2| {
            let c = add(a, &b).unwrap();
            c.as_slice()
                .iter()
                .zip(probe.as_slice())
                .map(|(x, y)| x * y * x)
                .sum::<f64>()
        };
        let c = add(&a, &b).unwrap();
        let upstream = Tensor2::from_fn(2, 3, |r, k| 2.0 * c.get(r, k) * probe.get(r, k));
        let (ga, _) = add_vjp(&upstream);
        assert!(finite_difference_check(loss, &a, &ga, &FdOptions::default()).passed);
    }

    #[test]
    fn activation_gradient_matches_central_differences() {
        // Keep inputs away from the ReLU kink so the difference quotient is smooth.
        let x = random(4, 5, 9).map(|v| if v.abs() < 0.05 { v + 0.2 } else { v });
        let probe = weights(4, 5, 10);
        for act in [Activation::Relu, Activation::Tanh] {
            let loss = |x: &Tensor2| {
                let y = activation(act, x).unwrap();
                y.as_slice()
                    .iter()
                    .zip(probe.as_slice())
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            };
            let g = activation_vjp(act, &x, &probe).unwrap();
            assert!(finite_difference_check(loss, &x, &g, &FdOptions::default()).passed);
        }
    }

    #[test]
    fn softmax_gradient_matches_central_differences() {
        let z = random(3, 5, 11);
        let probe = weights(3, 5, 12);
        let loss = |z: &Tensor2| {
            let s = softmax_rows(z).unwrap();
            s.as_slice()
                .iter()
                .zip(probe.as_slice())
                .map(|(a, b)| a * b)
                .sum::<f64>()
        };
        let s = softmax_rows(&z).unwrap();
        let g = softmax_rows_vjp(&s, &probe).unwrap();
        assert!(finite_difference_check(loss, &z, &g, &FdOptions::default()).passed);
    }

    #[test]
    fn cross_entropy_gradient_matches_central_differences() {
        let z = random(4, 6, 13);
        let target = softmax_rows(&random(4, 6, 14)).unwrap();
        let loss = |z: &Tensor2| cross_entropy_rows(&target, z).unwrap();
        let g = cross_entropy_rows_vjp(&target, &z, 1.0).unwrap();
        assert!(finite_difference_check(loss, &z, &g, &FdOptions::default()).passed);
    }

    #[test]
    fn cross_entropy_against_itself_is_entropy() {
        let z = random(1, 5, 15);
        let s = softmax(z.row(0));
        let entropy: f64 = -s.iter().map(|p| p * p.ln()).sum::<f64>();
        assert!((cross_entropy_row(&s, z.row(0)) - entropy).abs() < 1e-12);
    }

    #[test]
    fn log_sigmoid_gradient_matches_central_difference() {
        for &x in &[-30.0, -2.0, -0.3, 0.0, 0.7, 5.0, 40.0] {
            let h = 1e-5;
            let fd = (log_sigmoid(x + h) - log_sigmoid(x - h)) / (2.0 * h);
            assert!((fd - log_sigmoid_grad(x)).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn squared_row_distance_gradient_matches_central_differences() {
        let a = random(3, 4, 16);
        let b = random(3, 4, 17);
        let up = [0.3, -1.2, 2.0];
        let loss = |a: &Tensor2| {
            squared_row_distance(a, &b)
                .unwrap()
                .iter()
                .zip(up)
                .map(|(d, g)| d * g)
                .sum::<f64>()
        };
        let (ga, gb) = squared_row_distance_vjp(&a, &b, &up).unwrap();
        assert!(finite_difference_check(loss, &a, &ga, &FdOptions::default()).passed);
        let loss_b = |b: &Tensor2| {
            squared_row_distance(&a, b)
                .unwrap()
                .iter()
                .zip(up)
                .map(|(d, g)| d * g)
                .sum::<f64>()
        };
        assert!(finite_difference_check(loss_b, &b, &gb, &FdOptions::default()).passed);
    }

    #[test]
    fn reductions_gradients() {
        let t = random(3, 3, 18);
        let opts = FdOptions::default();
        assert!(
            finite_difference_check(|x: &Tensor2| sum(x), &t, &sum_vjp(3, 3, 1.0), &opts).passed
        );
        assert!(
            finite_difference_check(|x: &Tensor2| mean(x), &t, &mean_vjp(3, 3, 1.0), &opts).passed
        );
    }

    #[test]
    fn shape_errors_are_reported() {
        let a = Tensor2::zeros(2, 3);
        assert!(matches!(matmul(&a, &a), Err(Error::Shape { .. })));
        assert!(add(&a, &Tensor2::zeros(3, 2)).is_err());
    }

    #[test]
    fn non_finite_results_are_rejected() {
        let a = Tensor2::filled(1, 1, f64::MAX);
        let b = Tensor2::filled(1, 1, 10.0);
        assert!(matches!(matmul(&a, &b), Err(Error::NonFinite { .. })));
    }
}
