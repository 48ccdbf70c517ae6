//! Central-difference gradient checker.

use serde::Serialize;

use super::tensor::Tensor2;
use crate::rng::SeedStream;

#[derive(Debug, Clone)]
pub struct FdOptions {
    pub step: f64,
    pub rtol: f64,
    /// Denominator floor for the relative error, so coordinates whose true
    /// gradient is ~0 are judged by absolute error instead.
    pub abs_floor: f64,
    /// Check at most this many coordinates (seeded sample); `None` checks all.
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            rtol: 1e-4,
            abs_floor: 1e-6,
            max_coords: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FdReport {
    pub checked: usize,
    /// Coordinates excluded because the perturbation crossed a non-smooth point.
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    pub passed: bool,
}

pub fn finite_difference_check<F>(
    loss_fn: F,
    params: &Tensor2,
    analytic: &Tensor2,
    opts: &FdOptions,
) -> FdReport
where
    F: FnMut(&Tensor2) -> f64,
{
    finite_difference_check_with(loss_fn, params, analytic, opts, |_, _| true)
}

/// Like [`finite_difference_check`], with a predicate that reports whether the
/// loss is smooth on the segment between the `+h` and `−h` parameter points.
/// Coordinates where it is not are excluded and counted in `skipped_kinks`.
pub fn finite_difference_check_with<F, S>(
    mut loss_fn: F,
    params: &Tensor2,
    analytic: &Tensor2,
    opts: &FdOptions,
    mut smooth: S,
) -> FdReport
where
    F: FnMut(&Tensor2) -> f64,
    S: FnMut(&Tensor2, &Tensor2) -> bool,
{
    assert_eq!(params.shape(), analytic.shape(), "gradient shape mismatch");
    let coords = select_coords(params.len(), opts);
    let mut plus = params.clone();
    let mut minus = params.clone();
    let mut report = FdReport {
        checked: 0,
        skipped_kinks: 0,
        max_rel_error: 0.0,
        worst_index: None,
        passed: true,
    };
    for idx in coords {
        let orig = params.as_slice()[idx];
        plus.as_mut_slice()[idx] = orig + opts.step;
        minus.as_mut_slice()[idx] = orig - opts.step;
        if !smooth(&plus, &minus) {
            report.skipped_kinks += 1;
        } else {
            let numeric = (loss_fn(&plus) - loss_fn(&minus)) / (2.0 * opts.step);
            let exact = analytic.as_slice()[idx];
            let denom = exact.abs().max(numeric.abs()).max(opts.abs_floor);
            let rel = (exact - numeric).abs() / denom;
            let rel = if rel.is_nan() { f64::INFINITY } else { rel };
            if rel > report.max_rel_error || report.worst_index.is_none() {
                report.max_rel_error = rel;
                report.worst_index = Some(idx);
            }
            report.checked += 1;
        }
        plus.as_mut_slice()[idx] = orig;
        minus.as_mut_slice()[idx] = orig;
    }
    report.passed = report.max_rel_error <= opts.rtol;
    report
}

fn select_coords(len: usize, opts: &FdOptions) -> Vec<usize> {
    match opts.max_coords {
        Some(k) if k < len => {
            let mut rng = SeedStream::new(opts.seed).rng("fd-check", 0);
            let mut picked = rand::seq::index::sample(&mut rng, len, k).into_vec();
            picked.sort_unstable();
            picked
        }
        _ => (0..len).collect(),
    }
}
