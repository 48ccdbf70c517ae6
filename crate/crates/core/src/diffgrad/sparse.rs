use rayon::prelude::*;

use super::tensor::{axpy, Tensor2};
use crate::error::{Error, Result};

/// Weighted compressed-sparse-row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from per-row `(col, value)` lists. Columns within a row must be
    /// strictly ascending.
    pub fn from_row_lists(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        offsets.push(0);
        for (r, row) in rows.iter().enumerate() {
            let mut prev: Option<usize> = None;
            for &(c, v) in row {
                if c >= cols || prev.is_some_and(|p| p >= c) {
                    return Err(Error::shape(
                        "CsrMatrix::from_row_lists",
                        format!("row {r}: column {c} out of order or out of range"),
                    ));
                }
                prev = Some(c);
                indices.push(c);
                values.push(v);
            }
            offsets.push(indices.len());
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            offsets,
            indices,
            values,
        })
    }

    /// Sparse copy of a dense row-major `f32` matrix, dropping exact zeros.
    pub fn from_dense_f32(rows: usize, cols: usize, data: &[f32]) -> Self {
        let mut offsets = Vec::with_capacity(rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        offsets.push(0);
        for r in 0..rows {
            for (c, &v) in data[r * cols..(r + 1) * cols].iter().enumerate() {
                if v != 0.0 {
                    indices.push(c);
                    values.push(v as f64);
                }
            }
            offsets.push(indices.len());
        }
        Self {
            rows,
            cols,
            offsets,
            indices,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.offsets[r]..self.offsets[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (idx, val) = self.row(r);
        idx.binary_search(&c).map_or(0.0, |p| val[p])
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let offsets = counts.clone();
        let mut cursor = counts;
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.rows {
            let (idx, val) = self.row(r);
            for (&c, &v) in idx.iter().zip(val) {
                let p = cursor[c];
                indices[p] = r;
                values[p] = v;
                cursor[c] += 1;
            }
        }
        CsrMatrix {
            rows: self.cols,
            cols: self.rows,
            offsets,
            indices,
            values,
        }
    }

    pub fn to_dense(&self) -> Tensor2 {
        let mut t = Tensor2::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            let (idx, val) = self.row(r);
            for (&c, &v) in idx.iter().zip(val) {
                t.set(r, c, v);
            }
        }
        t
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|r| {
                let (idx, val) = self.row(r);
                idx.iter()
                    .zip(val)
                    .all(|(&c, &v)| (self.get(c, r) - v).abs() <= tol)
            })
    }

    /// `self · m`, row-parallel. Each output row is reduced in a fixed order,
    /// so the result does not depend on the thread count.
    pub fn matmul_dense(&self, m: &Tensor2) -> Result<Tensor2> {
        if m.rows() != self.cols {
            return Err(Error::shape(
                "sparse_dense_matmul",
                format!(
                    "{}x{} sparse times {}x{} dense",
                    self.rows,
                    self.cols,
                    m.rows(),
                    m.cols()
                ),
            ));
        }
        let width = m.cols();
        let mut out = Tensor2::zeros(self.rows, width);
        if width == 0 {
            return Ok(out);
        }
        out.as_mut_slice()
            .par_chunks_mut(width)
            .enumerate()
            .for_each(|(r, dst)| {
                let (idx, val) = self.row(r);
                for (&c, &v) in idx.iter().zip(val) {
                    axpy(v, m.row(c), dst);
                }
            });
        Ok(out)
    }
}
