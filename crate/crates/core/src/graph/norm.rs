use super::Graph;
use crate::diffgrad::{CsrMatrix, Tensor2};
use crate::error::Result;

/// `Ã = D^{-1/2} (A + I) D^{-1/2}` with `D` the degree matrix of `A + I`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormAdj {
    matrix: CsrMatrix,
}

impl NormAdj {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn num_nodes(&self) -> usize {
        self.matrix.rows()
    }

    pub fn to_dense(&self) -> Tensor2 {
        self.matrix.to_dense()
    }

    /// `Ã · m`.
    pub fn apply(&self, m: &Tensor2) -> Result<Tensor2> {
        self.matrix.matmul_dense(m)
    }
}

pub fn normalized_adjacency(g: &Graph) -> NormAdj {
    let inv_sqrt: Vec<f64> = (0..g.num_nodes())
        .map(|v| 1.0 / ((g.degree(v) + 1) as f64).sqrt())
        .collect();
    let rows = (0..g.num_nodes())
        .map(|i| {
            let mut row = Vec::with_capacity(g.degree(i) + 1);
            let mut diag_done = false;
            for &j in g.neighbors(i) {
                if !diag_done && j > i {
                    row.push((i, inv_sqrt[i] * inv_sqrt[i]));
                    diag_done = true;
                }
                row.push((j, inv_sqrt[i] * inv_sqrt[j]));
            }
            if !diag_done {
                row.push((i, inv_sqrt[i] * inv_sqrt[i]));
            }
            row
        })
        .collect();
    NormAdj {
        matrix: CsrMatrix::from_row_lists(g.num_nodes(), rows)
            .expect("graph neighbor lists are sorted and in range"),
    }
}

/// `Ã² · m`, evaluated as `Ã (Ã m)` without forming `Ã²`.
pub fn propagate_twice(adj: &NormAdj, m: &Tensor2) -> Result<Tensor2> {
    adj.apply(&adj.apply(m)?)
}
