//! Link-prediction AUC via the Mann–Whitney rank statistic.

use super::EmbeddingSet;
use crate::error::{Error, Result};
use crate::objective::Score;

/// Probability that a positive outranks a negative, ties counted half.
pub fn roc_auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Eval(
            "AUC needs at least one positive and one negative".into(),
        ));
    }
    if let Some(bad) = pos.iter().chain(neg).find(|s| !s.is_finite()) {
        return Err(Error::Eval(format!("non-finite pair score {bad}")));
    }
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Average 1-based ranks over tie groups.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += avg * all[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn))
}

/// AUC of `ψ(h_u, h_v)` separating held-out edges from non-edges.
pub fn link_auc(
    emb: &EmbeddingSet,
    pos: &[(usize, usize)],
    neg: &[(usize, usize)],
    psi: Score,
) -> Result<f64> {
    let n = emb.num_nodes();
    let score = |&(u, v): &(usize, usize)| {
        if u >= n || v >= n {
            return Err(Error::Eval(format!(
                "pair ({u}, {v}) out of range for {n} nodes"
            )));
        }
        Ok(psi.eval(emb.h.row(u), emb.h.row(v)))
    };
    let ps = pos.iter().map(score).collect::<Result<Vec<_>>>()?;
    let ns = neg.iter().map(score).collect::<Result<Vec<_>>>()?;
    roc_auc(&ps, &ns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;
    use rand::Rng;

    fn pairwise(pos: &[f64], neg: &[f64]) -> f64 {
        let mut s = 0.0;
        for p in pos {
            for q in neg {
                s += if p > q {
                    1.0
                } else if p == q {
                    0.5
                } else {
                    0.0
                };
            }
        }
        s / (pos.len() * neg.len()) as f64
    }

    #[test]
    fn separated_and_tied() {
        assert_eq!(roc_auc(&[3.0, 4.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert_eq!(roc_auc(&[0.7; 5], &[0.7; 9]).unwrap(), 0.5);
        assert!(roc_auc(&[], &[1.0]).is_err());
        assert!(roc_auc(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn matches_pairwise_oracle() {
        let mut rng = SeedStream::new(3).rng("auc", 0);
        for _ in 0..20 {
            // Coarse grid so ties occur.
            let pos: Vec<f64> = (0..10).map(|_| rng.random_range(0..6) as f64).collect();
            let neg: Vec<f64> = (0..10).map(|_| rng.random_range(0..5) as f64).collect();
            assert!((roc_auc(&pos, &neg).unwrap() - pairwise(&pos, &neg)).abs() < 1e-12);
        }
    }

    #[test]
    fn link_auc_uses_pair_scores() {
        let h =
            crate::Tensor2::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let emb = EmbeddingSet::new(h, 3).unwrap();
        assert_eq!(
            link_auc(&emb, &[(0, 1)], &[(0, 2)], Score::Dot).unwrap(),
            1.0
        );
        assert!(link_auc(&emb, &[(0, 5)], &[(0, 2)], Score::Dot).is_err());
    }
}
