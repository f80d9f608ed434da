use crate::error::{Error, Result};
use crate::graph::LinkSplit;
use crate::numerics::{sigmoid, Tensor};

fn dot(z: &Tensor, u: usize, v: usize) -> f64 {
    z.row(u).iter().zip(z.row(v)).map(|(a, b)| a * b).sum()
}

/// `sigmoid(z_u · z_v)` for each pair.
pub fn link_scores(z: &Tensor, pairs: &[(usize, usize)]) -> Vec<f64> {
    pairs.iter().map(|&(u, v)| sigmoid(dot(z, u, v))).collect()
}

/// Probability that a random positive outscores a random negative, ties
/// counted as one half. Computed from midranks in `O(n log n)`.
pub fn auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::contract(format!(
            "AUC needs positives and negatives, got {} and {}",
            pos.len(),
            neg.len()
        )));
    }
    if pos.iter().chain(neg).any(|s| s.is_nan()) {
        return Err(Error::NonFinite { op: "auc" });
    }
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean.
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * all[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Held-out link-prediction AUC of inner-product scores.
///
/// Pairs are ranked by the raw inner product; since the sigmoid is strictly
/// increasing this is the AUC of `sigmoid(z_u · z_v)` without the ties that
/// floating-point saturation would introduce.
pub fn link_auc(z: &Tensor, split: &LinkSplit) -> Result<f64> {
    let n = z.rows();
    let check = |pairs: &[(usize, usize)]| {
        pairs.iter().try_for_each(|&(u, v)| {
            if u < n && v < n {
                Ok(())
            } else {
                Err(Error::Consistency(format!(
                    "pair ({u}, {v}) outside an embedding of {n} rows"
                )))
            }
        })
    };
    check(&split.test_pos)?;
    check(&split.test_neg)?;
    let score = |pairs: &[(usize, usize)]| pairs.iter().map(|&(u, v)| dot(z, u, v)).collect::<Vec<_>>();
    auc(&score(&split.test_pos), &score(&split.test_neg))
}
