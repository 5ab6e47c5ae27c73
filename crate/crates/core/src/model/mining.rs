use std::cmp::Ordering;

use super::network::Sanet;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn hardest_first<T: Scalar>(scores: &[T]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| {
        scores[b]
            .as_f64()
            .total_cmp(&scores[a].as_f64())
            .then(a.cmp(&b))
    }
}

/// Indices of the `m` highest scores, highest first; equal scores keep
/// ascending index order.
pub fn select_top_m<T: Scalar>(scores: &[T], m: usize) -> Result<Vec<usize>> {
    if m > scores.len() {
        return Err(Error::OutOfRange {
            what: "mined negatives",
            index: m,
            len: scores.len(),
        });
    }
    let cmp = hardest_first(scores);
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    if m == 0 {
        return Ok(Vec::new());
    }
    if m < idx.len() {
        idx.select_nth_unstable_by(m - 1, &cmp);
        idx.truncate(m);
    }
    idx.sort_unstable_by(&cmp);
    Ok(idx)
}

/// Scores every negative in `pool` with `branch` and returns the indices of
/// the `m` most target-like ones.
pub fn mine_hard_negatives<T: Scalar>(
    net: &Sanet<T>,
    pool: &[Tensor<T>],
    branch: usize,
    m: usize,
) -> Result<Vec<usize>> {
    if m > pool.len() {
        return Err(Error::OutOfRange {
            what: "mined negatives",
            index: m,
            len: pool.len(),
        });
    }
    let scores = net.forward_scores(pool, branch)?;
    select_top_m(&scores.positive, m)
}
