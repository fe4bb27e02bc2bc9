use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::rng::seeded;

/// Ordered training pair for a pairwise ranker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
    /// `1` when `y_i >= y_j`, else `0`.
    pub label: f64,
}

pub fn pair_label(yi: f64, yj: f64) -> f64 {
    if yi >= yj {
        1.0
    } else {
        0.0
    }
}

/// Default pair budget: twenty pairs per row.
pub fn default_budget(n: usize) -> usize {
    20 * n
}

/// Samples `budget` ordered pairs (`20 n` when `None`). Pairs stay within
/// a query when query ids are present. Pairs with distinct targets are
/// oriented so that labels alternate `1, 0, 1, ...`; ties keep label 1.
pub fn make_pairs(dataset: &Dataset, budget: Option<usize>, seed: u64) -> Vec<Pair> {
    let n = dataset.n_rows();
    let budget = budget.unwrap_or_else(|| default_budget(n));

    // Rows grouped by query; a single block when there are no queries.
    let blocks: Vec<Vec<usize>> = match &dataset.query_ids {
        Some(q) => {
            let k = q.iter().max().map_or(0, |m| m + 1);
            let mut b = vec![Vec::new(); k];
            for (i, &qi) in q.iter().enumerate() {
                b[qi].push(i);
            }
            b
        }
        None => vec![(0..n).collect()],
    };
    // Only rows that have at least one partner can anchor a pair.
    let anchors: Vec<(usize, usize)> = blocks
        .iter()
        .enumerate()
        .filter(|(_, b)| b.len() >= 2)
        .flat_map(|(bi, b)| (0..b.len()).map(move |p| (bi, p)))
        .collect();
    if anchors.is_empty() {
        return Vec::new();
    }

    let mut rng = seeded(seed);
    let mut out = Vec::with_capacity(budget);
    let mut want_positive = true;
    while out.len() < budget {
        let (bi, p) = anchors[rng.random_range(0..anchors.len())];
        let block = &blocks[bi];
        let mut q = rng.random_range(0..block.len() - 1);
        if q >= p {
            q += 1;
        }
        let (mut i, mut j) = (block[p], block[q]);
        let (yi, yj) = (dataset.y[i], dataset.y[j]);
        if yi != yj {
            if (pair_label(yi, yj) == 1.0) != want_positive {
                std::mem::swap(&mut i, &mut j);
            }
            want_positive = !want_positive;
        }
        out.push(Pair {
            i,
            j,
            label: pair_label(dataset.y[i], dataset.y[j]),
        });
    }
    out
}
