use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};

/// Independent shuffled partitions of `0..n` for hyperparameter selection
/// (internal) and reporting (external).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n: usize,
    pub internal: Vec<Vec<usize>>,
    pub external: Vec<Vec<usize>>,
    pub seed: u64,
}

/// Shuffles `0..n` and deals it into `k` folds; the first `n % k` folds get
/// one extra row. Each fold is returned sorted.
pub fn partition(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded(seed));
    let base = n / k;
    let extra = n % k;
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut fold = idx[start..start + len].to_vec();
        fold.sort_unstable();
        out.push(fold);
        start += len;
    }
    out
}

pub fn make_folds(n: usize, internal: usize, external: usize, seed: u64) -> Result<FoldPlan> {
    if internal < 2 || external < 2 {
        return Err(Error::Config(format!(
            "fold counts must be at least 2, got {internal}/{external}"
        )));
    }
    let need = 2 * internal.max(external);
    if n < need {
        return Err(Error::Config(format!(
            "{n} rows cannot be split into {internal} internal and {external} external folds (need {need})"
        )));
    }
    Ok(FoldPlan {
        n,
        internal: partition(n, internal, derive_seed(seed, 0)),
        external: partition(n, external, derive_seed(seed, 1)),
        seed,
    })
}

impl FoldPlan {
    /// Rows outside external fold `k`, sorted.
    pub fn external_train(&self, k: usize) -> Vec<usize> {
        complement(self.n, &self.external[k])
    }

    /// Internal folds restricted to `rows`, expressed as positions into
    /// `rows`, so that nested selection never touches held-out data.
    pub fn internal_within(&self, rows: &[usize]) -> Vec<Vec<usize>> {
        let mut pos = vec![usize::MAX; self.n];
        for (p, &r) in rows.iter().enumerate() {
            pos[r] = p;
        }
        self.internal
            .iter()
            .map(|fold| {
                fold.iter()
                    .filter(|&&r| pos[r] != usize::MAX)
                    .map(|&r| pos[r])
                    .collect()
            })
            .collect()
    }
}

/// Sorted indices of `0..n` not present in `fold`.
pub fn complement(n: usize, fold: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in fold {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}
