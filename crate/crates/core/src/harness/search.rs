use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{HyperParams, SearchSpace};
use crate::error::Result;
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best_index: usize,
    pub best: HyperParams,
    pub samples: Vec<HyperParams>,
    pub scores: Vec<f64>,
}

/// The `budget` configurations a seed produces, in order.
pub fn search_samples(space: &SearchSpace, base: &HyperParams, budget: usize, seed: u64) -> Result<Vec<HyperParams>> {
    space.validate()?;
    if budget == 0 {
        return Err(crate::Error::Config("search budget must be >= 1".into()));
    }
    let mut rng = seeded(seed);
    Ok((0..budget).map(|_| space.sample(base, &mut rng)).collect())
}

/// Seeded random search maximizing `objective(sample, index)`. Samples are
/// scored in parallel; the highest score wins, ties go to the lower index
/// and NaN scores never win.
pub fn random_search<F>(
    space: &SearchSpace,
    base: &HyperParams,
    budget: usize,
    seed: u64,
    objective: F,
) -> Result<SearchResult>
where
    F: Fn(&HyperParams, usize) -> Result<f64> + Sync,
{
    let samples = search_samples(space, base, budget, seed)?;
    let scores = samples
        .par_iter()
        .enumerate()
        .map(|(i, hp)| objective(hp, i))
        .collect::<Result<Vec<f64>>>()?;
    let mut best_index = 0;
    for (i, &s) in scores.iter().enumerate() {
        let current = scores[best_index];
        if s > current || (current.is_nan() && !s.is_nan()) {
            best_index = i;
        }
    }
    Ok(SearchResult {
        best_index,
        best: samples[best_index].clone(),
        samples,
        scores,
    })
}
