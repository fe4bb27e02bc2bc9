use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Column used to build strata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    Sensitive,
    Target,
    Feature(String),
}

/// Keeps `round(fraction * |stratum|)` rows of every stratum (at least
/// one), preserving the original row order.
pub fn subsample_stratified(
    dataset: &Dataset,
    fraction: f64,
    strata: &[Stratum],
    seed: u64,
) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    if fraction == 1.0 {
        return Ok(dataset.clone());
    }
    let mut cols = Vec::new();
    for s in strata {
        if let Stratum::Feature(name) = s {
            let j = dataset
                .feature_index(name)
                .ok_or_else(|| Error::Config(format!("unknown stratum feature `{name}`")))?;
            cols.push(Some(j));
        } else {
            cols.push(None);
        }
    }
    let mut groups: BTreeMap<Vec<u64>, Vec<usize>> = BTreeMap::new();
    for i in 0..dataset.n_rows() {
        let key = strata
            .iter()
            .zip(&cols)
            .map(|(s, c)| match s {
                Stratum::Sensitive => dataset.s[i] as u64,
                Stratum::Target => dataset.y[i].to_bits(),
                Stratum::Feature(_) => dataset.x.get(i, c.expect("resolved")).to_bits(),
            })
            .collect();
        groups.entry(key).or_default().push(i);
    }

    let mut rng = seeded(seed);
    let mut keep = Vec::new();
    for rows in groups.values() {
        let take = ((fraction * rows.len() as f64).round() as usize).max(1);
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut rng);
        keep.extend_from_slice(&shuffled[..take.min(rows.len())]);
    }
    keep.sort_unstable();
    Ok(dataset.select_rows(&keep))
}
