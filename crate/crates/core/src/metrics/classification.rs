use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-item scores in `[0, 1]` with binary labels and group ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPredictions {
    scores: Vec<f64>,
    labels: Vec<f64>,
    group: Vec<usize>,
}

impl ScoredPredictions {
    pub fn new(scores: Vec<f64>, labels: Vec<f64>, group: Vec<usize>) -> Result<Self> {
        let n = scores.len();
        if labels.len() != n || group.len() != n {
            return Err(Error::Contract(format!(
                "{n} scores, {} labels, {} groups",
                labels.len(),
                group.len()
            )));
        }
        if n == 0 {
            return Err(Error::Contract("empty predictions".into()));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::Contract(format!("score {i} is not finite")));
        }
        if let Some(i) = labels.iter().position(|&l| l != 0.0 && l != 1.0) {
            return Err(Error::Contract(format!("label {i} is not 0 or 1")));
        }
        Ok(ScoredPredictions {
            scores,
            labels,
            group,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn groups(&self) -> &[usize] {
        &self.group
    }

    /// Fraction of items whose thresholded score matches the label.
    pub fn accuracy(&self, threshold: f64) -> f64 {
        let hits = self
            .scores
            .iter()
            .zip(&self.labels)
            .filter(|(s, l)| f64::from(u8::from(**s >= threshold)) == **l)
            .count();
        hits as f64 / self.len() as f64
    }

    /// `(group, value)` for each present group, in ascending group order,
    /// where value is the mean of `f` over that group's items.
    fn per_group(&self, f: impl Fn(usize) -> f64) -> Vec<(usize, f64)> {
        let k = self.group.iter().max().map_or(0, |m| m + 1);
        let mut sum = vec![0.0; k];
        let mut count = vec![0usize; k];
        for (i, &g) in self.group.iter().enumerate() {
            sum[g] += f(i);
            count[g] += 1;
        }
        (0..k)
            .filter(|&g| count[g] > 0)
            .map(|g| (g, sum[g] / count[g] as f64))
            .collect()
    }
}

fn max_pair_gap(values: &[(usize, f64)], what: &str) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::Undefined(format!("{what} needs at least two groups")));
    }
    let mut gap: f64 = 0.0;
    for (a, (_, va)) in values.iter().enumerate() {
        for (_, vb) in &values[a + 1..] {
            gap = gap.max((va - vb).abs());
        }
    }
    Ok(gap)
}

/// Largest absolute gap in per-group accuracy at `threshold`.
pub fn gpa_cls(pred: &ScoredPredictions, threshold: f64) -> Result<f64> {
    let acc = pred.per_group(|i| {
        f64::from(u8::from(
            f64::from(u8::from(pred.scores[i] >= threshold)) == pred.labels[i],
        ))
    });
    max_pair_gap(&acc, "GPA")
}

/// Largest absolute gap in per-group positive rate `P(score >= t | s)`.
pub fn y_discrim(pred: &ScoredPredictions, threshold: f64) -> Result<f64> {
    let rate = pred.per_group(|i| f64::from(u8::from(pred.scores[i] >= threshold)));
    max_pair_gap(&rate, "yDiscrim")
}

/// Twenty evenly spaced thresholds from 0.05 to 0.9525.
pub fn default_threshold_grid() -> Vec<f64> {
    (0..20).map(|j| 0.05 + 0.0475 * j as f64).collect()
}

/// Mean of [`y_discrim`] over a strictly increasing threshold grid.
pub fn audc(pred: &ScoredPredictions, grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Config("empty threshold grid".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) || grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::Config("threshold grid must be strictly increasing".into()));
    }
    let mut total = 0.0;
    for &t in grid {
        total += y_discrim(pred, t)?;
    }
    Ok(total / grid.len() as f64)
}

/// Area under the ROC curve as the Mann-Whitney statistic; ties count one
/// half.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Contract("auc inputs differ in length".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Contract("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1.0).count();
    let n_neg = labels.iter().filter(|&&l| l == 0.0).count();
    if n_pos + n_neg != labels.len() {
        return Err(Error::Contract("labels must be 0 or 1".into()));
    }
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Undefined("auc needs both classes".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        // Mid-rank of the tie block, ranks counted from 1.
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            if labels[i] == 1.0 {
                pos_rank_sum += rank;
            }
        }
        start = end;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

/// Absolute distance of a sensitive-attribute probe's accuracy from the
/// majority-class rate.
pub fn adrg(accuracy: f64, majority_rate: f64) -> f64 {
    (accuracy - majority_rate).abs()
}

/// Share of the most frequent class among `s`.
pub fn majority_rate(s: &[usize]) -> f64 {
    if s.is_empty() {
        return 0.0;
    }
    let k = s.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; k];
    for &g in s {
        counts[g] += 1;
    }
    *counts.iter().max().unwrap_or(&0) as f64 / s.len() as f64
}
