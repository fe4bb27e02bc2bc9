use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Items ordered by descending model score, with per-item relevance and
/// group. `order[r]` is the item at rank `r` (0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    order: Vec<usize>,
    relevance: Vec<f64>,
    group: Vec<usize>,
}

impl RankedList {
    /// Sorts by descending score; equal scores keep the lower index first.
    pub fn from_scores(scores: &[f64], relevance: &[f64], group: &[usize]) -> Result<Self> {
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::Contract("NaN score in ranked list".into()));
        }
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        Self::from_order(order, relevance, group)
    }

    pub fn from_order(order: Vec<usize>, relevance: &[f64], group: &[usize]) -> Result<Self> {
        let n = order.len();
        if relevance.len() != n || group.len() != n {
            return Err(Error::Contract(format!(
                "ranked list of {n} items with {} relevances and {} groups",
                relevance.len(),
                group.len()
            )));
        }
        let mut seen = vec![false; n];
        for &i in &order {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Contract("order is not a permutation".into()));
            }
        }
        Ok(RankedList {
            order,
            relevance: relevance.to_vec(),
            group: group.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Relevances in ranked order.
    pub fn ranked_relevance(&self) -> Vec<f64> {
        self.order.iter().map(|&i| self.relevance[i]).collect()
    }

    /// Groups in ranked order.
    pub fn ranked_groups(&self) -> Vec<usize> {
        self.order.iter().map(|&i| self.group[i]).collect()
    }
}

fn dcg(rels: &[f64]) -> f64 {
    rels.iter()
        .enumerate()
        .map(|(i, r)| (2f64.powf(*r) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG@k with gain `2^r - 1` and discount `log2(rank + 1)`. All-zero
/// relevance returns 1.
pub fn ndcg_at_k(list: &RankedList, k: usize) -> Result<f64> {
    let n = list.len();
    if k == 0 || k > n {
        return Err(Error::Config(format!("k = {k} outside 1..={n}")));
    }
    if list.relevance.iter().any(|r| *r < 0.0 || !r.is_finite()) {
        return Err(Error::Contract("relevance must be finite and >= 0".into()));
    }
    let ranked = list.ranked_relevance();
    let mut ideal = list.relevance.clone();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = dcg(&ideal[..k]);
    if idcg == 0.0 {
        return Ok(1.0);
    }
    Ok(dcg(&ranked[..k]) / idcg)
}

/// Prefix cutoffs `10, 20, ...` plus `N` itself when not a multiple of 10;
/// lists shorter than 10 use `N` only.
pub fn rnd_cutoffs(n: usize) -> Vec<usize> {
    if n < 10 {
        return vec![n];
    }
    let mut c: Vec<usize> = (1..=n / 10).map(|k| 10 * k).collect();
    if !n.is_multiple_of(10) {
        c.push(n);
    }
    c
}

fn rnd_raw(groups: &[usize], protected: usize, cutoffs: &[usize]) -> f64 {
    let n = groups.len();
    let total = groups.iter().filter(|&&g| g == protected).count() as f64 / n as f64;
    let mut prefix = vec![0usize; n + 1];
    for (i, &g) in groups.iter().enumerate() {
        prefix[i + 1] = prefix[i] + usize::from(g == protected);
    }
    cutoffs
        .iter()
        .map(|&i| {
            let ratio = prefix[i] as f64 / i as f64;
            (ratio - total).abs() / (i as f64).log2()
        })
        .sum()
}

/// Normalized discounted prefix difference of the protected group share,
/// divided by its value on the list with every protected item last.
/// Returns 0 when that maximum is itself 0.
pub fn rnd(list: &RankedList, protected: usize) -> Result<f64> {
    let n = list.len();
    if n < 2 {
        return Err(Error::Config("rND needs at least two items".into()));
    }
    let groups = list.ranked_groups();
    let count = groups.iter().filter(|&&g| g == protected).count();
    if count == 0 {
        return Err(Error::Undefined(format!("protected group {protected} absent")));
    }
    let cutoffs = rnd_cutoffs(n);
    let mut dummy = vec![usize::MAX; n - count];
    dummy.extend(std::iter::repeat_n(protected, count));
    let z = rnd_raw(&dummy, protected, &cutoffs);
    if z == 0.0 {
        return Ok(0.0);
    }
    Ok(rnd_raw(&groups, protected, &cutoffs) / z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionAccuracy {
    /// Group of the more relevant item.
    pub higher: usize,
    /// Group of the less relevant item.
    pub lower: usize,
    pub pairs: usize,
    pub correct: usize,
}

impl DirectionAccuracy {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.pairs as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpaReport {
    pub directions: Vec<DirectionAccuracy>,
    /// Max over group pairs of `|A_{i>j} - A_{j>i}|`; `None` when no pair
    /// of groups has comparisons in both directions.
    pub difference: Option<f64>,
}

impl GpaReport {
    pub fn accuracy(&self, higher: usize, lower: usize) -> Option<f64> {
        self.directions
            .iter()
            .find(|d| d.higher == higher && d.lower == lower)
            .map(DirectionAccuracy::accuracy)
    }
}

/// Group-dependent pairwise accuracy over all cross-group pairs with
/// distinct relevance. A pair counts as correct when the more relevant
/// item scores strictly higher.
pub fn gpa_rank(scores: &[f64], relevance: &[f64], group: &[usize]) -> Result<GpaReport> {
    let n = scores.len();
    if relevance.len() != n || group.len() != n {
        return Err(Error::Contract("gpa_rank inputs differ in length".into()));
    }
    let k = group.iter().max().map_or(0, |m| m + 1);
    let mut pairs = vec![0usize; k * k];
    let mut correct = vec![0usize; k * k];

    // Sort by relevance so each item only compares against strictly less
    // relevant ones, counted per group via a running tally.
    let mut by_rel: Vec<usize> = (0..n).collect();
    by_rel.sort_by(|&a, &b| relevance[a].total_cmp(&relevance[b]));
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end < n && relevance[by_rel[end]] == relevance[by_rel[start]] {
            end += 1;
        }
        for &a in &by_rel[start..end] {
            for &b in &by_rel[..start] {
                if group[a] == group[b] {
                    continue;
                }
                let cell = group[a] * k + group[b];
                pairs[cell] += 1;
                if scores[a] > scores[b] {
                    correct[cell] += 1;
                }
            }
        }
        start = end;
    }

    let mut directions = Vec::new();
    for hi in 0..k {
        for lo in 0..k {
            let cell = hi * k + lo;
            if hi != lo && pairs[cell] > 0 {
                directions.push(DirectionAccuracy {
                    higher: hi,
                    lower: lo,
                    pairs: pairs[cell],
                    correct: correct[cell],
                });
            }
        }
    }
    let mut difference: Option<f64> = None;
    for i in 0..k {
        for j in i + 1..k {
            let (a, b) = (i * k + j, j * k + i);
            if pairs[a] > 0 && pairs[b] > 0 {
                let d = (correct[a] as f64 / pairs[a] as f64
                    - correct[b] as f64 / pairs[b] as f64)
                    .abs();
                difference = Some(difference.map_or(d, |m: f64| m.max(d)));
            }
        }
    }
    Ok(GpaReport {
        directions,
        difference,
    })
}
