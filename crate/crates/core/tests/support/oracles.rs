//! Straight-from-the-definition reference implementations, quadratic or
//! worse, used only to cross-check the library.
#![allow(dead_code)]

/// Rank position of each item: how many items precede it when sorted by
/// descending score with the lower index first on ties.
pub fn positions(scores: &[f64]) -> Vec<usize> {
    (0..scores.len())
        .map(|i| {
            (0..scores.len())
                .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
                .count()
        })
        .collect()
}

pub fn ndcg(scores: &[f64], rel: &[f64], k: usize) -> f64 {
    let pos = positions(scores);
    let mut dcg = 0.0;
    for i in 0..rel.len() {
        if pos[i] < k {
            dcg += (2f64.powf(rel[i]) - 1.0) / ((pos[i] + 2) as f64).log2();
        }
    }
    // Ideal: pick the max remaining relevance k times.
    let mut used = vec![false; rel.len()];
    let mut idcg = 0.0;
    for p in 0..k {
        let mut best = None;
        for i in 0..rel.len() {
            if !used[i] && best.is_none_or(|b: usize| rel[i] > rel[b]) {
                best = Some(i);
            }
        }
        let b = best.unwrap();
        used[b] = true;
        idcg += (2f64.powf(rel[b]) - 1.0) / ((p + 2) as f64).log2();
    }
    if idcg == 0.0 {
        1.0
    } else {
        dcg / idcg
    }
}

fn rnd_sum(ranked_groups: &[usize], protected: usize) -> f64 {
    let n = ranked_groups.len();
    let total = ranked_groups.iter().filter(|&&g| g == protected).count() as f64 / n as f64;
    let mut acc = 0.0;
    for i in 1..=n {
        let evaluated = if n < 10 { i == n } else { i % 10 == 0 || i == n };
        if !evaluated {
            continue;
        }
        let top = ranked_groups[..i].iter().filter(|&&g| g == protected).count() as f64;
        acc += (top / i as f64 - total).abs() / (i as f64).log2();
    }
    acc
}

pub fn rnd(scores: &[f64], group: &[usize], protected: usize) -> f64 {
    let pos = positions(scores);
    let mut ranked = vec![0; scores.len()];
    for (i, &p) in pos.iter().enumerate() {
        ranked[p] = group[i];
    }
    let count = group.iter().filter(|&&g| g == protected).count();
    let mut dummy = vec![protected + 1; group.len() - count];
    dummy.extend(vec![protected; count]);
    let z = rnd_sum(&dummy, protected);
    if z == 0.0 {
        0.0
    } else {
        rnd_sum(&ranked, protected) / z
    }
}

/// `(pairs, correct)` for the direction higher-group -> lower-group.
pub fn gpa_direction(
    scores: &[f64],
    rel: &[f64],
    group: &[usize],
    higher: usize,
    lower: usize,
) -> (usize, usize) {
    let (mut pairs, mut correct) = (0, 0);
    for a in 0..scores.len() {
        for b in 0..scores.len() {
            if group[a] == higher && group[b] == lower && rel[a] > rel[b] {
                pairs += 1;
                if scores[a] > scores[b] {
                    correct += 1;
                }
            }
        }
    }
    (pairs, correct)
}

pub fn group_mean(values: &[f64], group: &[usize], g: usize) -> Option<f64> {
    let v: Vec<f64> = values
        .iter()
        .zip(group)
        .filter(|(_, &gg)| gg == g)
        .map(|(v, _)| *v)
        .collect();
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

pub fn y_discrim_binary(scores: &[f64], group: &[usize], t: f64) -> f64 {
    let pos: Vec<f64> = scores.iter().map(|&s| if s >= t { 1.0 } else { 0.0 }).collect();
    (group_mean(&pos, group, 1).unwrap() - group_mean(&pos, group, 0).unwrap()).abs()
}

pub fn gpa_cls_binary(scores: &[f64], labels: &[f64], group: &[usize], t: f64) -> f64 {
    let hit: Vec<f64> = scores
        .iter()
        .zip(labels)
        .map(|(&s, &l)| if (s >= t) == (l == 1.0) { 1.0 } else { 0.0 })
        .collect();
    (group_mean(&hit, group, 1).unwrap() - group_mean(&hit, group, 0).unwrap()).abs()
}

pub fn auc(scores: &[f64], labels: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] == 1.0 && labels[j] == 0.0 {
                den += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

/// `r_k` via a full sort of all distances for every reference point.
pub fn knn_ratio(rows: &[Vec<f64>], s: &[usize], k: usize, reference: usize) -> f64 {
    let mut total = 0.0;
    let mut count = 0.0;
    for q in 0..rows.len() {
        if s[q] != reference {
            continue;
        }
        let mut d: Vec<(f64, usize)> = (0..rows.len())
            .filter(|&j| j != q)
            .map(|j| {
                let dist = rows[q]
                    .iter()
                    .zip(&rows[j])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                (dist, j)
            })
            .collect();
        d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let same = d[..k].iter().filter(|(_, j)| s[*j] == reference).count();
        total += same as f64 / k as f64;
        count += 1.0;
    }
    total / count
}

pub fn mixture(rows: &[Vec<f64>], s: &[usize], t: usize, reference: usize) -> f64 {
    let share = s.iter().filter(|&&g| g == reference).count() as f64 / s.len() as f64;
    let sum: f64 = (1..=t).map(|k| knn_ratio(rows, s, k, reference)).sum();
    1.0 - sum / (t as f64 * share)
}
