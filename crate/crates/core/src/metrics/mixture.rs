use rayon::prelude::*;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

fn check(x: &Tensor, s: &[usize], max_k: usize) -> Result<Vec<usize>> {
    let n = x.rows();
    if s.len() != n {
        return Err(Error::Contract(format!("{n} rows but {} labels", s.len())));
    }
    if max_k == 0 || max_k + 1 > n {
        return Err(Error::Config(format!(
            "k = {max_k} needs 1 <= k <= n - 1 = {}",
            n.saturating_sub(1)
        )));
    }
    Ok((0..n).collect())
}

/// `r_k` for `k = 1..=max_k`: averaged over reference-group points, the
/// fraction of their `k` nearest neighbours (Euclidean, query excluded,
/// ties to the lower index) that are also in the reference group.
pub fn knn_ratio_curve(x: &Tensor, s: &[usize], max_k: usize, reference: usize) -> Result<Vec<f64>> {
    let all = check(x, s, max_k)?;
    let refs: Vec<usize> = all.iter().copied().filter(|&i| s[i] == reference).collect();
    if refs.is_empty() {
        return Err(Error::Undefined(format!("reference group {reference} absent")));
    }
    let per_point: Vec<Vec<u32>> = refs
        .par_iter()
        .map(|&q| {
            let qrow = x.row(q);
            let mut d: Vec<(f64, usize)> = all
                .iter()
                .filter(|&&j| j != q)
                .map(|&j| {
                    let sq: f64 = x.row(j).iter().zip(qrow).map(|(a, b)| (a - b) * (a - b)).sum();
                    (sq.sqrt(), j)
                })
                .collect();
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if max_k < d.len() {
                d.select_nth_unstable_by(max_k - 1, cmp);
                d.truncate(max_k);
            }
            d.sort_by(cmp);
            let mut same = 0u32;
            d.iter()
                .map(|&(_, j)| {
                    same += u32::from(s[j] == reference);
                    same
                })
                .collect()
        })
        .collect();
    Ok((0..max_k)
        .map(|k| {
            let total: f64 = per_point.iter().map(|c| f64::from(c[k])).sum();
            total / ((k + 1) as f64 * refs.len() as f64)
        })
        .collect())
}

/// Single `r_k`.
pub fn knn_mixture_ratio(x: &Tensor, s: &[usize], k: usize, reference: usize) -> Result<f64> {
    Ok(knn_ratio_curve(x, s, k, reference)?[k - 1])
}

/// `1 - sum_{k<=T} r_k / (T * r)` with `r` the reference group's share of
/// all points. Zero for perfect mixing and negative (down to `1 - 1/r`)
/// when the groups separate.
pub fn knn_mixture_metric(x: &Tensor, s: &[usize], t: usize, reference: usize) -> Result<f64> {
    let curve = knn_ratio_curve(x, s, t, reference)?;
    let share = s.iter().filter(|&&g| g == reference).count() as f64 / s.len() as f64;
    Ok(1.0 - curve.iter().sum::<f64>() / (t as f64 * share))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_group_ratio_is_one() {
        let x = Tensor::from_rows(&[vec![0.0], vec![1.0], vec![3.0], vec![7.0]]).unwrap();
        let r = knn_ratio_curve(&x, &[0; 4], 3, 0).unwrap();
        assert_eq!(r, vec![1.0; 3]);
    }

    #[test]
    fn coincident_groups_approach_share() {
        let n = 40;
        let x = Tensor::zeros(n, 2);
        let s: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let r = knn_ratio_curve(&x, &s, n - 1, 0).unwrap();
        let share = 0.5;
        assert!((r[n - 2] - share).abs() <= 1.0 / (n - 1) as f64);
    }

    #[test]
    fn separated_clusters_score_high() {
        let mut rows = Vec::new();
        let mut s = Vec::new();
        for i in 0..10 {
            rows.push(vec![i as f64 * 0.01]);
            s.push(0);
            rows.push(vec![100.0 + i as f64 * 0.01]);
            s.push(1);
        }
        let x = Tensor::from_rows(&rows).unwrap();
        let m = knn_mixture_metric(&x, &s, 5, 0).unwrap();
        assert!((m - (1.0 - 1.0 / 0.5)).abs() < 1e-12);
    }

    #[test]
    fn k_bounds() {
        let x = Tensor::zeros(3, 1);
        assert!(knn_mixture_ratio(&x, &[0, 1, 0], 0, 0).is_err());
        assert!(knn_mixture_ratio(&x, &[0, 1, 0], 3, 0).is_err());
        assert!(knn_mixture_ratio(&x, &[0, 1, 0], 2, 0).is_ok());
    }
}
