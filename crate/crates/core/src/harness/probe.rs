use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::metrics::{adrg, auc, majority_rate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    Logistic,
    Knn,
}

/// How well an external model recovers the sensitive attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub kind: ProbeKind,
    pub accuracy: f64,
    pub auc: f64,
    pub majority: f64,
    pub adrg: f64,
}

pub const LOGISTIC_MAX_EPOCHS: usize = 500;
pub const LOGISTIC_TOLERANCE: f64 = 1e-6;
pub const KNN_K: usize = 5;

fn standardize(x: &Tensor) -> Tensor {
    let n = x.rows() as f64;
    let means = x.col_means();
    let mut std = vec![0.0; x.cols()];
    for row in x.iter_rows() {
        for (c, v) in row.iter().enumerate() {
            std[c] += (v - means[c]).powi(2) / n;
        }
    }
    let std: Vec<f64> = std.iter().map(|v| if *v > 0.0 { v.sqrt() } else { 1.0 }).collect();
    let cols = x.cols();
    let mut out = x.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        *v = (*v - means[i % cols]) / std[i % cols];
    }
    out
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Full-batch gradient descent on the logistic loss over standardized
/// features; returns in-sample probabilities.
fn logistic_probe(x: &Tensor, t: &[f64]) -> Vec<f64> {
    let x = standardize(x);
    let (n, d) = x.shape();
    let lr = 2.0 / (d as f64 + 1.0);
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut prev = f64::INFINITY;
    let logits = |w: &[f64], b: f64| -> Vec<f64> {
        x.iter_rows()
            .map(|r| b + r.iter().zip(w).map(|(a, c)| a * c).sum::<f64>())
            .collect()
    };
    for _ in 0..LOGISTIC_MAX_EPOCHS {
        let z = logits(&w, b);
        let loss: f64 = z
            .iter()
            .zip(t)
            .map(|(&l, &y)| l.max(0.0) - l * y + (-l.abs()).exp().ln_1p())
            .sum::<f64>()
            / n as f64;
        if (prev - loss).abs() < LOGISTIC_TOLERANCE {
            break;
        }
        prev = loss;
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for (row, (&l, &y)) in x.iter_rows().zip(z.iter().zip(t)) {
            let r = sigmoid(l) - y;
            gb += r;
            for (g, v) in gw.iter_mut().zip(row) {
                *g += r * v;
            }
        }
        b -= lr * gb / n as f64;
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= lr * g / n as f64;
        }
    }
    logits(&w, b).into_iter().map(sigmoid).collect()
}

/// Leave-one-out share of positive labels among the `KNN_K` nearest
/// neighbours of each row (Euclidean, ties to the lower index).
fn knn_probe(x: &Tensor, t: &[f64]) -> Vec<f64> {
    let labels: Vec<usize> = t.iter().map(|&v| usize::from(v == 1.0)).collect();
    (0..x.rows())
        .into_par_iter()
        .map(|q| neighbour_share(x, &labels, q))
        .collect()
}

fn neighbour_share(x: &Tensor, labels: &[usize], q: usize) -> f64 {
    let qrow = x.row(q);
    let mut d: Vec<(f64, usize)> = (0..x.rows())
        .filter(|&j| j != q)
        .map(|j| {
            let sq: f64 = x.row(j).iter().zip(qrow).map(|(a, b)| (a - b) * (a - b)).sum();
            (sq.sqrt(), j)
        })
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let k = KNN_K.min(d.len());
    d[..k].iter().filter(|(_, j)| labels[*j] == 1).count() as f64 / k as f64
}

/// Trains an off-the-shelf probe to recover `s` (as `1[s != 0]`) from
/// `x` and reports its accuracy, AUC and ADRG.
pub fn probe_representation(x: &Tensor, s: &[usize], kind: ProbeKind) -> Result<ProbeReport> {
    if x.rows() != s.len() {
        return Err(Error::Contract(format!("{} rows but {} labels", x.rows(), s.len())));
    }
    if x.rows() < 20 {
        return Err(Error::Config(format!("probing needs at least 20 rows, got {}", x.rows())));
    }
    let t: Vec<f64> = s.iter().map(|&v| f64::from(u8::from(v != 0))).collect();
    if !t.contains(&0.0) || !t.contains(&1.0) {
        return Err(Error::Undefined("probe target has a single group".into()));
    }
    let probs = match kind {
        ProbeKind::Logistic => logistic_probe(x, &t),
        ProbeKind::Knn => knn_probe(x, &t),
    };
    let hits = probs.iter().zip(&t).filter(|(p, y)| (**p > 0.5) == (**y == 1.0)).count();
    let accuracy = hits as f64 / t.len() as f64;
    let binary: Vec<usize> = t.iter().map(|&v| v as usize).collect();
    let majority = majority_rate(&binary);
    Ok(ProbeReport {
        kind,
        accuracy,
        auc: auc(&probs, &t)?,
        majority,
        adrg: adrg(accuracy, majority),
    })
}
