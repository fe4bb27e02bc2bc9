use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: usize,
    /// Set when the differences have zero variance but a nonzero mean;
    /// `t` is then infinite and `p` is 0.
    pub degenerate: bool,
}

/// Paired t-test on per-fold scores with the variance inflated by
/// `1/n + n_test/n_train` to account for overlapping training sets.
/// Two-sided, `n - 1` degrees of freedom.
pub fn nb_corrected_ttest(a: &[f64], b: &[f64], n_train: usize, n_test: usize) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!("{} vs {} scores", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Config("the corrected t-test needs at least 2 folds".into()));
    }
    if n_train == 0 {
        return Err(Error::Config("training size must be positive".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    let factor = 1.0 / n as f64 + n_test as f64 / n_train as f64;
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTest {
                t: 0.0,
                p: 1.0,
                df,
                degenerate: false,
            }
        } else {
            TTest {
                t: mean.signum() * f64::INFINITY,
                p: 0.0,
                df,
                degenerate: true,
            }
        });
    }
    let t = mean / (factor * var).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::Numeric { what: e.to_string() })?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTest {
        t,
        p,
        df,
        degenerate: false,
    })
}
