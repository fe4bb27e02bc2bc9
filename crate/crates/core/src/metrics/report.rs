use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Named metric values, plus the threshold grid when AUDC was computed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub values: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<f64>>,
}

/// Documented range for a metric name, matched on the name's prefix so
/// that variants like `ndcg@10` or `rnd_train` resolve.
fn range_of(name: &str) -> (f64, f64) {
    let base = name.split(['@', '_', ':']).next().unwrap_or(name);
    match base {
        "mixture" | "m" => (f64::NEG_INFINITY, 1.0),
        "ndcg" | "rnd" | "audc" | "auc" | "gpa" | "adrg" | "ydiscrim" | "accuracy" => (0.0, 1.0),
        _ => (f64::NEG_INFINITY, f64::INFINITY),
    }
}

impl MetricReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: f64) -> &mut Self {
        self.values.insert(name.into(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn with_thresholds(mut self, grid: Vec<f64>) -> Self {
        self.thresholds = Some(grid);
        self
    }

    /// Checks every value is finite and within its metric's range.
    pub fn validate(&self) -> Result<()> {
        for (name, &v) in &self.values {
            let (lo, hi) = range_of(name);
            if !v.is_finite() || v < lo - 1e-12 || v > hi + 1e-12 {
                return Err(Error::Contract(format!("{name} = {v} outside [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_ranges() {
        let mut r = MetricReport::new();
        r.insert("ndcg@10", 0.75).insert("mixture", -0.4).insert("gpa", 0.1);
        let r = r.with_thresholds(vec![0.05, 0.1]);
        r.validate().unwrap();
        let back = MetricReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);

        let mut bad = MetricReport::new();
        bad.insert("auc", 1.5);
        assert!(bad.validate().is_err());
    }
}
