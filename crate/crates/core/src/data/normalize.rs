use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    /// Zero mean, unit (population) standard deviation.
    Standard,
    /// Linear map of the observed range onto `[0, 1]`.
    MinMax,
    None,
}

/// Fitted parameters for one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureNorm {
    Standard { mean: f64, std: f64 },
    MinMax { min: f64, max: f64 },
    None,
}

impl FeatureNorm {
    pub fn kind(&self) -> NormKind {
        match self {
            FeatureNorm::Standard { .. } => NormKind::Standard,
            FeatureNorm::MinMax { .. } => NormKind::MinMax,
            FeatureNorm::None => NormKind::None,
        }
    }

    /// `(offset, scale)` with `normalized = (raw - offset) / scale`.
    pub fn affine(&self) -> (f64, f64) {
        match *self {
            FeatureNorm::Standard { mean, std } => (mean, std),
            // Degenerate ranges map everything onto 0.
            FeatureNorm::MinMax { min, max } => {
                let range = max - min;
                (min, if range > 0.0 { range } else { 1.0 })
            }
            FeatureNorm::None => (0.0, 1.0),
        }
    }
}

/// Per-feature normalization `g` with its inverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub features: Vec<FeatureNorm>,
}

impl NormalizationSpec {
    /// Fits one normalization per column of `x`.
    pub fn fit(x: &Tensor, kinds: &[NormKind]) -> Result<Self> {
        if kinds.len() != x.cols() {
            return Err(Error::Contract(format!(
                "{} normalization kinds for {} columns",
                kinds.len(),
                x.cols()
            )));
        }
        if x.rows() == 0 {
            return Err(Error::Contract("cannot fit a normalizer on zero rows".into()));
        }
        let n = x.rows() as f64;
        let features = kinds
            .iter()
            .enumerate()
            .map(|(j, kind)| {
                let col = x.col(j);
                match kind {
                    NormKind::Standard => {
                        let mean = col.iter().sum::<f64>() / n;
                        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                        let std = var.sqrt();
                        FeatureNorm::Standard {
                            mean,
                            std: if std > 0.0 { std } else { 1.0 },
                        }
                    }
                    NormKind::MinMax => {
                        let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
                        let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        FeatureNorm::MinMax { min, max }
                    }
                    NormKind::None => FeatureNorm::None,
                }
            })
            .collect();
        Ok(NormalizationSpec { features })
    }

    pub fn identity(dim: usize) -> Self {
        NormalizationSpec {
            features: vec![FeatureNorm::None; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    /// Restriction to a subset of columns, in the given order.
    pub fn select(&self, cols: &[usize]) -> Self {
        NormalizationSpec {
            features: cols.iter().map(|&c| self.features[c]).collect(),
        }
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.cols() != self.dim() {
            return Err(Error::Contract(format!(
                "normalizer fitted on {} features, got {}",
                self.dim(),
                x.cols()
            )));
        }
        Ok(())
    }

    fn map_cols(&self, x: &Tensor, f: impl Fn(f64, f64, f64) -> f64) -> Result<Tensor> {
        self.check(x)?;
        let affine: Vec<(f64, f64)> = self.features.iter().map(FeatureNorm::affine).collect();
        let mut out = x.clone();
        let cols = x.cols();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let (offset, scale) = affine[i % cols];
            *v = f(*v, offset, scale);
        }
        Ok(out)
    }

    /// `g(x_raw)`.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        self.map_cols(x, |v, o, s| (v - o) / s)
    }

    /// `g^-1(x)`, the full affine inverse.
    pub fn invert(&self, x: &Tensor) -> Result<Tensor> {
        self.map_cols(x, |v, o, s| v * s + o)
    }

    /// Raw-unit corrections: a difference of normalized values only picks
    /// up the scale factor, the offsets cancel.
    pub fn invert_correction(&self, w: &Tensor) -> Result<Tensor> {
        self.map_cols(w, |v, _, s| v * s)
    }
}
