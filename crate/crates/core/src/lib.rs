//! Interpretable fair representation learning with correction vectors.
//!
//! A model in this crate never emits an opaque embedding. It emits a
//! corrected feature vector `z` together with the correction `w = z - x`
//! that produced it, both living in the original feature space, so the
//! debiasing can be read off feature by feature.
//!
//! Two families of correctors are provided:
//!
//! - [`explicit`]: a width-constrained extractor with an input skip
//!   connection, trained against a gradient-reversal adversary, with a
//!   classification or pairwise-ranking head.
//! - [`flow`]: a pair of Real NVP flows `f_all` and `f_p` whose
//!   composition `f_p^-1 . f_all` maps every group onto a pivot group;
//!   the correction is implicit, `w = f(x) - x`.
//!
//! Everything runs on the small reverse-mode engine in [`autodiff`].
//! [`metrics`] holds the ranking and classification fairness metrics and
//! [`harness`] the fold protocol, search, probes and reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod explicit;
pub mod flow;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod rng;

pub use autodiff::{AdamConfig, AdamState, Gradients, Graph, ParamStore, Tensor, Var};
pub use data::{Dataset, DatasetSchema, FoldPlan, NormKind, NormalizationSpec};

pub use error::{Error, Result};
pub use explicit::{ExplicitModel, ExplicitTrainConfig};
pub use metrics::{MetricReport, RankedList, ScoredPredictions};
pub use flow::{CouplingLayer, FairNfConfig, FairNfModel, FlowStack, FlowVariant};
pub use harness::{ExperimentConfig, ModelKind, RunRecord, TrainedModel};

/// Anything that maps normalized features to `(corrections, corrected)`.
pub trait Corrector {
    /// Returns `(W, Z)` with `Z = X + W`, all in normalized units.
    fn correct(&self, x: &Tensor) -> Result<(Tensor, Tensor)>;

    /// False for freshly initialized models that were never fitted.
    fn is_trained(&self) -> bool {
        true
    }
}

/// Prediction task carried by a model head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Cls,
    Rank,
}
