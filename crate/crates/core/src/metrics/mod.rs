//! Ranking, classification and representation fairness metrics.

mod classification;
mod mixture;
mod ranking;
mod report;

pub use classification::{
    adrg, audc, auc, default_threshold_grid, gpa_cls, majority_rate, y_discrim, ScoredPredictions,
};
pub use mixture::{knn_mixture_metric, knn_mixture_ratio, knn_ratio_curve};
pub use ranking::{
    gpa_rank, ndcg_at_k, rnd, rnd_cutoffs, DirectionAccuracy, GpaReport, RankedList,
};
pub use report::MetricReport;
