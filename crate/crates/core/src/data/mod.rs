//! Tabular data: schema, CSV ingestion, normalization with exact inverse,
//! fold plans, ranking pairs and synthetic generators.

mod dataset;
mod folds;
mod normalize;
mod pairs;
mod schema;
mod subsample;
pub mod synth;

pub use dataset::{fit_normalizer, load_csv, read_csv, write_csv, write_csv_to, Dataset, Feature};
pub use folds::{complement, make_folds, partition, FoldPlan};
pub use normalize::{FeatureNorm, NormKind, NormalizationSpec};
pub use pairs::{default_budget, make_pairs, pair_label, Pair};
pub use schema::{ColumnKind, ColumnSpec, DatasetSchema};
pub use subsample::{subsample_stratified, Stratum};
pub use synth::{synth_two_gaussians, two_gaussians_schema, SynthConfig, TargetRule};
