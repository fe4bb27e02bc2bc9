//! Experiment orchestration: configs, nested cross-validation, random
//! search, probes, correction reports, significance tests and plots.

mod analysis;
mod config;
mod models;
mod plot;
mod probe;
mod run;
mod search;
mod stats;

pub use analysis::{
    analyze_corrections, audc_threshold_sweep, write_correction_csv, write_sweep_csv, CorrectionReport, GroupStats,
    RelativeChange, SweepRow,
};
pub use config::{
    DataSource, ExperimentConfig, HyperParams, ModelKind, Objective, RealDim, SearchConfig, SearchSpace,
};
pub use models::{
    evaluate, evaluate_cls, evaluate_rank, fit_normalization, fold_data, load_data, model_view, objective_value,
    load_view, train_full, train_model, FoldData, FullFit, TrainedModel,
};
pub use plot::{emit_direction_plot, render_direction_plot};
pub use probe::{probe_representation, ProbeKind, ProbeReport, KNN_K, LOGISTIC_MAX_EPOCHS, LOGISTIC_TOLERANCE};
pub use run::{
    compare_records, run_experiment, write_folds_csv, write_run, Comparison, FoldResult, RunOutput, RunRecord,
    COMPARE_FOLDS,
};
pub use search::{random_search, search_samples, SearchResult};
pub use stats::{nb_corrected_ttest, TTest};
