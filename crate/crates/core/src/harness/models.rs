use std::path::Path;

use serde::Deserialize;

use super::config::{DataSource, ExperimentConfig, HyperParams, ModelKind, Objective};
use crate::autodiff::Tensor;
use crate::data::{
    fit_normalizer, load_csv, make_pairs, synth_two_gaussians, Dataset, DatasetSchema, NormKind,
    NormalizationSpec,
};
use crate::error::{Error, Result};
use crate::explicit::{train_advcls, train_advdr, ExplicitModel};
use crate::flow::{train_fairnf, FairNfModel};
use crate::metrics::{
    audc, auc, default_threshold_grid, gpa_cls, gpa_rank, ndcg_at_k, rnd, y_discrim, MetricReport,
    RankedList, ScoredPredictions,
};
use crate::rng::derive_seed;
use crate::{Corrector, Task};

/// A trained model of either family.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Explicit(ExplicitModel),
    Flow(FairNfModel),
}

impl TrainedModel {
    pub fn score(&self, x: &Tensor) -> Result<Vec<f64>> {
        match self {
            TrainedModel::Explicit(m) => m.score(x),
            TrainedModel::Flow(m) => m.score(x),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        match self {
            TrainedModel::Explicit(m) => m.save(path),
            TrainedModel::Flow(m) => m.save(path),
        }
    }

    /// Loads either checkpoint kind.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        #[derive(Deserialize)]
        struct Kind {
            kind: String,
        }
        let kind: Kind = serde_json::from_str(&text)?;
        match kind.kind.as_str() {
            "explicit" => Ok(TrainedModel::Explicit(ExplicitModel::from_checkpoint(
                &crate::checkpoint::Checkpoint::from_json(&text, "explicit")?,
            )?)),
            "fairnf" => Ok(TrainedModel::Flow(FairNfModel::from_checkpoint(
                &crate::checkpoint::Checkpoint::from_json(&text, "fairnf")?,
            )?)),
            other => Err(Error::Contract(format!("unknown model kind {other:?}"))),
        }
    }
}

impl Corrector for TrainedModel {
    fn correct(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        match self {
            TrainedModel::Explicit(m) => m.correct(x),
            TrainedModel::Flow(m) => m.correct(x),
        }
    }

    fn is_trained(&self) -> bool {
        match self {
            TrainedModel::Explicit(m) => m.is_trained(),
            TrainedModel::Flow(m) => m.is_trained(),
        }
    }
}

/// Raw rows for a config, before any normalization.
pub fn load_data(source: &DataSource, seed: u64) -> Result<Dataset> {
    match source {
        DataSource::Csv { csv, schema } => load_csv(csv, &DatasetSchema::from_path(schema)?),
        DataSource::Synth(cfg) => synth_two_gaussians(cfg, seed),
    }
}

/// The columns a model family consumes: continuous only for flows.
pub fn model_view(raw: &Dataset, kind: ModelKind) -> Result<Dataset> {
    if kind.flow_variant().is_some() {
        raw.flow_view()
    } else {
        Ok(raw.clone())
    }
}

/// Fits normalization on `train`; columns declared `none` use `default`.
pub fn fit_normalization(train: &Dataset, default: NormKind) -> Result<NormalizationSpec> {
    let kinds: Vec<NormKind> = train
        .norm_kinds()
        .into_iter()
        .map(|k| if k == NormKind::None { default } else { k })
        .collect();
    fit_normalizer(train, &kinds)
}

/// Trains the configured model family on a normalized dataset.
pub fn train_model(
    cfg: &ExperimentConfig,
    hp: &HyperParams,
    ds: &Dataset,
    seed: u64,
) -> Result<TrainedModel> {
    match cfg.model.flow_variant() {
        Some(variant) => {
            let fc = hp.fairnf(variant, cfg.task, cfg.pivot, seed);
            Ok(TrainedModel::Flow(train_fairnf(ds, &fc)?.0))
        }
        None => {
            let ec = hp.explicit(cfg.normalization, seed);
            let model = match cfg.task {
                Task::Cls => train_advcls(ds, &ec)?.0,
                Task::Rank => {
                    let pairs = make_pairs(ds, ec.pair_budget, derive_seed(seed, 2));
                    train_advdr(ds, &pairs, &ec)?.0
                }
            };
            Ok(TrainedModel::Explicit(model))
        }
    }
}

/// Lists to rank: one per query id, or the whole set.
fn rank_lists(ds: &Dataset) -> Vec<Vec<usize>> {
    match &ds.query_ids {
        Some(q) => {
            let n_q = q.iter().max().map_or(0, |m| m + 1);
            let mut lists = vec![Vec::new(); n_q];
            for (i, &qi) in q.iter().enumerate() {
                lists[qi].push(i);
            }
            lists.into_iter().filter(|l| l.len() >= 2).collect()
        }
        None => vec![(0..ds.n_rows()).collect()],
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Ranking metrics averaged over lists where each is defined.
pub fn evaluate_rank(scores: &[f64], ds: &Dataset, k: usize, protected: usize) -> Result<MetricReport> {
    let (mut ndcg, mut rnds, mut gpas) = (Vec::new(), Vec::new(), Vec::new());
    for list in rank_lists(ds) {
        let sc: Vec<f64> = list.iter().map(|&i| scores[i]).collect();
        let rel: Vec<f64> = list.iter().map(|&i| ds.y[i]).collect();
        let grp: Vec<usize> = list.iter().map(|&i| ds.s[i]).collect();
        let ranked = RankedList::from_scores(&sc, &rel, &grp)?;
        ndcg.push(ndcg_at_k(&ranked, k.min(list.len()))?);
        match rnd(&ranked, protected) {
            Ok(v) => rnds.push(v),
            Err(Error::Undefined(_)) => {}
            Err(e) => return Err(e),
        }
        if let Some(d) = gpa_rank(&sc, &rel, &grp)?.difference {
            gpas.push(d);
        }
    }
    let mut r = MetricReport::new();
    if let Some(v) = mean(&ndcg) {
        r.insert(format!("ndcg@{k}"), v);
    }
    if let Some(v) = mean(&rnds) {
        r.insert("rnd", v);
    }
    if let Some(v) = mean(&gpas) {
        r.insert("gpa", v);
    }
    Ok(r)
}

pub fn evaluate_cls(scores: &[f64], ds: &Dataset, threshold: f64) -> Result<MetricReport> {
    let pred = ScoredPredictions::new(scores.to_vec(), ds.y.clone(), ds.s.clone())?;
    let grid = default_threshold_grid();
    let mut r = MetricReport::new();
    r.insert("accuracy", pred.accuracy(threshold));
    if ds.y.contains(&0.0) && ds.y.contains(&1.0) {
        r.insert("auc", auc(scores, &ds.y)?);
    }
    r.insert("audc", audc(&pred, &grid)?);
    r.insert("gpa", gpa_cls(&pred, threshold)?);
    r.insert("ydiscrim", y_discrim(&pred, threshold)?);
    Ok(r.with_thresholds(grid))
}

pub fn evaluate(cfg: &ExperimentConfig, model: &TrainedModel, ds: &Dataset) -> Result<MetricReport> {
    let scores = model.score(&ds.x)?;
    match cfg.task {
        Task::Cls => evaluate_cls(&scores, ds, cfg.threshold),
        Task::Rank => evaluate_rank(&scores, ds, cfg.ndcg_k, cfg.protected),
    }
}

/// Value of the selection objective; a missing fairness metric counts as
/// the worst case.
pub fn objective_value(objective: Objective, report: &MetricReport) -> f64 {
    match objective {
        Objective::OneMinusRnd => 1.0 - report.get("rnd").unwrap_or(1.0),
        Objective::OneMinusAudc => 1.0 - report.get("audc").unwrap_or(1.0),
    }
}

/// Split rows, fit normalization on the training part, train, and
/// evaluate on the held-out part.
pub struct FoldData {
    pub train: Dataset,
    pub test: Dataset,
    pub spec: NormalizationSpec,
}

pub fn fold_data(view: &Dataset, train_rows: &[usize], test_rows: &[usize], norm: NormKind) -> Result<FoldData> {
    let train_raw = view.select_rows(train_rows);
    let spec = fit_normalization(&train_raw, norm)?;
    Ok(FoldData {
        train: train_raw.normalized(&spec)?,
        test: view.select_rows(test_rows).normalized(&spec)?,
        spec,
    })
}

/// The config's dataset in the column view of its model family.
pub fn load_view(cfg: &ExperimentConfig) -> Result<Dataset> {
    model_view(&load_data(&cfg.data, cfg.seed)?, cfg.model)
}

/// A model fitted on every row, with its normalization and in-sample
/// metrics.
#[derive(Debug, Clone)]
pub struct FullFit {
    pub model: TrainedModel,
    pub spec: NormalizationSpec,
    pub report: MetricReport,
}

pub fn train_full(cfg: &ExperimentConfig) -> Result<FullFit> {
    cfg.validate()?;
    let view = load_view(cfg)?;
    let spec = fit_normalization(&view, cfg.normalization)?;
    let ds = view.normalized(&spec)?;
    let model = train_model(cfg, &cfg.params, &ds, derive_seed(cfg.seed, 0))?;
    let report = evaluate(cfg, &model, &ds)?;
    Ok(FullFit { model, spec, report })
}
