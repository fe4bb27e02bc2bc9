use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, HyperParams};
use super::models::{evaluate, fold_data, load_data, model_view, objective_value, train_model, TrainedModel};
use super::search::random_search;
use super::stats::{nb_corrected_ttest, TTest};
use crate::data::{make_folds, Dataset, FoldPlan};
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::rng::derive_seed;

/// Outcome of one external fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub hyperparams: HyperParams,
    /// Mean internal-fold objective of the chosen setting; absent without
    /// a search.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection_score: Option<f64>,
    pub report: MetricReport,
    /// Checkpoint file name, relative to the run directory.
    pub checkpoint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub seed: u64,
    pub objective: String,
    pub config: ExperimentConfig,
    pub folds: Vec<FoldResult>,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

/// A record plus the models it describes, one per external fold.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: RunRecord,
    pub models: Vec<TrainedModel>,
}

fn fold_seed(base: u64, fold: usize, sample: usize, inner: usize) -> u64 {
    derive_seed(derive_seed(derive_seed(base, fold as u64 + 1), sample as u64 + 1), inner as u64 + 1)
}

fn with_context(e: Error, what: &str) -> Error {
    match e {
        Error::Training { epoch, detail } => Error::Training {
            epoch,
            detail: format!("{what}: {detail}"),
        },
        Error::Config(m) => Error::Config(format!("{what}: {m}")),
        Error::Contract(m) => Error::Contract(format!("{what}: {m}")),
        other => other,
    }
}

/// Mean objective of `hp` over the internal folds that fall inside
/// `train_rows`. Diverged trainings score NaN so they never win.
fn internal_score(
    cfg: &ExperimentConfig,
    view: &Dataset,
    plan: &FoldPlan,
    train_rows: &[usize],
    hp: &HyperParams,
    fold: usize,
    sample: usize,
) -> Result<f64> {
    let inner = plan.internal_within(train_rows);
    let mut total = 0.0;
    let mut used = 0usize;
    for (j, held) in inner.iter().enumerate() {
        if held.is_empty() || held.len() == train_rows.len() {
            continue;
        }
        let fit: Vec<usize> = crate::data::complement(train_rows.len(), held)
            .into_iter()
            .map(|p| train_rows[p])
            .collect();
        let val: Vec<usize> = held.iter().map(|&p| train_rows[p]).collect();
        let data = fold_data(view, &fit, &val, cfg.normalization)?;
        let model = match train_model(cfg, hp, &data.train, fold_seed(cfg.seed, fold, sample, j)) {
            Ok(m) => m,
            Err(e) if e.is_numeric() => return Ok(f64::NAN),
            Err(e) => return Err(e),
        };
        let report = match evaluate(cfg, &model, &data.test) {
            Ok(r) => r,
            Err(e) if e.is_numeric() => return Ok(f64::NAN),
            Err(e) => return Err(e),
        };
        total += objective_value(cfg.objective(), &report);
        used += 1;
    }
    if used == 0 {
        return Err(Error::Config("no usable internal folds".into()));
    }
    Ok(total / used as f64)
}

fn run_fold(cfg: &ExperimentConfig, view: &Dataset, plan: &FoldPlan, k: usize) -> Result<(FoldResult, TrainedModel)> {
    let train_rows = plan.external_train(k);
    let test_rows = &plan.external[k];
    let (hyperparams, selection_score) = match &cfg.search {
        Some(search) => {
            let r = random_search(
                &search.space,
                &cfg.params,
                search.budget,
                derive_seed(cfg.seed, 1000 + k as u64),
                |hp, i| internal_score(cfg, view, plan, &train_rows, hp, k, i),
            )?;
            let score = r.scores[r.best_index];
            (r.best, score.is_finite().then_some(score))
        }
        None => (cfg.params.clone(), None),
    };
    let data = fold_data(view, &train_rows, test_rows, cfg.normalization)?;
    let model = train_model(cfg, &hyperparams, &data.train, fold_seed(cfg.seed, k, 0, usize::MAX - 1))?;
    let report = evaluate(cfg, &model, &data.test)?;
    Ok((
        FoldResult {
            fold: k,
            train_rows: train_rows.len(),
            test_rows: test_rows.len(),
            hyperparams,
            selection_score,
            report,
            checkpoint: format!("fold{k}.ckpt.json"),
        },
        model,
    ))
}

/// Nested cross-validation: per external fold, optional random search on
/// the internal folds inside its training rows, then a final fit and a
/// held-out evaluation. Folds run in parallel; results are in fold order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let raw = load_data(&cfg.data, cfg.seed)?;
    let view = model_view(&raw, cfg.model)?;
    let plan = make_folds(view.n_rows(), cfg.internal_folds, cfg.external_folds, cfg.seed)?;
    let results = (0..cfg.external_folds)
        .into_par_iter()
        .map(|k| run_fold(cfg, &view, &plan, k).map_err(|e| with_context(e, &format!("external fold {k}"))))
        .collect::<Result<Vec<_>>>()?;
    let (folds, models): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(RunOutput {
        record: RunRecord {
            config_hash: cfg.hash(),
            seed: cfg.seed,
            objective: cfg.objective().name().to_string(),
            config: cfg.clone(),
            folds,
            wall_time_secs: start.elapsed().as_secs_f64(),
        },
        models,
    })
}

/// Per-fold metrics, one row per fold with a column per metric name.
pub fn write_folds_csv<W: std::io::Write>(record: &RunRecord, out: W) -> Result<()> {
    let names: BTreeSet<&str> = record
        .folds
        .iter()
        .flat_map(|f| f.report.values.keys().map(String::as_str))
        .collect();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["fold".to_string(), "selection_score".to_string()];
    header.extend(names.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for f in &record.folds {
        let mut row = vec![f.fold.to_string(), f.selection_score.map_or_else(String::new, |v| v.to_string())];
        row.extend(names.iter().map(|n| f.report.get(n).map_or_else(String::new, |v| v.to_string())));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Writes `run.json`, `folds.csv` and one checkpoint per fold into `dir`.
pub fn write_run(output: &RunOutput, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = serde_json::to_string_pretty(&output.record)?;
    let path = dir.join("run.json");
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    let path = dir.join("folds.csv");
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_folds_csv(&output.record, file)?;
    for (f, m) in output.record.folds.iter().zip(&output.models) {
        m.save(dir.join(&f.checkpoint))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metric: String,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub n_train: usize,
    pub n_test: usize,
    pub test: TTest,
}

/// Default fold count for significance comparisons.
pub const COMPARE_FOLDS: usize = 15;

/// Scores each record fold by `metric` (the objective when `None`) and
/// runs the corrected t-test. Both records must share fold layout.
pub fn compare_records(a: &RunRecord, b: &RunRecord, metric: Option<&str>) -> Result<Comparison> {
    if a.folds.len() != b.folds.len() {
        return Err(Error::Config(format!(
            "runs have {} and {} folds",
            a.folds.len(),
            b.folds.len()
        )));
    }
    for (fa, fb) in a.folds.iter().zip(&b.folds) {
        if fa.test_rows != fb.test_rows || fa.train_rows != fb.train_rows {
            return Err(Error::Config(format!("fold {} differs between runs", fa.fold)));
        }
    }
    let objective = a.config.objective();
    let pick = |r: &MetricReport| -> Result<f64> {
        match metric {
            Some(m) => r
                .get(m)
                .ok_or_else(|| Error::Config(format!("metric {m:?} missing from a fold report"))),
            None => Ok(objective_value(objective, r)),
        }
    };
    let sa = a.folds.iter().map(|f| pick(&f.report)).collect::<Result<Vec<_>>>()?;
    let sb = b.folds.iter().map(|f| pick(&f.report)).collect::<Result<Vec<_>>>()?;
    let first = a
        .folds
        .first()
        .ok_or_else(|| Error::Config("runs have no folds".into()))?;
    let test = nb_corrected_ttest(&sa, &sb, first.train_rows, first.test_rows)?;
    Ok(Comparison {
        metric: metric.map_or_else(|| objective.name().to_string(), str::to_string),
        a: sa,
        b: sb,
        n_train: first.train_rows,
        n_test: first.test_rows,
        test,
    })
}
