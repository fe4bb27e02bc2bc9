use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{NormKind, SynthConfig};
use crate::error::{Error, Result};
use crate::explicit::ExplicitTrainConfig;
use crate::flow::{FairNfConfig, FlowVariant};
use crate::rng::Rng;
use crate::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Advcls,
    Advdr,
    FairnfBase,
    FairnfFpr,
    FairnfBce,
}

impl ModelKind {
    pub fn flow_variant(self) -> Option<FlowVariant> {
        match self {
            ModelKind::FairnfBase => Some(FlowVariant::Base),
            ModelKind::FairnfFpr => Some(FlowVariant::Fpr),
            ModelKind::FairnfBce => Some(FlowVariant::Bce),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Advcls => "advcls",
            ModelKind::Advdr => "advdr",
            ModelKind::FairnfBase => "fairnf-base",
            ModelKind::FairnfFpr => "fairnf-fpr",
            ModelKind::FairnfBce => "fairnf-bce",
        }
    }
}

/// Where the rows come from: a CSV with its schema, or the two-Gaussians
/// generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Csv { csv: PathBuf, schema: PathBuf },
    Synth(SynthConfig),
}

/// Fixed hyperparameters; unset fields keep the model family's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub head_hidden: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair_budget: Option<usize>,
}

impl HyperParams {
    pub fn explicit(&self, normalization: NormKind, seed: u64) -> ExplicitTrainConfig {
        let d = ExplicitTrainConfig::default();
        ExplicitTrainConfig {
            lambda: self.lambda.unwrap_or(d.lambda),
            lr: self.lr.unwrap_or(d.lr),
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            hidden: self.hidden.clone().unwrap_or(d.hidden),
            head_hidden: self.head_hidden.clone().unwrap_or(d.head_hidden),
            normalization,
            zero_final: false,
            pair_budget: self.pair_budget,
            seed,
        }
    }

    pub fn fairnf(&self, variant: FlowVariant, task: Task, pivot: usize, seed: u64) -> FairNfConfig {
        let d = FairNfConfig::default();
        FairNfConfig {
            variant,
            gamma: self.gamma.unwrap_or(d.gamma),
            pivot,
            task,
            layers: self.layers.unwrap_or(d.layers),
            hidden: self.hidden.clone().unwrap_or(d.hidden),
            predictor_hidden: self.head_hidden.clone().unwrap_or(d.predictor_hidden),
            lr: self.lr.unwrap_or(d.lr),
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            zero_init: true,
            flows_only: false,
            pair_budget: self.pair_budget,
            seed,
        }
    }
}

/// Range of a real hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RealDim {
    Choice(Vec<f64>),
    Uniform { min: f64, max: f64 },
    LogUniform { min: f64, max: f64 },
}

impl RealDim {
    fn validate(&self, name: &str) -> Result<()> {
        let ok = match self {
            RealDim::Choice(v) => !v.is_empty() && v.iter().all(|x| x.is_finite()),
            RealDim::Uniform { min, max } => min.is_finite() && max.is_finite() && min <= max,
            RealDim::LogUniform { min, max } => *min > 0.0 && max.is_finite() && min <= max,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid search range for {name}")))
        }
    }

    fn sample(&self, rng: &mut Rng) -> f64 {
        match self {
            RealDim::Choice(v) => v[rng.random_range(0..v.len())],
            RealDim::Uniform { min, max } => min + (max - min) * rng.random::<f64>(),
            RealDim::LogUniform { min, max } => {
                (min.ln() + (max.ln() - min.ln()) * rng.random::<f64>()).exp()
            }
        }
    }
}

/// Dimensions to sample; fields left out stay at the base values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<RealDim>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<RealDim>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<RealDim>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<Vec<usize>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<usize>>,
}

impl SearchSpace {
    pub fn is_empty(&self) -> bool {
        self.lambda.is_none()
            && self.gamma.is_none()
            && self.lr.is_none()
            && self.epochs.is_none()
            && self.hidden.is_none()
            && self.layers.is_none()
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Config("empty search space".into()));
        }
        for (name, dim) in [("lambda", &self.lambda), ("gamma", &self.gamma), ("lr", &self.lr)] {
            if let Some(d) = dim {
                d.validate(name)?;
            }
        }
        if self.epochs.as_ref().is_some_and(Vec::is_empty)
            || self.hidden.as_ref().is_some_and(Vec::is_empty)
            || self.layers.as_ref().is_some_and(Vec::is_empty)
        {
            return Err(Error::Config("search choices must not be empty".into()));
        }
        Ok(())
    }

    /// One draw, overriding the sampled fields of `base`. Dimensions are
    /// drawn in a fixed order so a seed fixes the whole sequence.
    pub fn sample(&self, base: &HyperParams, rng: &mut Rng) -> HyperParams {
        let mut hp = base.clone();
        if let Some(d) = &self.lambda {
            hp.lambda = Some(d.sample(rng));
        }
        if let Some(d) = &self.gamma {
            hp.gamma = Some(d.sample(rng));
        }
        if let Some(d) = &self.lr {
            hp.lr = Some(d.sample(rng));
        }
        if let Some(v) = &self.epochs {
            hp.epochs = Some(v[rng.random_range(0..v.len())]);
        }
        if let Some(v) = &self.hidden {
            hp.hidden = Some(v[rng.random_range(0..v.len())].clone());
        }
        if let Some(v) = &self.layers {
            hp.layers = Some(v[rng.random_range(0..v.len())]);
        }
        hp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    #[serde(default = "default_budget")]
    pub budget: usize,
    pub space: SearchSpace,
}

fn default_budget() -> usize {
    30
}

fn default_folds() -> usize {
    3
}

fn default_k() -> usize {
    10
}

fn default_threshold() -> f64 {
    0.5
}

fn default_protected() -> usize {
    1
}

fn default_norm() -> NormKind {
    NormKind::Standard
}

/// Fairness objective maximized during selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "1-rnd")]
    OneMinusRnd,
    #[serde(rename = "1-audc")]
    OneMinusAudc,
}

impl Objective {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Rank => Objective::OneMinusRnd,
            Task::Cls => Objective::OneMinusAudc,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Objective::OneMinusRnd => "1-rnd",
            Objective::OneMinusAudc => "1-audc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub model: ModelKind,
    pub task: Task,
    /// Normalization of non-categorical columns whose schema entry says
    /// `none`; also selects the explicit extractor's final activation.
    #[serde(default = "default_norm")]
    pub normalization: NormKind,
    #[serde(default)]
    pub params: HyperParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_folds")]
    pub internal_folds: usize,
    #[serde(default = "default_folds")]
    pub external_folds: usize,
    /// Must match the task when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<Objective>,
    #[serde(default = "default_k")]
    pub ndcg_k: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Group treated as protected by rND.
    #[serde(default = "default_protected")]
    pub protected: usize,
    /// Flow pivot group.
    #[serde(default)]
    pub pivot: usize,
}

impl ExperimentConfig {
    pub fn new(data: DataSource, model: ModelKind, task: Task) -> Self {
        ExperimentConfig {
            data,
            model,
            task,
            normalization: default_norm(),
            params: HyperParams::default(),
            search: None,
            seed: 0,
            internal_folds: default_folds(),
            external_folds: default_folds(),
            objective: None,
            ndcg_k: default_k(),
            threshold: default_threshold(),
            protected: default_protected(),
            pivot: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn objective(&self) -> Objective {
        Objective::for_task(self.task)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(o) = self.objective {
            if o != self.objective() {
                return Err(Error::Config(format!(
                    "objective {} does not match the {:?} task",
                    o.name(),
                    self.task
                )));
            }
        }
        match (self.model, self.task) {
            (ModelKind::Advcls, Task::Rank) | (ModelKind::Advdr, Task::Cls) => {
                return Err(Error::Config(format!(
                    "{} cannot serve a {:?} task",
                    self.model.name(),
                    self.task
                )))
            }
            _ => {}
        }
        if self.internal_folds < 2 || self.external_folds < 2 {
            return Err(Error::Config("fold counts must be at least 2".into()));
        }
        if self.ndcg_k == 0 {
            return Err(Error::Config("ndcg_k must be >= 1".into()));
        }
        if let Some(s) = &self.search {
            if s.budget == 0 {
                return Err(Error::Config("search budget must be >= 1".into()));
            }
            s.space.validate()?;
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        hex::encode(&digest[..8])
    }
}
