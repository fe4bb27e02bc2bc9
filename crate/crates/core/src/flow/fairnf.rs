use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::coupling::{alternating_layouts, nll_node, FlowStack, LayerLayout};
use crate::autodiff::{AdamConfig, AdamState, Binding, Graph, ParamId, ParamStore, Tensor, Var};
use crate::checkpoint::Checkpoint;
use crate::data::{Dataset, Pair};
use crate::error::{Error, Result};
use crate::nn::{Activation, Linear, Mlp};
use crate::rng::{derive_seed, seeded};
use crate::{Corrector, Task};

const CHECKPOINT_KIND: &str = "fairnf";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowVariant {
    /// `f_p^-1 o f_all`.
    Base,
    /// First latent coordinate zeroed between the two flows.
    Fpr,
    /// As `Fpr`, with a logistic read-out pushing `s` into that coordinate.
    Bce,
}

impl FlowVariant {
    pub fn projects(self) -> bool {
        self != FlowVariant::Base
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairNfArch {
    pub dim: usize,
    pub layers: usize,
    pub hidden: Vec<usize>,
    pub variant: FlowVariant,
    pub task: Task,
    pub predictor_hidden: Vec<usize>,
    pub pivot: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairNfDescriptor {
    pub arch: FairNfArch,
    pub f_all: Vec<LayerLayout>,
    pub f_p: Vec<LayerLayout>,
}

#[derive(Debug, Clone, PartialEq)]
enum Predictor {
    Cls(Mlp),
    Rank(Linear),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairNfModel {
    arch: FairNfArch,
    params: ParamStore,
    f_all: FlowStack,
    f_p: FlowStack,
    predictor: Predictor,
    latent: Option<Linear>,
    trained: bool,
}

/// Zeroes the first column.
pub fn project_first(z: &Tensor) -> Tensor {
    let mut out = z.clone();
    let cols = z.cols();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        if i % cols == 0 {
            *v = 0.0;
        }
    }
    out
}

/// `tanh(g(x1) - g(x2))` for per-row scores.
pub fn rank_head_forward(g1: &[f64], g2: &[f64]) -> Vec<f64> {
    g1.iter().zip(g2).map(|(a, b)| (a - b).tanh()).collect()
}

/// Intermediate nodes of the full chain on one input.
#[derive(Debug, Clone, Copy)]
pub struct ChainNodes {
    pub z: Var,
    pub logdet: Var,
    pub projected: Var,
    pub fair: Var,
}

pub fn build_fairnf(arch: FairNfArch, zero_init: bool, seed: u64) -> Result<FairNfModel> {
    let layouts = alternating_layouts(arch.dim, arch.layers, &arch.hidden)?;
    if arch.layers == 0 {
        return Err(Error::Config("a flow needs at least one coupling layer".into()));
    }
    let mut rng = seeded(seed);
    let mut params = ParamStore::new();
    let f_all = FlowStack::new(&mut params, "f_all", layouts.clone(), zero_init, &mut rng)?;
    let f_p = FlowStack::new(&mut params, "f_p", layouts, zero_init, &mut rng)?;
    let predictor = match arch.task {
        Task::Cls => {
            let mut widths = vec![arch.dim];
            widths.extend(&arch.predictor_hidden);
            widths.push(1);
            Predictor::Cls(Mlp::new(
                &mut params,
                "predictor",
                &widths,
                Activation::Tanh,
                Activation::Identity,
                &mut rng,
            ))
        }
        Task::Rank => Predictor::Rank(Linear::new(&mut params, "predictor", arch.dim, 1, &mut rng)),
    };
    let latent = (arch.variant == FlowVariant::Bce)
        .then(|| Linear::new(&mut params, "latent", 1, 1, &mut rng));
    Ok(FairNfModel {
        arch,
        params,
        f_all,
        f_p,
        predictor,
        latent,
        trained: false,
    })
}

impl FairNfModel {
    pub fn arch(&self) -> &FairNfArch {
        &self.arch
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn f_all(&self) -> &FlowStack {
        &self.f_all
    }

    pub fn f_p(&self) -> &FlowStack {
        &self.f_p
    }

    pub fn predictor_param_ids(&self) -> Vec<ParamId> {
        match &self.predictor {
            Predictor::Cls(m) => m.param_ids(),
            Predictor::Rank(l) => vec![l.weight, l.bias],
        }
    }

    pub fn latent_param_ids(&self) -> Vec<ParamId> {
        self.latent.iter().flat_map(|l| [l.weight, l.bias]).collect()
    }

    /// Copies `f_all`'s parameters into `f_p`, making the pair share one
    /// set of weights.
    pub fn share_flow_parameters(&mut self) {
        for (a, p) in self.f_all.param_ids().into_iter().zip(self.f_p.param_ids()) {
            let v = self.params.get(a).clone();
            *self.params.get_mut(p) = v;
        }
    }

    pub fn mark_trained(&mut self) {
        self.trained = true;
    }

    fn check_dim(&self, x: &Tensor) -> Result<()> {
        if x.cols() != self.arch.dim {
            return Err(Error::Contract(format!(
                "flow model over {} features got {}",
                self.arch.dim,
                x.cols()
            )));
        }
        Ok(())
    }

    pub fn forward_chain(&self, g: &mut Graph, p: &Binding, x: Var) -> Result<ChainNodes> {
        let (z, logdet) = self.f_all.forward(g, p, x)?;
        let projected = if self.arch.variant.projects() {
            let mut mask = vec![1.0; self.arch.dim];
            mask[0] = 0.0;
            let m = g.input(Tensor::row_vector(&mask));
            g.mul_row(z, m)?
        } else {
            z
        };
        let fair = self.f_p.inverse(g, p, projected)?;
        Ok(ChainNodes {
            z,
            logdet,
            projected,
            fair,
        })
    }

    fn forward_predictor(&self, g: &mut Graph, p: &Binding, x: Var) -> Result<Var> {
        match &self.predictor {
            Predictor::Cls(m) => m.forward(g, p, x),
            Predictor::Rank(l) => l.forward(g, p, x),
        }
    }

    /// Mapped features `f_p^-1(f_pr(f_all(x)))`, with the projection only
    /// for the projecting variants.
    pub fn fair_transform(&self, x: &Tensor) -> Result<Tensor> {
        self.check_dim(x)?;
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let xi = g.input(x.clone());
        let c = self.forward_chain(&mut g, &p, xi)?;
        Ok(g.value(c.fair).clone())
    }

    /// `fair_transform(x) - x`.
    pub fn implicit_correction(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.correct(x)?.0)
    }

    /// Classification probability or ranking score per row.
    pub fn score(&self, x: &Tensor) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let xi = g.input(x.clone());
        let c = self.forward_chain(&mut g, &p, xi)?;
        let mut out = self.forward_predictor(&mut g, &p, c.fair)?;
        if self.arch.task == Task::Cls {
            out = g.sigmoid(out)?;
        }
        Ok(g.value(out).data().to_vec())
    }

    /// The first latent coordinate of `f_all`, passed through the latent
    /// read-out when the model has one.
    pub fn latent_scores(&self, x: &Tensor) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let xi = g.input(x.clone());
        let (z, _) = self.f_all.forward(&mut g, &p, xi)?;
        let mut z1 = g.slice_cols(z, 0, 1)?;
        if let Some(l) = &self.latent {
            z1 = l.forward(&mut g, &p, z1)?;
        }
        Ok(g.value(z1).data().to_vec())
    }

    fn latent_targets(&self, s: &[usize]) -> Vec<f64> {
        s.iter().map(|&v| f64::from(u8::from(v != self.arch.pivot))).collect()
    }

    /// All loss terms for rows `x` with groups `s`. Task losses are added by
    /// the caller because they depend on the predictor kind.
    fn flow_terms(
        &self,
        g: &mut Graph,
        p: &Binding,
        x: &Tensor,
        s: &[usize],
    ) -> Result<(ChainNodes, FlowTerms)> {
        let xi = g.input(x.clone());
        let chain = self.forward_chain(g, p, xi)?;
        let nll_all = nll_node(g, chain.z, chain.logdet)?;

        let pivot_rows: Vec<usize> = (0..s.len()).filter(|&i| s[i] == self.arch.pivot).collect();
        let nll_pivot = if pivot_rows.is_empty() {
            None
        } else {
            let xp = g.input(x.select_rows(&pivot_rows));
            let (zp, ldp) = self.f_p.forward(g, p, xp)?;
            Some(nll_node(g, zp, ldp)?)
        };

        let latent_bce = match &self.latent {
            Some(l) => {
                let z1 = g.slice_cols(chain.z, 0, 1)?;
                let logit = l.forward(g, p, z1)?;
                Some(g.bce_with_logits(logit, &self.latent_targets(s))?)
            }
            None => None,
        };
        Ok((
            chain,
            FlowTerms {
                nll_all,
                nll_pivot,
                latent_bce,
            },
        ))
    }

    pub fn to_checkpoint(&self) -> Checkpoint<FairNfDescriptor> {
        Checkpoint::new(
            CHECKPOINT_KIND,
            FairNfDescriptor {
                arch: self.arch.clone(),
                f_all: self.f_all.layouts(),
                f_p: self.f_p.layouts(),
            },
            &self.params,
        )
    }

    pub fn from_checkpoint(c: &Checkpoint<FairNfDescriptor>) -> Result<Self> {
        let mut model = build_fairnf(c.architecture.arch.clone(), false, 0)?;
        if model.f_all.layouts() != c.architecture.f_all || model.f_p.layouts() != c.architecture.f_p {
            return Err(Error::Contract("flow layout does not match the architecture".into()));
        }
        let stored = crate::checkpoint::load_params(&c.params)?;
        if stored.len() != model.params.len() {
            return Err(Error::Contract(format!(
                "checkpoint has {} tensors, architecture needs {}",
                stored.len(),
                model.params.len()
            )));
        }
        model.params.load_from(&stored)?;
        model.trained = true;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path, CHECKPOINT_KIND)?)
    }
}

impl Corrector for FairNfModel {
    fn correct(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let fair = self.fair_transform(x)?;
        Ok((fair.sub(x), fair))
    }

    fn is_trained(&self) -> bool {
        self.trained
    }
}

struct FlowTerms {
    nll_all: Var,
    nll_pivot: Option<Var>,
    latent_bce: Option<Var>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FairNfConfig {
    pub variant: FlowVariant,
    /// Weight of the flow likelihood terms against the task loss.
    pub gamma: f64,
    pub pivot: usize,
    pub task: Task,
    pub layers: usize,
    pub hidden: Vec<usize>,
    pub predictor_hidden: Vec<usize>,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Start both flows at the identity.
    pub zero_init: bool,
    /// Drop the task loss and train only the flows.
    pub flows_only: bool,
    pub pair_budget: Option<usize>,
    pub seed: u64,
}

impl Default for FairNfConfig {
    fn default() -> Self {
        FairNfConfig {
            variant: FlowVariant::Base,
            gamma: 1.0,
            pivot: 0,
            task: Task::Cls,
            layers: 8,
            hidden: vec![16],
            predictor_hidden: vec![16],
            lr: 1e-3,
            epochs: 30,
            batch_size: 128,
            zero_init: true,
            flows_only: false,
            pair_budget: None,
            seed: 0,
        }
    }
}

impl FairNfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::Config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.layers == 0 {
            return Err(Error::Config("epochs, batch size and layers must be >= 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", self.lr)));
        }
        Ok(())
    }

    pub fn arch(&self, dim: usize) -> FairNfArch {
        FairNfArch {
            dim,
            layers: self.layers,
            hidden: self.hidden.clone(),
            variant: self.variant,
            task: self.task,
            predictor_hidden: self.predictor_hidden.clone(),
            pivot: self.pivot,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowEpochStats {
    pub epoch: usize,
    pub nll_all: f64,
    pub nll_pivot: f64,
    pub task_loss: f64,
    pub latent_bce: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowTrace {
    pub epochs: Vec<FlowEpochStats>,
}

/// Scalar loss nodes of one training step.
#[derive(Debug, Clone, Copy)]
pub struct StepLosses {
    pub total: Var,
    pub nll_all: Var,
    pub nll_pivot: Option<Var>,
    pub task: Option<Var>,
    pub latent_bce: Option<Var>,
}

fn weighted_sum(g: &mut Graph, gamma: f64, flow: &[Var], task: Option<Var>) -> Result<Var> {
    let mut acc = flow[0];
    for &v in &flow[1..] {
        acc = g.add(acc, v)?;
    }
    let acc = g.scale(acc, gamma)?;
    match task {
        Some(t) => g.add(acc, t),
        None => Ok(acc),
    }
}

/// Training data for one step.
#[derive(Debug, Clone)]
pub enum FlowBatch {
    Rows { x: Tensor, y: Vec<f64>, s: Vec<usize> },
    Pairs { x1: Tensor, x2: Tensor, dy: Vec<f64>, s1: Vec<usize>, s2: Vec<usize> },
}

impl FlowBatch {
    pub fn rows(ds: &Dataset, idx: &[usize]) -> Self {
        FlowBatch::Rows {
            x: ds.x.select_rows(idx),
            y: idx.iter().map(|&i| ds.y[i]).collect(),
            s: idx.iter().map(|&i| ds.s[i]).collect(),
        }
    }

    pub fn pairs(ds: &Dataset, pairs: &[Pair]) -> Self {
        let i: Vec<usize> = pairs.iter().map(|p| p.i).collect();
        let j: Vec<usize> = pairs.iter().map(|p| p.j).collect();
        FlowBatch::Pairs {
            x1: ds.x.select_rows(&i),
            x2: ds.x.select_rows(&j),
            dy: pairs.iter().map(|p| p.label).collect(),
            s1: i.iter().map(|&r| ds.s[r]).collect(),
            s2: j.iter().map(|&r| ds.s[r]).collect(),
        }
    }
}

impl FairNfModel {
    /// Builds `gamma * (NLL_all + NLL_p + BCE_latent) + L_y` for a batch.
    /// With `with_task = false` the task term is left out.
    pub fn step_losses(
        &self,
        g: &mut Graph,
        p: &Binding,
        batch: &FlowBatch,
        gamma: f64,
        with_task: bool,
    ) -> Result<StepLosses> {
        match batch {
            FlowBatch::Rows { x, y, s } => {
                let (chain, t) = self.flow_terms(g, p, x, s)?;
                let task = if with_task {
                    let logit = self.forward_predictor(g, p, chain.fair)?;
                    Some(match self.arch.task {
                        Task::Cls => g.bce_with_logits(logit, y)?,
                        Task::Rank => {
                            return Err(Error::Config("ranking models train on pairs".into()))
                        }
                    })
                } else {
                    None
                };
                let flow: Vec<Var> = [Some(t.nll_all), t.nll_pivot, t.latent_bce].into_iter().flatten().collect();
                let total = weighted_sum(g, gamma, &flow, task)?;
                Ok(StepLosses {
                    total,
                    nll_all: t.nll_all,
                    nll_pivot: t.nll_pivot,
                    task,
                    latent_bce: t.latent_bce,
                })
            }
            FlowBatch::Pairs { x1, x2, dy, s1, s2 } => {
                if self.arch.task != Task::Rank {
                    return Err(Error::Config("pair batches need a ranking model".into()));
                }
                let (ca, ta) = self.flow_terms(g, p, x1, s1)?;
                let (cb, tb) = self.flow_terms(g, p, x2, s2)?;
                let avg = |g: &mut Graph, a: Option<Var>, b: Option<Var>| -> Result<Option<Var>> {
                    Ok(match (a, b) {
                        (Some(a), Some(b)) => {
                            let s = g.add(a, b)?;
                            Some(g.scale(s, 0.5)?)
                        }
                        (a, b) => a.or(b),
                    })
                };
                let nll_all = avg(g, Some(ta.nll_all), Some(tb.nll_all))?.expect("both present");
                let nll_pivot = avg(g, ta.nll_pivot, tb.nll_pivot)?;
                let latent_bce = avg(g, ta.latent_bce, tb.latent_bce)?;
                let task = if with_task {
                    let ga = self.forward_predictor(g, p, ca.fair)?;
                    let gb = self.forward_predictor(g, p, cb.fair)?;
                    let diff = g.sub(ga, gb)?;
                    let f = g.tanh(diff)?;
                    let target: Vec<f64> = dy.iter().map(|d| 2.0 * d - 1.0).collect();
                    let t = g.input(Tensor::column(&target));
                    let e = g.sub(f, t)?;
                    let sq = g.square(e)?;
                    Some(g.mean(sq)?)
                } else {
                    None
                };
                let flow: Vec<Var> = [Some(nll_all), nll_pivot, latent_bce].into_iter().flatten().collect();
                let total = weighted_sum(g, gamma, &flow, task)?;
                Ok(StepLosses {
                    total,
                    nll_all,
                    nll_pivot,
                    task,
                    latent_bce,
                })
            }
        }
    }
}

fn as_training(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Numeric { what } => Error::Training { epoch, detail: what },
        other => other,
    }
}

fn fit(
    model: &mut FairNfModel,
    cfg: &FairNfConfig,
    n_items: usize,
    make_batch: impl Fn(&[usize]) -> FlowBatch,
) -> Result<FlowTrace> {
    let mut adam = AdamState::new(&model.params, AdamConfig::default());
    let mut rng = seeded(derive_seed(cfg.seed, 1));
    let mut order: Vec<usize> = (0..n_items).collect();
    let mut trace = FlowTrace::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0; 4];
        let mut counts = [0usize; 4];
        for chunk in order.chunks(cfg.batch_size) {
            let batch = make_batch(chunk);
            let mut g = Graph::new();
            let p = model.params.bind(&mut g);
            let l = model
                .step_losses(&mut g, &p, &batch, cfg.gamma, !cfg.flows_only)
                .map_err(as_training(epoch))?;
            let grads = g.backward(l.total).map_err(as_training(epoch))?;
            let grads = model.params.collect_grads(&grads, &p);
            adam.step(&mut model.params, &grads, cfg.lr)
                .map_err(as_training(epoch))?;
            for (k, v) in [Some(l.nll_all), l.nll_pivot, l.task, l.latent_bce].into_iter().enumerate() {
                if let Some(v) = v {
                    sums[k] += g.scalar(v);
                    counts[k] += 1;
                }
            }
        }
        let mean = |k: usize| if counts[k] == 0 { 0.0 } else { sums[k] / counts[k] as f64 };
        trace.epochs.push(FlowEpochStats {
            epoch,
            nll_all: mean(0),
            nll_pivot: mean(1),
            task_loss: mean(2),
            latent_bce: mean(3),
        });
    }
    model.trained = true;
    Ok(trace)
}

/// Trains a FairNF model on the continuous features of `ds`. Ranking
/// models draw pairs from `ds` with the configured budget.
pub fn train_fairnf(ds: &Dataset, cfg: &FairNfConfig) -> Result<(FairNfModel, FlowTrace)> {
    cfg.validate()?;
    if ds.n_rows() == 0 {
        return Err(Error::Config("empty training set".into()));
    }
    if !ds.s.contains(&cfg.pivot) {
        return Err(Error::Config(format!("pivot group {} has no rows", cfg.pivot)));
    }
    let mut model = build_fairnf(cfg.arch(ds.n_features()), cfg.zero_init, cfg.seed)?;
    let trace = match cfg.task {
        Task::Cls => {
            if let Some(v) = ds.y.iter().find(|&&v| v != 0.0 && v != 1.0) {
                return Err(Error::Contract(format!("classification target {v} is not 0 or 1")));
            }
            fit(&mut model, cfg, ds.n_rows(), |idx| FlowBatch::rows(ds, idx))?
        }
        Task::Rank => {
            let pairs = crate::data::make_pairs(ds, cfg.pair_budget, derive_seed(cfg.seed, 2));
            if pairs.is_empty() {
                return Err(Error::Config("no training pairs".into()));
            }
            fit(&mut model, cfg, pairs.len(), |idx| {
                let chosen: Vec<Pair> = idx.iter().map(|&i| pairs[i]).collect();
                FlowBatch::pairs(ds, &chosen)
            })?
        }
    };
    Ok((model, trace))
}
