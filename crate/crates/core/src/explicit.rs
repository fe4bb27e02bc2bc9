//! Explicit correction vectors: a width-preserving extractor `w = f(x)`
//! added back onto its input, trained against an adversary that sees the
//! corrected features through gradient reversal.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, AdamState, Binding, Graph, ParamId, ParamStore, Tensor, Var};
use crate::checkpoint::Checkpoint;
use crate::data::{Dataset, NormKind, Pair};
use crate::error::{Error, Result};
use crate::nn::{Activation, Linear, Mlp};
use crate::rng::{derive_seed, seeded};
use crate::{Corrector, Task};

const CHECKPOINT_KIND: &str = "explicit";

/// Everything needed to rebuild an [`ExplicitModel`] without its weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplicitArch {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub head_hidden: Vec<usize>,
    pub normalization: NormKind,
    pub task: Task,
    pub n_groups: usize,
}

impl ExplicitArch {
    pub fn adversary_width(&self) -> usize {
        self.input_dim.max(8)
    }

    fn adversary_outputs(&self) -> usize {
        if self.n_groups <= 2 {
            1
        } else {
            self.n_groups
        }
    }

    fn final_activation(&self) -> Result<Activation> {
        match self.normalization {
            NormKind::Standard => Ok(Activation::Tanh),
            NormKind::MinMax => Ok(Activation::ShiftedSigmoid),
            NormKind::None => Err(Error::Config(
                "explicit corrections need standard or minmax normalized inputs".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Head {
    Cls(Mlp),
    Rank(Linear),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitModel {
    arch: ExplicitArch,
    params: ParamStore,
    extractor: Mlp,
    adversary: Mlp,
    head: Head,
    trained: bool,
}

/// Minibatch for a single loss evaluation.
#[derive(Debug, Clone)]
pub enum Batch {
    Rows {
        x: Tensor,
        y: Vec<f64>,
        s: Vec<usize>,
    },
    Pairs {
        x1: Tensor,
        x2: Tensor,
        /// Pair labels in `{0, 1}`.
        dy: Vec<f64>,
        s1: Vec<usize>,
        s2: Vec<usize>,
    },
}

impl Batch {
    pub fn rows(ds: &Dataset, idx: &[usize]) -> Self {
        Batch::Rows {
            x: ds.x.select_rows(idx),
            y: idx.iter().map(|&i| ds.y[i]).collect(),
            s: idx.iter().map(|&i| ds.s[i]).collect(),
        }
    }

    pub fn pairs(ds: &Dataset, pairs: &[Pair]) -> Self {
        let i: Vec<usize> = pairs.iter().map(|p| p.i).collect();
        let j: Vec<usize> = pairs.iter().map(|p| p.j).collect();
        Batch::Pairs {
            x1: ds.x.select_rows(&i),
            x2: ds.x.select_rows(&j),
            dy: pairs.iter().map(|p| p.label).collect(),
            s1: i.iter().map(|&r| ds.s[r]).collect(),
            s2: j.iter().map(|&r| ds.s[r]).collect(),
        }
    }
}

/// Loss nodes of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct LossNodes {
    pub total: Var,
    pub task: Var,
    pub adversary: Var,
}

/// Builds a model for `input_dim` features. With `zero_final` the last
/// extractor layer starts at zero, so the initial correction is exactly 0.
pub fn build_explicit(arch: ExplicitArch, zero_final: bool, seed: u64) -> Result<ExplicitModel> {
    if arch.input_dim == 0 {
        return Err(Error::Config("input dimension must be >= 1".into()));
    }
    if arch.n_groups < 2 {
        return Err(Error::Config("need at least two sensitive groups".into()));
    }
    let act = arch.final_activation()?;
    let d = arch.input_dim;
    let mut rng = seeded(seed);
    let mut params = ParamStore::new();

    let mut widths = vec![d];
    widths.extend(&arch.hidden);
    widths.push(d);
    let extractor = Mlp::new(&mut params, "extractor", &widths, Activation::Tanh, act, &mut rng);
    if zero_final {
        extractor.last().zero(&mut params);
    }

    let adversary = Mlp::new(
        &mut params,
        "adversary",
        &[d, arch.adversary_width(), arch.adversary_outputs()],
        Activation::Tanh,
        Activation::Identity,
        &mut rng,
    );

    let head = match arch.task {
        Task::Cls => {
            let mut widths = vec![d];
            widths.extend(&arch.head_hidden);
            widths.push(1);
            Head::Cls(Mlp::new(
                &mut params,
                "head",
                &widths,
                Activation::Tanh,
                Activation::Identity,
                &mut rng,
            ))
        }
        Task::Rank => Head::Rank(Linear::new(&mut params, "head", d, 1, &mut rng)),
    };

    Ok(ExplicitModel {
        arch,
        params,
        extractor,
        adversary,
        head,
        trained: false,
    })
}

/// `tanh(g(x1) - g(x2))` for per-row scores `g1`, `g2` (both `n x 1`).
pub fn rank_pair_output(g: &mut Graph, g1: Var, g2: Var) -> Result<Var> {
    let diff = g.sub(g1, g2)?;
    g.tanh(diff)
}

impl ExplicitModel {
    pub fn arch(&self) -> &ExplicitArch {
        &self.arch
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn extractor_param_ids(&self) -> Vec<ParamId> {
        self.extractor.param_ids()
    }

    pub fn adversary_param_ids(&self) -> Vec<ParamId> {
        self.adversary.param_ids()
    }

    pub fn head_param_ids(&self) -> Vec<ParamId> {
        match &self.head {
            Head::Cls(m) => m.param_ids(),
            Head::Rank(l) => vec![l.weight, l.bias],
        }
    }

    pub fn mark_trained(&mut self) {
        self.trained = true;
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.cols() != self.arch.input_dim {
            return Err(Error::Contract(format!(
                "model expects {} features, got {}",
                self.arch.input_dim,
                x.cols()
            )));
        }
        let (lo, hi) = match self.arch.normalization {
            NormKind::MinMax => (-1.0, 2.0),
            _ => (-100.0, 100.0),
        };
        if let Some(v) = x.data().iter().find(|v| !(lo..=hi).contains(*v)) {
            return Err(Error::Contract(format!(
                "input value {v} outside [{lo}, {hi}]; is the data normalized?"
            )));
        }
        Ok(())
    }

    /// `(w, z)` with `z = x + w`.
    pub fn forward_correction(&self, g: &mut Graph, p: &Binding, x: Var) -> Result<(Var, Var)> {
        let w = self.extractor.forward(g, p, x)?;
        let z = g.add(x, w)?;
        Ok((w, z))
    }

    /// Head output on corrected features: a logit for classification, the
    /// scalar score `g(z)` for ranking.
    pub fn forward_head(&self, g: &mut Graph, p: &Binding, z: Var) -> Result<Var> {
        match &self.head {
            Head::Cls(m) => m.forward(g, p, z),
            Head::Rank(l) => l.forward(g, p, z),
        }
    }

    /// Adversary logits on `z` after a gradient-reversal node of strength
    /// `lambda`. `lambda = 0` detaches `z`; `None` wires `z` straight in.
    pub fn forward_adversary(
        &self,
        g: &mut Graph,
        p: &Binding,
        z: Var,
        lambda: Option<f64>,
    ) -> Result<Var> {
        let input = match lambda {
            None => z,
            Some(0.0) => g.detach(z)?,
            Some(l) => g.grad_reverse(z, l)?,
        };
        self.adversary.forward(g, p, input)
    }

    fn adversary_loss(&self, g: &mut Graph, logits: Var, s: &[usize]) -> Result<Var> {
        if self.arch.n_groups <= 2 {
            let t: Vec<f64> = s.iter().map(|&v| f64::from(u8::from(v != 0))).collect();
            g.bce_with_logits(logits, &t)
        } else {
            g.softmax_xent(logits, s)
        }
    }

    /// Task loss plus adversary loss for one batch.
    pub fn batch_loss(
        &self,
        g: &mut Graph,
        p: &Binding,
        batch: &Batch,
        lambda: Option<f64>,
    ) -> Result<LossNodes> {
        match batch {
            Batch::Rows { x, y, s } => {
                let xi = g.input(x.clone());
                let (_, z) = self.forward_correction(g, p, xi)?;
                let logit = self.forward_head(g, p, z)?;
                let task = g.bce_with_logits(logit, y)?;
                let adv = self.forward_adversary(g, p, z, lambda)?;
                let adversary = self.adversary_loss(g, adv, s)?;
                let total = g.add(task, adversary)?;
                Ok(LossNodes {
                    total,
                    task,
                    adversary,
                })
            }
            Batch::Pairs { x1, x2, dy, s1, s2 } => {
                let a = g.input(x1.clone());
                let b = g.input(x2.clone());
                let (_, za) = self.forward_correction(g, p, a)?;
                let (_, zb) = self.forward_correction(g, p, b)?;
                let ga = self.forward_head(g, p, za)?;
                let gb = self.forward_head(g, p, zb)?;
                let f = rank_pair_output(g, ga, gb)?;
                let target: Vec<f64> = dy.iter().map(|d| 2.0 * d - 1.0).collect();
                let t = g.input(Tensor::column(&target));
                let diff = g.sub(f, t)?;
                let sq = g.square(diff)?;
                let task = g.mean(sq)?;
                let z = g.concat_rows(&[za, zb])?;
                let adv = self.forward_adversary(g, p, z, lambda)?;
                let s: Vec<usize> = s1.iter().chain(s2).copied().collect();
                let adversary = self.adversary_loss(g, adv, &s)?;
                let total = g.add(task, adversary)?;
                Ok(LossNodes {
                    total,
                    task,
                    adversary,
                })
            }
        }
    }

    /// Gradients of the batch loss for every parameter, in store order.
    pub fn gradients(&self, batch: &Batch, lambda: Option<f64>) -> Result<Vec<Tensor>> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let loss = self.batch_loss(&mut g, &p, batch, lambda)?;
        let grads = g.backward(loss.total)?;
        Ok(self.params.collect_grads(&grads, &p))
    }

    /// Gradients of the adversary loss alone, in store order.
    pub fn adversary_gradients(
        &self,
        x: &Tensor,
        s: &[usize],
        lambda: Option<f64>,
    ) -> Result<Vec<Tensor>> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let xi = g.input(x.clone());
        let (_, z) = self.forward_correction(&mut g, &p, xi)?;
        let logits = self.forward_adversary(&mut g, &p, z, lambda)?;
        let loss = self.adversary_loss(&mut g, logits, s)?;
        let grads = g.backward(loss)?;
        Ok(self.params.collect_grads(&grads, &p))
    }

    /// Classification probability or ranking score per row.
    pub fn score(&self, x: &Tensor) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let xi = g.input(x.clone());
        let (_, z) = self.forward_correction(&mut g, &p, xi)?;
        let mut out = self.forward_head(&mut g, &p, z)?;
        if self.arch.task == Task::Cls {
            out = g.sigmoid(out)?;
        }
        Ok(g.value(out).data().to_vec())
    }

    /// Pair output `tanh(g(z1) - g(z2))` for ranking models.
    pub fn pair_scores(&self, x1: &Tensor, x2: &Tensor) -> Result<Vec<f64>> {
        if self.arch.task != Task::Rank {
            return Err(Error::Config("pair scores need a ranking model".into()));
        }
        let s1 = self.score(x1)?;
        let s2 = self.score(x2)?;
        Ok(s1.iter().zip(&s2).map(|(a, b)| (a - b).tanh()).collect())
    }

    /// Adversary probabilities: `n x 1` for binary groups, softmax rows
    /// otherwise.
    fn adversary_predictions(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let xi = g.input(x.clone());
        let (_, z) = self.forward_correction(&mut g, &p, xi)?;
        let logits = self.forward_adversary(&mut g, &p, z, None)?;
        Ok(g.value(logits).clone())
    }

    pub fn to_checkpoint(&self) -> Checkpoint<ExplicitArch> {
        Checkpoint::new(CHECKPOINT_KIND, self.arch.clone(), &self.params)
    }

    pub fn from_checkpoint(c: &Checkpoint<ExplicitArch>) -> Result<Self> {
        let mut model = build_explicit(c.architecture.clone(), false, 0)?;
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

impl Corrector for ExplicitModel {
    fn correct(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        self.check_input(x)?;
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let xi = g.input(x.clone());
        let (w, z) = self.forward_correction(&mut g, &p, xi)?;
        Ok((g.value(w).clone(), g.value(z).clone()))
    }

    fn is_trained(&self) -> bool {
        self.trained
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplicitTrainConfig {
    /// Gradient-reversal strength on the adversary branch.
    pub lambda: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub head_hidden: Vec<usize>,
    pub normalization: NormKind,
    /// Start from the identity correction.
    pub zero_final: bool,
    /// Pair budget for ranking; `None` uses 20 pairs per row.
    pub pair_budget: Option<usize>,
    pub seed: u64,
}

impl Default for ExplicitTrainConfig {
    fn default() -> Self {
        ExplicitTrainConfig {
            lambda: 1.0,
            lr: 5e-3,
            epochs: 40,
            batch_size: 64,
            hidden: vec![16],
            head_hidden: vec![16],
            normalization: NormKind::Standard,
            zero_final: false,
            pair_budget: None,
            seed: 0,
        }
    }
}

impl ExplicitTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", self.lr)));
        }
        Ok(())
    }

    fn arch(&self, ds: &Dataset, task: Task) -> ExplicitArch {
        ExplicitArch {
            input_dim: ds.n_features(),
            hidden: self.hidden.clone(),
            head_hidden: self.head_hidden.clone(),
            normalization: self.normalization,
            task,
            n_groups: ds.n_groups().max(2),
        }
    }
}

/// Mean losses over one epoch's minibatches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub task_loss: f64,
    pub adversary_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochStats>,
}

fn as_training(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Numeric { what } => Error::Training { epoch, detail: what },
        other => other,
    }
}

fn fit(
    model: &mut ExplicitModel,
    cfg: &ExplicitTrainConfig,
    n_items: usize,
    make_batch: impl Fn(&[usize]) -> Batch,
) -> Result<TrainTrace> {
    let mut adam = AdamState::new(&model.params, AdamConfig::default());
    let mut rng = seeded(derive_seed(cfg.seed, 1));
    let mut order: Vec<usize> = (0..n_items).collect();
    let mut trace = TrainTrace::default();
    let lambda = Some(cfg.lambda);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut task_sum, mut adv_sum, mut batches) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = make_batch(chunk);
            let mut g = Graph::new();
            let p = model.params.bind(&mut g);
            let loss = model
                .batch_loss(&mut g, &p, &batch, lambda)
                .map_err(as_training(epoch))?;
            let grads = g.backward(loss.total).map_err(as_training(epoch))?;
            let grads = model.params.collect_grads(&grads, &p);
            adam.step(&mut model.params, &grads, cfg.lr)
                .map_err(as_training(epoch))?;
            task_sum += g.scalar(loss.task);
            adv_sum += g.scalar(loss.adversary);
            batches += 1;
        }
        trace.epochs.push(EpochStats {
            epoch,
            task_loss: task_sum / batches as f64,
            adversary_loss: adv_sum / batches as f64,
        });
    }
    model.trained = true;
    Ok(trace)
}

/// Adversarial classifier on a normalized dataset with binary `y`.
pub fn train_advcls(ds: &Dataset, cfg: &ExplicitTrainConfig) -> Result<(ExplicitModel, TrainTrace)> {
    cfg.validate()?;
    if ds.n_rows() == 0 {
        return Err(Error::Config("empty training set".into()));
    }
    if let Some(v) = ds.y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::Contract(format!("classification target {v} is not 0 or 1")));
    }
    let mut model = build_explicit(cfg.arch(ds, Task::Cls), cfg.zero_final, cfg.seed)?;
    model.check_input(&ds.x)?;
    let trace = fit(&mut model, cfg, ds.n_rows(), |idx| Batch::rows(ds, idx))?;
    Ok((model, trace))
}

/// Adversarial pairwise ranker trained on `pairs` drawn from `ds`.
pub fn train_advdr(
    ds: &Dataset,
    pairs: &[Pair],
    cfg: &ExplicitTrainConfig,
) -> Result<(ExplicitModel, TrainTrace)> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::Config("no training pairs".into()));
    }
    let mut model = build_explicit(cfg.arch(ds, Task::Rank), cfg.zero_final, cfg.seed)?;
    model.check_input(&ds.x)?;
    let trace = fit(&mut model, cfg, pairs.len(), |idx| {
        let chosen: Vec<Pair> = idx.iter().map(|&i| pairs[i]).collect();
        Batch::pairs(ds, &chosen)
    })?;
    Ok((model, trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdversaryProbe {
    pub loss: f64,
    pub accuracy: f64,
}

/// The model's own adversary evaluated on `ds`: cross-entropy and
/// accuracy at recovering `s` from the corrected features.
pub fn adversary_probe_loss(model: &ExplicitModel, ds: &Dataset) -> Result<AdversaryProbe> {
    model.check_input(&ds.x)?;
    let logits = model.adversary_predictions(&ds.x)?;
    let n = ds.n_rows() as f64;
    let (mut loss, mut hits) = (0.0, 0usize);
    if model.arch.n_groups <= 2 {
        for (&l, &s) in logits.data().iter().zip(&ds.s) {
            let t = f64::from(u8::from(s != 0));
            loss += l.max(0.0) - l * t + (-l.abs()).exp().ln_1p();
            hits += usize::from((l > 0.0) == (s != 0));
        }
    } else {
        for (row, &s) in logits.iter_rows().zip(&ds.s) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - row[s];
            let arg = (0..row.len())
                .max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a)))
                .unwrap_or(0);
            hits += usize::from(arg == s);
        }
    }
    Ok(AdversaryProbe {
        loss: loss / n,
        accuracy: hits as f64 / n,
    })
}

#[cfg(test)]
mod tests;
