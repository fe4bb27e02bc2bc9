use super::*;
use crate::autodiff::{Graph, ParamStore, Tensor};
use crate::checkpoint::Checkpoint;
use crate::data::{fit_normalizer, synth_two_gaussians, Dataset, NormKind, SynthConfig, TargetRule};
use crate::error::Error;
use crate::rng::seeded;
use crate::{Corrector, Task};
use proptest::prelude::*;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

fn random_x(n: usize, d: usize, lo: f64, hi: f64, seed: u64) -> Tensor {
    let mut rng = seeded(seed);
    let data = (0..n * d).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(n, d, data).unwrap()
}

fn stack(dim: usize, layers: usize, zero: bool, seed: u64) -> (FlowStack, ParamStore) {
    let mut store = ParamStore::new();
    let mut rng = seeded(seed);
    let layouts = alternating_layouts(dim, layers, &[8]).unwrap();
    let s = FlowStack::new(&mut store, "flow", layouts, zero, &mut rng).unwrap();
    (s, store)
}

/// `log|det J|` of the stack at `row` by central differences and
/// Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
fn numeric_logdet(s: &FlowStack, store: &ParamStore, row: &[f64]) -> f64 {
    let d = row.len();
    let eps = 1e-5;
    let mut jac = vec![vec![0.0; d]; d];
    for j in 0..d {
        let mut plus = row.to_vec();
        plus[j] += eps;
        let mut minus = row.to_vec();
        minus[j] -= eps;
        let fp = s.transform(store, &Tensor::row_vector(&plus)).unwrap().z;
        let fm = s.transform(store, &Tensor::row_vector(&minus)).unwrap().z;
        for i in 0..d {
            jac[i][j] = (fp.data()[i] - fm.data()[i]) / (2.0 * eps);
        }
    }
    let mut logdet = 0.0;
    for c in 0..d {
        let p = (c..d).max_by(|&a, &b| jac[a][c].abs().total_cmp(&jac[b][c].abs())).unwrap();
        jac.swap(c, p);
        let pivot = jac[c][c];
        logdet += pivot.abs().ln();
        for r in c + 1..d {
            let f = jac[r][c] / pivot;
            for k in c..d {
                jac[r][k] -= f * jac[c][k];
            }
        }
    }
    logdet
}

#[test]
fn zero_nets_give_identity_coupling() {
    let (s, store) = stack(3, 1, true, 0);
    let x = random_x(5, 3, -2.0, 2.0, 1);
    let out = s.transform(&store, &x).unwrap();
    assert_eq!(out.z, x);
    assert!(out.logdet.iter().all(|&v| v == 0.0));
    assert_eq!(s.invert(&store, &x).unwrap(), x);
}

#[test]
fn pure_translation_closed_form() {
    let mut store = ParamStore::new();
    let layout = LayerLayout {
        invariant: vec![0],
        transformed: vec![1],
        hidden: vec![],
    };
    let layer = CouplingLayer::new(&mut store, "c", layout, true, &mut seeded(0)).unwrap();
    *store.get_mut(layer.translate.last().weight) = Tensor::scalar(1.0);
    let s = FlowStack::from_layers(vec![layer]).unwrap();
    let out = s.transform(&store, &Tensor::row_vector(&[1.0, 1.0])).unwrap();
    assert_eq!(out.z.data(), &[1.0, 2.0]);
    assert_eq!(out.logdet, vec![0.0]);
    let back = s.invert(&store, &Tensor::row_vector(&[1.0, 2.0])).unwrap();
    assert_eq!(back.data(), &[1.0, 1.0]);
}

#[test]
fn layouts_alternate_and_reject_one_dimension() {
    let l = alternating_layouts(5, 3, &[4]).unwrap();
    assert_eq!(l[0].invariant, vec![0, 1, 2]);
    assert_eq!(l[0].transformed, vec![3, 4]);
    assert_eq!(l[1].invariant, vec![3, 4]);
    assert_eq!(l[2], l[0]);
    assert!(matches!(alternating_layouts(1, 8, &[4]), Err(Error::Config(_))));
}

#[test]
fn analytic_logdet_matches_numeric_jacobian() {
    for seed in 0..6 {
        let dim = 2 + (seed as usize % 5);
        let (s, store) = stack(dim, 4, false, seed);
        let x = random_x(3, dim, -1.5, 1.5, seed + 50);
        let out = s.transform(&store, &x).unwrap();
        for (r, row) in x.iter_rows().enumerate() {
            let want = numeric_logdet(&s, &store, row);
            assert!((out.logdet[r] - want).abs() < 1e-5, "{} vs {want}", out.logdet[r]);
        }
    }
}

#[test]
fn thousand_rows_round_trip() {
    let (s, store) = stack(6, 6, false, 3);
    let x = random_x(1000, 6, -3.0, 3.0, 4);
    let z = s.transform(&store, &x).unwrap().z;
    let back = s.invert(&store, &z).unwrap();
    assert!(back.max_abs_diff(&x) < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stacks_invert(seed in any::<u64>(), dim in 2usize..=16, layers in 1usize..=8) {
        let (s, store) = stack(dim, layers, false, seed);
        let x = random_x(20, dim, -3.0, 3.0, seed ^ 7);
        let out = s.transform(&store, &x).unwrap();
        prop_assert!(s.invert(&store, &out.z).unwrap().max_abs_diff(&x) < 1e-8);
    }

    #[test]
    fn projection_is_idempotent(seed in any::<u64>(), dim in 1usize..8) {
        let z = random_x(6, dim, -3.0, 3.0, seed);
        let once = project_first(&z);
        prop_assert_eq!(project_first(&once), once);
    }
}

#[test]
fn nll_of_identity_stack() {
    let (s, store) = stack(2, 2, true, 0);
    let zero = flow_nll(&s, &store, &Tensor::zeros(1, 2)).unwrap();
    assert_eq!(zero, (2.0 * std::f64::consts::PI).ln());

    let mut rng = seeded(9);
    let data: Vec<f64> = (0..20000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let x = Tensor::new(10000, 2, data).unwrap();
    let nll = flow_nll(&s, &store, &x).unwrap();
    assert!((nll - 2.8379).abs() < 0.1, "{nll}");
}

/// `p(y) = phi(x(y)) * exp(-logdet)` along the transformed coordinate of a
/// layer that scales by a constant `a`.
#[test]
fn scaled_density_integrates_to_one() {
    for a in [0.5f64, 3.0] {
        let mut store = ParamStore::new();
        let layout = LayerLayout {
            invariant: vec![0],
            transformed: vec![1],
            hidden: vec![],
        };
        let layer = CouplingLayer::new(&mut store, "c", layout, true, &mut seeded(0)).unwrap();
        // tanh clamp: bias b gives log-scale 5 tanh(b / 5) = ln a.
        let b = 5.0 * (a.ln() / 5.0).atanh();
        store.get_mut(layer.scale.last().bias).data_mut()[0] = b;
        let s = FlowStack::from_layers(vec![layer]).unwrap();
        let n = 4001;
        let lo = -10.0 * a;
        let h = 20.0 * a / (n - 1) as f64;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![0.0, lo + h * i as f64]).collect();
        let y = Tensor::from_rows(&rows).unwrap();
        let x = s.invert(&store, &y).unwrap();
        let logdet = s.transform(&store, &x).unwrap().logdet;
        let dens: Vec<f64> = (0..n)
            .map(|i| {
                let x2 = x.get(i, 1);
                (-0.5 * x2 * x2).exp() / (2.0 * std::f64::consts::PI).sqrt() * (-logdet[i]).exp()
            })
            .collect();
        let integral: f64 = dens.windows(2).map(|w| 0.5 * (w[0] + w[1]) * h).sum();
        assert!((integral - 1.0).abs() < 0.02, "a = {a}: {integral}");
    }
}

fn arch(dim: usize, variant: FlowVariant, task: Task) -> FairNfArch {
    FairNfArch {
        dim,
        layers: 4,
        hidden: vec![8],
        variant,
        task,
        predictor_hidden: vec![4],
        pivot: 0,
    }
}

#[test]
fn shared_parameters_give_zero_correction() {
    let m = build_fairnf(arch(3, FlowVariant::Base, Task::Cls), true, 1).unwrap();
    let x = random_x(50, 3, -2.0, 2.0, 2);
    assert!(m.implicit_correction(&x).unwrap().data().iter().all(|&v| v == 0.0));

    // Random shared weights cancel up to floating-point rounding.
    let mut m = build_fairnf(arch(3, FlowVariant::Base, Task::Cls), false, 1).unwrap();
    m.share_flow_parameters();
    let w = m.implicit_correction(&x).unwrap();
    assert!(w.max_abs() < 1e-12, "{}", w.max_abs());
    assert!(m.fair_transform(&x).unwrap().max_abs_diff(&x) < 1e-9);
}

#[test]
fn projection_variant_only_zeroes_the_first_latent() {
    let mut m = build_fairnf(arch(4, FlowVariant::Fpr, Task::Cls), false, 3).unwrap();
    m.share_flow_parameters();
    let x = random_x(20, 4, -2.0, 2.0, 5);
    let z = m.f_all().transform(m.params(), &x).unwrap().z;
    let want = m.f_p().invert(m.params(), &project_first(&z)).unwrap();
    let got = m.fair_transform(&x).unwrap();
    assert!(got.max_abs_diff(&want) < 1e-12);
    assert!(got.max_abs_diff(&x) > 1e-3);
}

#[test]
fn correction_is_fair_minus_original() {
    let m = build_fairnf(arch(3, FlowVariant::Bce, Task::Cls), false, 8).unwrap();
    let x = random_x(15, 3, -2.0, 2.0, 6);
    let (w, fair) = m.correct(&x).unwrap();
    assert_eq!(fair, m.fair_transform(&x).unwrap());
    let again = m.implicit_correction(&x).unwrap();
    assert_eq!(again, w);
    for i in 0..x.len() {
        assert_eq!(fair.data()[i] - x.data()[i] - w.data()[i], 0.0);
    }
}

#[test]
fn flow_losses_do_not_reach_the_predictor() {
    let m = build_fairnf(arch(3, FlowVariant::Bce, Task::Cls), false, 4).unwrap();
    let x = random_x(30, 3, -2.0, 2.0, 1);
    let s: Vec<usize> = (0..30).map(|i| i % 2).collect();
    let y: Vec<f64> = (0..30).map(|i| f64::from(u8::from(i % 3 == 0))).collect();
    let batch = FlowBatch::Rows { x, y, s };
    let mut g = Graph::new();
    let p = m.params().bind(&mut g);
    let l = m.step_losses(&mut g, &p, &batch, 1.0, true).unwrap();

    let zero = |loss, ids: &[crate::autodiff::ParamId]| {
        let grads = g.backward(loss).unwrap();
        let all = m.params().collect_grads(&grads, &p);
        ids.iter().all(|id| all[id.0].data().iter().all(|&v| v == 0.0))
    };
    let predictor = m.predictor_param_ids();
    let f_all = m.f_all().param_ids();
    let f_p = m.f_p().param_ids();
    assert!(zero(l.nll_all, &predictor));
    assert!(zero(l.nll_all, &f_p));
    assert!(zero(l.nll_pivot.unwrap(), &predictor));
    assert!(zero(l.nll_pivot.unwrap(), &f_all));
    assert!(zero(l.latent_bce.unwrap(), &predictor));
    // The task loss does reach both flows.
    assert!(!zero(l.task.unwrap(), &f_all));
    assert!(!zero(l.task.unwrap(), &f_p));
}

#[test]
fn rank_head_closed_forms() {
    assert_eq!(rank_head_forward(&[0.3], &[0.3]), vec![0.0]);
    let a = [0.2, -1.4, 3.0];
    let b = [1.1, 0.5, -2.0];
    for (u, v) in rank_head_forward(&a, &b).iter().zip(rank_head_forward(&b, &a)) {
        assert!((u + v).abs() < 1e-12);
    }
    // g = sum of coordinates: g([1, 0]) = 1, g([0, 0]) = 0.
    assert!((rank_head_forward(&[1.0], &[0.0])[0] - 0.7616).abs() < 5e-5);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let m = build_fairnf(arch(5, FlowVariant::Bce, Task::Rank), false, 12).unwrap();
    let text = m.to_checkpoint().to_json().unwrap();
    assert!(text.contains("\"f_all\"") && text.contains("\"invariant\""));
    let back = FairNfModel::from_checkpoint(&Checkpoint::from_json(&text, "fairnf").unwrap()).unwrap();
    assert_eq!(back.params(), m.params());
    let x = random_x(4, 5, -1.0, 1.0, 3);
    assert_eq!(back.fair_transform(&x).unwrap(), m.fair_transform(&x).unwrap());
}

fn gaussians(seed: u64, n: usize, rule: TargetRule, mu1: [f64; 2]) -> Dataset {
    let cfg = SynthConfig {
        n_per_group: n,
        mu1,
        target: rule,
        ..SynthConfig::default()
    };
    let ds = synth_two_gaussians(&cfg, seed).unwrap();
    let spec = fit_normalizer(&ds, &[NormKind::Standard; 2]).unwrap();
    ds.normalized(&spec).unwrap()
}

#[test]
fn training_errors() {
    let ds = gaussians(0, 20, TargetRule::Group, [1.0, 1.0]);
    let cfg = FairNfConfig {
        pivot: 5,
        ..FairNfConfig::default()
    };
    assert!(matches!(train_fairnf(&ds, &cfg), Err(Error::Config(_))));
    let one_d = ds.select_features(&[0]);
    assert!(matches!(train_fairnf(&one_d, &FairNfConfig::default()), Err(Error::Config(_))));
}

#[test]
fn training_is_deterministic() {
    let ds = gaussians(1, 60, TargetRule::Group, [1.0, 1.0]);
    let cfg = FairNfConfig {
        variant: FlowVariant::Bce,
        epochs: 2,
        layers: 2,
        seed: 5,
        ..FairNfConfig::default()
    };
    let (a, ta) = train_fairnf(&ds, &cfg).unwrap();
    let (b, tb) = train_fairnf(&ds, &cfg).unwrap();
    assert_eq!(a.params(), b.params());
    assert_eq!(ta, tb);
}

fn group_mean_gap(x: &Tensor, ds: &Dataset) -> f64 {
    let rows = ds.group_rows();
    let a = x.select_rows(&rows[0]).col_means();
    let b = x.select_rows(&rows[1]).col_means();
    a.iter().zip(&b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn zero_gamma_is_a_plain_classifier() {
    let ds = gaussians(2, 300, TargetRule::Group, [1.0, 1.0]);
    let cfg = FairNfConfig {
        gamma: 0.0,
        epochs: 20,
        seed: 1,
        ..FairNfConfig::default()
    };
    let (m, _) = train_fairnf(&ds, &cfg).unwrap();
    let acc = m
        .score(&ds.x)
        .unwrap()
        .iter()
        .zip(&ds.y)
        .filter(|(p, y)| (**p >= 0.5) == (**y == 1.0))
        .count() as f64
        / ds.n_rows() as f64;
    assert!(acc > 0.7, "accuracy {acc}");
}

#[test]
fn flow_only_training_lowers_the_likelihood_loss() {
    let mut rng = seeded(3);
    let n = 400;
    let data: Vec<f64> = (0..2 * n)
        .map(|_| 3.0 + 0.7 * Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect::<Vec<f64>>();
    let mut ds = gaussians(0, n / 2, TargetRule::Group, [1.0, 1.0]);
    ds.x = Tensor::new(n, 2, data).unwrap();
    let cfg = FairNfConfig {
        flows_only: true,
        epochs: 50,
        batch_size: n,
        lr: 1e-3,
        seed: 2,
        ..FairNfConfig::default()
    };
    let (_, trace) = train_fairnf(&ds, &cfg).unwrap();
    for w in trace.epochs.windows(2) {
        assert!(w[1].nll_all < w[0].nll_all, "{:?}", w);
    }
}

#[test]
fn heavy_gamma_keeps_the_flow_a_density_model() {
    let train = gaussians(4, 300, TargetRule::Orthogonal, [1.0, 1.0]);
    let test = gaussians(40, 300, TargetRule::Orthogonal, [1.0, 1.0]);
    let base = FairNfConfig {
        gamma: 100.0,
        epochs: 20,
        seed: 6,
        ..FairNfConfig::default()
    };
    let (with_task, _) = train_fairnf(&train, &base).unwrap();
    let (flows, _) = train_fairnf(
        &train,
        &FairNfConfig {
            flows_only: true,
            ..base.clone()
        },
    )
    .unwrap();
    let a = flow_nll(with_task.f_all(), with_task.params(), &test.x).unwrap();
    let b = flow_nll(flows.f_all(), flows.params(), &test.x).unwrap();
    assert!((a - b).abs() <= 0.1 * b.abs(), "{a} vs {b}");
}

#[test]
fn latent_variant_pulls_group_means_together() {
    let ds = gaussians(5, 500, TargetRule::Orthogonal, [1.0, 1.0]);
    let cfg = FairNfConfig {
        variant: FlowVariant::Bce,
        epochs: 30,
        seed: 0,
        ..FairNfConfig::default()
    };
    let (m, _) = train_fairnf(&ds, &cfg).unwrap();
    let fair = m.fair_transform(&ds.x).unwrap();
    let gap = group_mean_gap(&fair, &ds);
    assert!(gap < 0.15, "gap {gap}");
    assert!(group_mean_gap(&ds.x, &ds) > 1.0);
}

#[test]
fn ranking_flow_trains_on_pairs() {
    let mut ds = gaussians(6, 100, TargetRule::Orthogonal, [1.0, 1.0]);
    ds.y = ds.x.iter_rows().map(|r| r[0] + 4.0).collect();
    let cfg = FairNfConfig {
        task: Task::Rank,
        variant: FlowVariant::Fpr,
        epochs: 3,
        pair_budget: Some(600),
        seed: 1,
        ..FairNfConfig::default()
    };
    let (m, trace) = train_fairnf(&ds, &cfg).unwrap();
    assert_eq!(trace.epochs.len(), 3);
    assert!(trace.epochs.iter().all(|e| e.task_loss > 0.0 && e.task_loss.is_finite()));
    assert_eq!(m.score(&ds.x).unwrap().len(), ds.n_rows());
}
