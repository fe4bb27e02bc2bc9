use super::*;
use crate::data::{fit_normalizer, make_pairs, synth_two_gaussians, SynthConfig, TargetRule};
use crate::metrics::{ndcg_at_k, RankedList};
use proptest::prelude::*;
use rand::Rng as _;

fn arch(d: usize, norm: NormKind, task: Task) -> ExplicitArch {
    ExplicitArch {
        input_dim: d,
        hidden: vec![6],
        head_hidden: vec![5],
        normalization: norm,
        task,
        n_groups: 2,
    }
}

fn random_x(n: usize, d: usize, seed: u64) -> Tensor {
    let mut rng = seeded(seed);
    let data = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
    Tensor::new(n, d, data).unwrap()
}

fn gaussians(seed: u64, rule: TargetRule) -> Dataset {
    let cfg = SynthConfig {
        n_per_group: 300,
        target: rule,
        ..SynthConfig::default()
    };
    let ds = synth_two_gaussians(&cfg, seed).unwrap();
    let spec = fit_normalizer(&ds, &[NormKind::Standard; 2]).unwrap();
    ds.normalized(&spec).unwrap()
}

#[test]
fn zero_final_layer_is_identity() {
    let m = build_explicit(arch(3, NormKind::Standard, Task::Cls), true, 4).unwrap();
    let x = random_x(10, 3, 1);
    let (w, z) = m.correct(&x).unwrap();
    assert!(w.data().iter().all(|&v| v == 0.0));
    assert_eq!(z, x);
}

#[test]
fn correction_width_matches_input() {
    let m = build_explicit(arch(2, NormKind::Standard, Task::Rank), false, 0).unwrap();
    let (w, _) = m.correct(&random_x(5, 2, 0)).unwrap();
    assert_eq!(w.shape(), (5, 2));
}

#[test]
fn unknown_normalization_and_bad_dims_are_rejected() {
    assert!(matches!(
        build_explicit(arch(2, NormKind::None, Task::Cls), false, 0),
        Err(Error::Config(_))
    ));
    assert!(build_explicit(arch(0, NormKind::Standard, Task::Cls), false, 0).is_err());
}

#[test]
fn unnormalized_input_is_a_contract_error() {
    let m = build_explicit(arch(2, NormKind::MinMax, Task::Cls), false, 0).unwrap();
    let x = Tensor::from_rows(&[vec![0.5, 37.0]]).unwrap();
    assert!(matches!(m.correct(&x), Err(Error::Contract(_))));
    let m = build_explicit(arch(2, NormKind::Standard, Task::Cls), false, 0).unwrap();
    let x = Tensor::from_rows(&[vec![0.5, 1e4]]).unwrap();
    assert!(matches!(m.correct(&x), Err(Error::Contract(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn skip_connection_and_bounds(seed in any::<u64>(), d in 1usize..6, minmax in any::<bool>()) {
        let norm = if minmax { NormKind::MinMax } else { NormKind::Standard };
        let m = build_explicit(arch(d, norm, Task::Cls), false, seed).unwrap();
        let mut x = random_x(12, d, seed ^ 1);
        if minmax {
            x = x.map(|v| (v + 2.0) / 4.0);
        }
        let (w, z) = m.correct(&x).unwrap();
        prop_assert_eq!(w.shape(), x.shape());
        for i in 0..x.len() {
            prop_assert!((z.data()[i] - x.data()[i] - w.data()[i]).abs() < 1e-12);
            prop_assert!(w.data()[i].abs() < 1.0);
        }
    }
}

#[test]
fn reversal_scales_adversary_gradient_on_extractor() {
    for seed in 0..5 {
        let m = build_explicit(arch(3, NormKind::Standard, Task::Cls), false, seed).unwrap();
        let x = random_x(16, 3, seed + 100);
        let s: Vec<usize> = (0..16).map(|i| i % 2).collect();
        let plain = m.adversary_gradients(&x, &s, None).unwrap();
        for lambda in [0.5, 1.0, 3.0] {
            let rev = m.adversary_gradients(&x, &s, Some(lambda)).unwrap();
            for id in m.extractor_param_ids() {
                let (a, b) = (&rev[id.0], &plain[id.0]);
                for (u, v) in a.data().iter().zip(b.data()) {
                    assert!((u + lambda * v).abs() <= 1e-12 * v.abs().max(1.0));
                }
            }
            // Adversary weights see the loss unchanged.
            for id in m.adversary_param_ids() {
                assert_eq!(rev[id.0], plain[id.0]);
            }
        }
    }
}

#[test]
fn zero_lambda_keeps_adversary_off_the_extractor() {
    let m = build_explicit(arch(3, NormKind::Standard, Task::Cls), false, 9).unwrap();
    let ds_x = random_x(20, 3, 2);
    let y: Vec<f64> = (0..20).map(|i| f64::from(u8::from(i % 3 == 0))).collect();
    let s: Vec<usize> = (0..20).map(|i| i % 2).collect();
    let batch = Batch::Rows {
        x: ds_x.clone(),
        y: y.clone(),
        s,
    };
    let full = m.gradients(&batch, Some(0.0)).unwrap();

    let mut g = Graph::new();
    let p = m.params.bind(&mut g);
    let xi = g.input(ds_x);
    let (_, z) = m.forward_correction(&mut g, &p, xi).unwrap();
    let logit = m.forward_head(&mut g, &p, z).unwrap();
    let task = g.bce_with_logits(logit, &y).unwrap();
    let grads = g.backward(task).unwrap();
    let task_only = m.params.collect_grads(&grads, &p);
    for id in m.extractor_param_ids() {
        assert_eq!(full[id.0], task_only[id.0]);
    }
}

fn first_coordinate_ranker() -> ExplicitModel {
    let mut m = build_explicit(arch(2, NormKind::Standard, Task::Rank), true, 0).unwrap();
    let [w, b] = m.head_param_ids()[..] else {
        unreachable!()
    };
    *m.params.get_mut(w) = Tensor::column(&[1.0, 0.0]);
    m.params.get_mut(b).data_mut()[0] = 0.0;
    m
}

#[test]
fn pair_output_closed_form_and_antisymmetry() {
    let m = first_coordinate_ranker();
    let a = Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap();
    let b = Tensor::from_rows(&[vec![0.0, 0.0]]).unwrap();
    let f = m.pair_scores(&a, &b).unwrap()[0];
    assert!((f - 1f64.tanh()).abs() < 1e-15);
    assert!((f - 0.7616).abs() < 5e-5);

    let m = build_explicit(arch(4, NormKind::Standard, Task::Rank), false, 5).unwrap();
    let a = random_x(30, 4, 1);
    let b = random_x(30, 4, 2);
    let ab = m.pair_scores(&a, &b).unwrap();
    let ba = m.pair_scores(&b, &a).unwrap();
    for (u, v) in ab.iter().zip(&ba) {
        assert!((u + v).abs() < 1e-12);
    }
}

#[test]
fn plain_classifier_learns_separable_groups() {
    let ds = gaussians(1, TargetRule::Group);
    let cfg = ExplicitTrainConfig {
        lambda: 0.0,
        epochs: 15,
        seed: 3,
        ..ExplicitTrainConfig::default()
    };
    let (m, trace) = train_advcls(&ds, &cfg).unwrap();
    let first = trace.epochs.first().unwrap().task_loss;
    let last = trace.epochs.last().unwrap().task_loss;
    assert!(last < first, "{first} -> {last}");
    let scores = m.score(&ds.x).unwrap();
    let acc = scores
        .iter()
        .zip(&ds.y)
        .filter(|(p, y)| (**p >= 0.5) == (**y == 1.0))
        .count() as f64
        / ds.n_rows() as f64;
    assert!(acc > 0.7, "accuracy {acc}");

    // Adversary trained on detached features still finds the groups.
    let probe = adversary_probe_loss(&m, &ds).unwrap();
    assert!(probe.accuracy > 0.7, "adversary accuracy {}", probe.accuracy);
}

#[test]
fn strong_reversal_blinds_the_adversary_on_held_out_rows() {
    let train = gaussians(2, TargetRule::Orthogonal);
    let test = gaussians(99, TargetRule::Orthogonal);
    let cfg = ExplicitTrainConfig {
        lambda: 10.0,
        epochs: 30,
        seed: 5,
        ..ExplicitTrainConfig::default()
    };
    let (m, _) = train_advcls(&train, &cfg).unwrap();
    let probe = adversary_probe_loss(&m, &test).unwrap();
    assert!((probe.accuracy - 0.5).abs() < 0.1, "adversary accuracy {}", probe.accuracy);
}

#[test]
fn untrained_adversary_is_at_chance() {
    let m = build_explicit(arch(2, NormKind::Standard, Task::Cls), false, 1).unwrap();
    let mut ds = gaussians(4, TargetRule::Orthogonal);
    let mut rng = seeded(17);
    ds.s = (0..ds.n_rows()).map(|_| rng.random_range(0..2)).collect();
    let probe = adversary_probe_loss(&m, &ds).unwrap();
    assert!((probe.accuracy - 0.5).abs() <= 0.1, "{}", probe.accuracy);
}

#[test]
fn training_is_deterministic() {
    let ds = gaussians(6, TargetRule::Orthogonal);
    let cfg = ExplicitTrainConfig {
        epochs: 3,
        seed: 11,
        ..ExplicitTrainConfig::default()
    };
    let (a, ta) = train_advcls(&ds, &cfg).unwrap();
    let (b, tb) = train_advcls(&ds, &cfg).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(ta, tb);
}

#[test]
fn divergence_reports_the_epoch() {
    let ds = gaussians(6, TargetRule::Orthogonal);
    let cfg = ExplicitTrainConfig {
        lr: 1e306,
        epochs: 3,
        ..ExplicitTrainConfig::default()
    };
    match train_advcls(&ds, &cfg) {
        Err(Error::Training { epoch, .. }) => assert!(epoch < 3),
        other => panic!("expected a training error, got {other:?}"),
    }
}

#[test]
fn ranker_orders_a_learnable_toy_list() {
    let n = 200;
    let x = random_x(n, 2, 8);
    let y: Vec<f64> = x.iter_rows().map(|r| (r[0] + 2.0) / 4.0 * 3.0).collect();
    let mut ds = gaussians(0, TargetRule::Orthogonal).select_rows(&(0..n).collect::<Vec<_>>());
    ds.x = x;
    ds.y = y.clone();
    ds.query_ids = None;
    let pairs = make_pairs(&ds, Some(4000), 1);
    let cfg = ExplicitTrainConfig {
        lambda: 0.0,
        epochs: 10,
        seed: 2,
        ..ExplicitTrainConfig::default()
    };
    let (m, _) = train_advdr(&ds, &pairs, &cfg).unwrap();
    let scores = m.score(&ds.x).unwrap();
    let list = RankedList::from_scores(&scores, &y, &ds.s).unwrap();
    let ndcg = ndcg_at_k(&list, 10).unwrap();
    assert!(ndcg >= 0.95, "ndcg@10 {ndcg}");
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let m = build_explicit(
        ExplicitArch {
            n_groups: 3,
            ..arch(3, NormKind::MinMax, Task::Cls)
        },
        false,
        21,
    )
    .unwrap();
    let text = m.to_checkpoint().to_json().unwrap();
    let back = ExplicitModel::from_checkpoint(&Checkpoint::from_json(&text, "explicit").unwrap()).unwrap();
    assert_eq!(back.params, m.params);
    assert_eq!(back.arch, m.arch);
    let x = random_x(4, 3, 0).map(|v| (v + 2.0) / 4.0);
    assert_eq!(back.score(&x).unwrap(), m.score(&x).unwrap());
    assert_eq!(back.to_checkpoint().to_json().unwrap(), text);
}
