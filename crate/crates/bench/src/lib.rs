//! Shared fixtures for the criterion benches.

use fairvec::autodiff::{ParamStore, Tensor};
use fairvec::flow::{alternating_layouts, FlowStack};
use fairvec::nn::{Activation, Mlp};
use fairvec::rng::seeded;
use rand::Rng as _;

pub fn random_tensor(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = seeded(seed);
    let data = (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect();
    Tensor::new(rows, cols, data).expect("shape matches data")
}

pub fn tanh_mlp(widths: &[usize], seed: u64) -> (Mlp, ParamStore) {
    let mut store = ParamStore::new();
    let mlp = Mlp::new(
        &mut store,
        "mlp",
        widths,
        Activation::Tanh,
        Activation::Identity,
        &mut seeded(seed),
    );
    (mlp, store)
}

/// Randomly initialized stack, so the coupling nets do real work.
pub fn flow_stack(dim: usize, layers: usize, seed: u64) -> (FlowStack, ParamStore) {
    let mut store = ParamStore::new();
    let layouts = alternating_layouts(dim, layers, &[16]).expect("dim >= 2");
    let stack = FlowStack::new(&mut store, "flow", layouts, false, &mut seeded(seed)).expect("valid layouts");
    (stack, store)
}

/// Scores, graded relevance and a binary group column of length `n`.
pub fn ranking_instance(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let mut rng = seeded(seed);
    let scores = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let rel = (0..n).map(|_| f64::from(rng.random_range(0..5u8))).collect();
    let group = (0..n).map(|i| i % 2).collect();
    (scores, rel, group)
}
