//! Dense layers and MLPs on top of [`crate::autodiff`].

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Binding, Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::Result;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
    /// `2 sigmoid(x) - 1`, ranging over `(-1, 1)`.
    ShiftedSigmoid,
}

impl Activation {
    pub fn apply(self, g: &mut Graph, x: Var) -> Result<Var> {
        match self {
            Activation::Identity => Ok(x),
            Activation::Tanh => g.tanh(x),
            Activation::Sigmoid => g.sigmoid(x),
            Activation::ShiftedSigmoid => {
                let s = g.sigmoid(x)?;
                let two_s = g.scale(s, 2.0)?;
                let shift = g.input(Tensor::full(1, g.shape(x).1, -1.0));
                g.add_row(two_s, shift)
            }
        }
    }
}

/// Glorot-uniform matrix, entries in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Tensor::new(rows, cols, data).expect("glorot shape")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut Rng,
    ) -> Self {
        let weight = store.add(format!("{name}.weight"), glorot(fan_in, fan_out, rng));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(1, fan_out));
        Linear {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Binding, x: Var) -> Result<Var> {
        g.affine(x, p[self.weight], p[self.bias])
    }

    pub fn zero(&self, store: &mut ParamStore) {
        store.get_mut(self.weight).data_mut().fill(0.0);
        store.get_mut(self.bias).data_mut().fill(0.0);
    }
}

/// Fully connected stack: `hidden` activation between layers, `output`
/// activation after the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub hidden: Activation,
    pub output: Activation,
}

impl Mlp {
    /// `widths` lists every layer width including input and output.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut Rng,
    ) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Mlp {
            layers,
            hidden,
            output,
        }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("non-empty").fan_out
    }

    pub fn last(&self) -> &Linear {
        self.layers.last().expect("non-empty")
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| [l.weight, l.bias]).collect()
    }

    pub fn forward(&self, g: &mut Graph, p: &Binding, x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, p, h)?;
            let act = if i == last { self.output } else { self.hidden };
            h = act.apply(g, h)?;
        }
        Ok(h)
    }

    /// Forward pass on constants, returning plain values.
    pub fn eval(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let xi = g.input(x.clone());
        let out = self.forward(&mut g, &p, xi)?;
        Ok(g.value(out).clone())
    }
}
