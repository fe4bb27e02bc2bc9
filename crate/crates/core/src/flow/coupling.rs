use serde::{Deserialize, Serialize};

use crate::autodiff::{Binding, Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp};
use crate::rng::Rng;

/// Bound on the log-scale produced by a coupling layer's scale net.
pub const SCALE_LIMIT: f64 = 5.0;

/// Which columns a coupling layer passes through and which it transforms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerLayout {
    pub invariant: Vec<usize>,
    pub transformed: Vec<usize>,
    /// Hidden widths of the scale and translation nets.
    pub hidden: Vec<usize>,
}

/// Alternating contiguous halves: even layers keep the first `ceil(D/2)`
/// columns fixed, odd layers keep the rest.
pub fn alternating_layouts(dim: usize, layers: usize, hidden: &[usize]) -> Result<Vec<LayerLayout>> {
    if dim < 2 {
        return Err(Error::Config(format!(
            "coupling layers need at least 2 dimensions, got {dim}"
        )));
    }
    let d = dim.div_ceil(2);
    let first: Vec<usize> = (0..d).collect();
    let second: Vec<usize> = (d..dim).collect();
    Ok((0..layers)
        .map(|i| {
            let (invariant, transformed) = if i % 2 == 0 {
                (first.clone(), second.clone())
            } else {
                (second.clone(), first.clone())
            };
            LayerLayout {
                invariant,
                transformed,
                hidden: hidden.to_vec(),
            }
        })
        .collect())
}

/// Real NVP affine coupling: `y_b = x_b * exp(s(x_a)) + t(x_a)`, `y_a = x_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingLayer {
    pub layout: LayerLayout,
    pub scale: Mlp,
    pub translate: Mlp,
    dim: usize,
}

fn contiguous(cols: &[usize]) -> (usize, usize) {
    (cols[0], cols[cols.len() - 1] + 1)
}

impl CouplingLayer {
    /// With `zero_init` both nets output 0, making the layer the identity.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        layout: LayerLayout,
        zero_init: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        let (a, b) = (layout.invariant.len(), layout.transformed.len());
        if a == 0 || b == 0 {
            return Err(Error::Config("coupling layer needs 0 < d < D".into()));
        }
        let dim = a + b;
        let mut all: Vec<usize> = layout.invariant.iter().chain(&layout.transformed).copied().collect();
        all.sort_unstable();
        let in_range = all.iter().enumerate().all(|(i, &c)| i == c);
        let runs = [&layout.invariant, &layout.transformed]
            .iter()
            .all(|c| c.windows(2).all(|w| w[1] == w[0] + 1));
        if !in_range || !runs {
            return Err(Error::Config(
                "coupling blocks must be contiguous and cover every column once".into(),
            ));
        }
        let mut widths = vec![a];
        widths.extend(&layout.hidden);
        widths.push(b);
        let scale = Mlp::new(store, &format!("{name}.scale"), &widths, Activation::Tanh, Activation::Identity, rng);
        let translate = Mlp::new(
            store,
            &format!("{name}.translate"),
            &widths,
            Activation::Tanh,
            Activation::Identity,
            rng,
        );
        if zero_init {
            scale.last().zero(store);
            translate.last().zero(store);
        }
        Ok(CouplingLayer {
            layout,
            scale,
            translate,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.scale.param_ids();
        ids.extend(self.translate.param_ids());
        ids
    }

    fn split(&self, g: &mut Graph, x: Var) -> Result<(Var, Var)> {
        if g.shape(x).1 != self.dim {
            return Err(Error::Contract(format!(
                "coupling layer over {} columns got {}",
                self.dim,
                g.shape(x).1
            )));
        }
        let (a0, a1) = contiguous(&self.layout.invariant);
        let (b0, b1) = contiguous(&self.layout.transformed);
        Ok((g.slice_cols(x, a0, a1)?, g.slice_cols(x, b0, b1)?))
    }

    fn join(&self, g: &mut Graph, a: Var, b: Var) -> Result<Var> {
        if self.layout.invariant[0] == 0 {
            g.concat_cols(&[a, b])
        } else {
            g.concat_cols(&[b, a])
        }
    }

    /// Clamped log-scale `s` and translation `t` from the invariant block.
    fn nets(&self, g: &mut Graph, p: &Binding, xa: Var) -> Result<(Var, Var)> {
        let raw = self.scale.forward(g, p, xa)?;
        let shrunk = g.scale(raw, 1.0 / SCALE_LIMIT)?;
        let bounded = g.tanh(shrunk)?;
        let s = g.scale(bounded, SCALE_LIMIT)?;
        let t = self.translate.forward(g, p, xa)?;
        Ok((s, t))
    }

    /// `(y, logdet)` with `logdet` an `n x 1` column.
    pub fn forward(&self, g: &mut Graph, p: &Binding, x: Var) -> Result<(Var, Var)> {
        let (xa, xb) = self.split(g, x)?;
        let (s, t) = self.nets(g, p, xa)?;
        let e = g.exp(s)?;
        let scaled = g.mul(xb, e)?;
        let yb = g.add(scaled, t)?;
        let y = self.join(g, xa, yb)?;
        let logdet = g.sum_cols(s)?;
        Ok((y, logdet))
    }

    pub fn inverse(&self, g: &mut Graph, p: &Binding, y: Var) -> Result<Var> {
        let (ya, yb) = self.split(g, y)?;
        let (s, t) = self.nets(g, p, ya)?;
        let shifted = g.sub(yb, t)?;
        let neg = g.neg(s)?;
        let e = g.exp(neg)?;
        let xb = g.mul(shifted, e)?;
        self.join(g, ya, xb)
    }
}

/// Latent codes with per-row log-determinants.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatch {
    pub z: Tensor,
    pub logdet: Vec<f64>,
}

/// Composition of coupling layers.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowStack {
    pub layers: Vec<CouplingLayer>,
    dim: usize,
}

impl FlowStack {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        layouts: Vec<LayerLayout>,
        zero_init: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        let layers = layouts
            .into_iter()
            .enumerate()
            .map(|(i, l)| CouplingLayer::new(store, &format!("{name}.{i}"), l, zero_init, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers)
    }

    /// Stack from already built layers.
    pub fn from_layers(layers: Vec<CouplingLayer>) -> Result<Self> {
        let dim = layers
            .first()
            .map(CouplingLayer::dim)
            .ok_or_else(|| Error::Config("a flow needs at least one layer".into()))?;
        if layers.iter().any(|l| l.dim() != dim) {
            return Err(Error::Config("all coupling layers must share one width".into()));
        }
        Ok(FlowStack { layers, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layouts(&self) -> Vec<LayerLayout> {
        self.layers.iter().map(|l| l.layout.clone()).collect()
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(CouplingLayer::param_ids).collect()
    }

    /// `(z, logdet)`; the log-determinants of the layers add up.
    pub fn forward(&self, g: &mut Graph, p: &Binding, x: Var) -> Result<(Var, Var)> {
        let mut h = x;
        let mut total: Option<Var> = None;
        for layer in &self.layers {
            let (y, ld) = layer.forward(g, p, h)?;
            h = y;
            total = Some(match total {
                None => ld,
                Some(t) => g.add(t, ld)?,
            });
        }
        Ok((h, total.expect("non-empty stack")))
    }

    pub fn inverse(&self, g: &mut Graph, p: &Binding, z: Var) -> Result<Var> {
        let mut h = z;
        for layer in self.layers.iter().rev() {
            h = layer.inverse(g, p, h)?;
        }
        Ok(h)
    }

    pub fn transform(&self, store: &ParamStore, x: &Tensor) -> Result<LatentBatch> {
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let xi = g.input(x.clone());
        let (z, ld) = self.forward(&mut g, &p, xi)?;
        Ok(LatentBatch {
            z: g.value(z).clone(),
            logdet: g.value(ld).data().to_vec(),
        })
    }

    pub fn invert(&self, store: &ParamStore, z: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let zi = g.input(z.clone());
        let x = self.inverse(&mut g, &p, zi)?;
        Ok(g.value(x).clone())
    }
}

/// Mean of `|z|^2 / 2 + (D/2) log(2 pi) - logdet` over rows.
pub fn nll_node(g: &mut Graph, z: Var, logdet: Var) -> Result<Var> {
    let d = g.shape(z).1 as f64;
    let sq = g.square(z)?;
    let half = g.sum_cols(sq)?;
    let half = g.scale(half, 0.5)?;
    let per_row = g.sub(half, logdet)?;
    let mean = g.mean(per_row)?;
    let constant = g.input(Tensor::scalar(0.5 * d * (2.0 * std::f64::consts::PI).ln()));
    g.add(mean, constant)
}

/// Mean negative log-likelihood of `x` under the stack with a standard
/// normal base density.
pub fn flow_nll(stack: &FlowStack, store: &ParamStore, x: &Tensor) -> Result<f64> {
    if x.rows() == 0 {
        return Err(Error::Contract("negative log-likelihood of no rows".into()));
    }
    let mut g = Graph::new();
    let p = store.bind(&mut g);
    let xi = g.input(x.clone());
    let (z, ld) = stack.forward(&mut g, &p, xi)?;
    let loss = nll_node(&mut g, z, ld)?;
    Ok(g.scalar(loss))
}
