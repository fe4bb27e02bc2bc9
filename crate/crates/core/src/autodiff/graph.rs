use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Affine { x: Var, w: Var, b: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow { x: Var, row: Var },
    MulRow { x: Var, row: Var },
    Scale { x: Var, c: f64 },
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    SumCols(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols { x: Var, start: usize },
    GradReverse { x: Var, lambda: f64 },
    BceWithLogits { logits: Var, targets: Vec<f64> },
    SoftmaxXent { logits: Var, labels: Vec<usize> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Affine { .. } => "affine",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow { .. } => "add_row",
            Op::MulRow { .. } => "mul_row",
            Op::Scale { .. } => "scale",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Square(_) => "square",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::SumCols(_) => "sum_cols",
            Op::ConcatCols(_) => "concat_cols",
            Op::ConcatRows(_) => "concat_rows",
            Op::SliceCols { .. } => "slice_cols",
            Op::GradReverse { .. } => "grad_reverse",
            Op::BceWithLogits { .. } => "bce_with_logits",
            Op::SoftmaxXent { .. } => "softmax_xent",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Define-by-run tape. Every op evaluates eagerly and appends a node, so
/// node inputs always precede the node and `backward` is a single reverse
/// sweep. A fresh graph is built per minibatch.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every node that needed one.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, or zeros of `shape` when no path reached it.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(shape.0, shape.1))
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    /// Constant input; no gradient is tracked for it.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf (parameter or input under test).
    pub fn param(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    fn shape_err(&self, op: &'static str, detail: String) -> Error {
        Error::Shape {
            node: self.nodes.len(),
            op,
            detail,
        }
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::Numeric {
                what: format!("node {} ({})", self.nodes.len(), op.name()),
            });
        }
        let requires_grad = match op {
            // Reversal with lambda = 0 is expressed as a detach.
            Op::GradReverse { lambda: 0.0, .. } => false,
            _ => inputs.iter().any(|v| self.nodes[v.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(self.shape_err(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn row_broadcast(&self, op: &'static str, x: Var, row: Var) -> Result<()> {
        let (sx, sr) = (self.shape(x), self.shape(row));
        if sr.0 != 1 || sr.1 != sx.1 {
            return Err(self.shape_err(op, format!("row {sr:?} does not broadcast over {sx:?}")));
        }
        Ok(())
    }

    /// `x W + b` with `x: n x i`, `W: i x o`, `b: 1 x o`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sx.1 != sw.0 || sb != (1, sw.1) {
            return Err(self.shape_err(
                "affine",
                format!("x {sx:?}, W {sw:?}, b {sb:?}"),
            ));
        }
        let mut out = self.value(x).matmul(self.value(w));
        let bias = self.value(b).data().to_vec();
        for r in 0..out.rows() {
            for (c, bv) in bias.iter().enumerate() {
                let v = out.get(r, c) + bv;
                out.set(r, c, v);
            }
        }
        self.push(out, Op::Affine { x, w, b }, &[x, w, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.value(a).add(self.value(b));
        self.push(v, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a).sub(self.value(b));
        self.push(v, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |p, q| p * q);
        self.push(v, Op::Mul(a, b), &[a, b])
    }

    /// Adds a `1 x c` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        self.row_broadcast("add_row", x, row)?;
        let r = self.value(row).data().to_vec();
        let mut out = self.value(x).clone();
        let cols = out.cols();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += r[i % cols];
        }
        self.push(out, Op::AddRow { x, row }, &[x, row])
    }

    /// Multiplies every row of `x` elementwise by a `1 x c` row.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var> {
        self.row_broadcast("mul_row", x, row)?;
        let r = self.value(row).data().to_vec();
        let mut out = self.value(x).clone();
        let cols = out.cols();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v *= r[i % cols];
        }
        self.push(out, Op::MulRow { x, row }, &[x, row])
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let v = self.value(x).scale(c);
        self.push(v, Op::Scale { x, c }, &[x])
    }

    pub fn neg(&mut self, x: Var) -> Result<Var> {
        self.scale(x, -1.0)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).map(f64::tanh);
        self.push(v, Op::Tanh(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).map(sigmoid);
        self.push(v, Op::Sigmoid(x), &[x])
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).map(f64::exp);
        self.push(v, Op::Exp(x), &[x])
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).map(f64::ln);
        self.push(v, Op::Log(x), &[x])
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).map(|a| a * a);
        self.push(v, Op::Square(x), &[x])
    }

    /// Sum of all entries, `1 x 1`.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let v = Tensor::scalar(self.value(x).sum());
        self.push(v, Op::Sum(x), &[x])
    }

    /// Mean of all entries, `1 x 1`.
    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.is_empty() {
            return Err(self.shape_err("mean", "mean of an empty tensor".into()));
        }
        let v = Tensor::scalar(t.sum() / t.len() as f64);
        self.push(v, Op::Mean(x), &[x])
    }

    /// Row-wise sum, `n x c -> n x 1`.
    pub fn sum_cols(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let sums: Vec<f64> = t.iter_rows().map(|r| r.iter().sum()).collect();
        let v = Tensor::column(&sums);
        self.push(v, Op::SumCols(x), &[x])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts
            .first()
            .map(|p| self.shape(*p).0)
            .ok_or_else(|| self.shape_err("concat_cols", "no inputs".into()))?;
        if let Some(bad) = parts.iter().find(|p| self.shape(**p).0 != rows) {
            let detail = format!("row count {} vs {rows}", self.shape(*bad).0);
            return Err(self.shape_err("concat_cols", detail));
        }
        let cols: usize = parts.iter().map(|p| self.shape(*p).1).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(r));
            }
        }
        let v = Tensor::new(rows, cols, data)?;
        self.push(v, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(self.shape_err("concat_rows", "no inputs".into()));
        }
        let tensors: Vec<&Tensor> = parts.iter().map(|p| self.value(*p)).collect();
        let v = Tensor::vstack(&tensors)
            .map_err(|e| self.shape_err("concat_rows", e.to_string()))?;
        self.push(v, Op::ConcatRows(parts.to_vec()), parts)
    }

    /// Columns `start..end` of `x`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (_, cols) = self.shape(x);
        if start >= end || end > cols {
            return Err(self.shape_err(
                "slice_cols",
                format!("range {start}..{end} outside {cols} columns"),
            ));
        }
        let idx: Vec<usize> = (start..end).collect();
        let v = self.value(x).select_cols(&idx);
        self.push(v, Op::SliceCols { x, start }, &[x])
    }

    /// Identity forward; backward multiplies the incoming gradient by
    /// `-lambda`.
    pub fn grad_reverse(&mut self, x: Var, lambda: f64) -> Result<Var> {
        if !(lambda > 0.0) {
            return Err(Error::Config(format!(
                "gradient reversal strength must be > 0, got {lambda}"
            )));
        }
        let v = self.value(x).clone();
        self.push(v, Op::GradReverse { x, lambda }, &[x])
    }

    /// Identity forward with no gradient flowing back.
    pub fn detach(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).clone();
        self.push(v, Op::GradReverse { x, lambda: 0.0 }, &[x])
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against `targets`,
    /// evaluated in the overflow-free form.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let t = self.value(logits);
        if t.len() != targets.len() || t.is_empty() {
            return Err(self.shape_err(
                "bce_with_logits",
                format!("{} logits for {} targets", t.len(), targets.len()),
            ));
        }
        let total: f64 = t
            .data()
            .iter()
            .zip(targets)
            .map(|(&l, &y)| l.max(0.0) - l * y + (-l.abs()).exp().ln_1p())
            .sum();
        let v = Tensor::scalar(total / targets.len() as f64);
        self.push(
            v,
            Op::BceWithLogits {
                logits,
                targets: targets.to_vec(),
            },
            &[logits],
        )
    }

    /// Mean softmax cross-entropy of `logits: n x K` against class labels.
    pub fn softmax_xent(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        let (n, k) = t.shape();
        if n != labels.len() || n == 0 || labels.iter().any(|&l| l >= k) {
            return Err(self.shape_err(
                "softmax_xent",
                format!("{n}x{k} logits for {} labels", labels.len()),
            ));
        }
        let mut total = 0.0;
        for (row, &l) in t.iter_rows().zip(labels) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            total += lse - row[l];
        }
        let v = Tensor::scalar(total / n as f64);
        self.push(
            v,
            Op::SoftmaxXent {
                logits,
                labels: labels.to_vec(),
            },
            &[logits],
        )
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(Error::Shape {
                node: loss.0,
                op: self.nodes[loss.0].op.name(),
                detail: format!("loss must be 1x1, got {shape:?}"),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, delta: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => {
                    for (e, d) in existing.data_mut().iter_mut().zip(delta.data()) {
                        *e += d;
                    }
                }
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                acc(*x, g.matmul(&wv.transpose()));
                acc(*w, xv.transpose().matmul(g));
                acc(*b, g.col_sums());
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                acc(*a, g.zip_map(self.value(*b), |gi, bi| gi * bi));
                acc(*b, g.zip_map(self.value(*a), |gi, ai| gi * ai));
            }
            Op::AddRow { x, row } => {
                acc(*x, g.clone());
                acc(*row, g.col_sums());
            }
            Op::MulRow { x, row } => {
                let r = self.value(*row).data();
                let cols = g.cols();
                let mut dx = g.clone();
                for (i, v) in dx.data_mut().iter_mut().enumerate() {
                    *v *= r[i % cols];
                }
                acc(*x, dx);
                acc(*row, g.zip_map(self.value(*x), |gi, xi| gi * xi).col_sums());
            }
            Op::Scale { x, c } => acc(*x, g.scale(*c)),
            Op::Tanh(x) => acc(*x, g.zip_map(&node.value, |gi, y| gi * (1.0 - y * y))),
            Op::Sigmoid(x) => acc(*x, g.zip_map(&node.value, |gi, y| gi * y * (1.0 - y))),
            Op::Exp(x) => acc(*x, g.zip_map(&node.value, |gi, y| gi * y)),
            Op::Log(x) => acc(*x, g.zip_map(self.value(*x), |gi, xi| gi / xi)),
            Op::Square(x) => acc(*x, g.zip_map(self.value(*x), |gi, xi| 2.0 * gi * xi)),
            Op::Sum(x) => {
                let (r, c) = self.shape(*x);
                acc(*x, Tensor::full(r, c, g.data()[0]));
            }
            Op::Mean(x) => {
                let (r, c) = self.shape(*x);
                acc(*x, Tensor::full(r, c, g.data()[0] / (r * c) as f64));
            }
            Op::SumCols(x) => {
                let (r, c) = self.shape(*x);
                let mut dx = Tensor::zeros(r, c);
                for i in 0..r {
                    for j in 0..c {
                        dx.set(i, j, g.get(i, 0));
                    }
                }
                acc(*x, dx);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let w = self.shape(*p).1;
                    let idx: Vec<usize> = (offset..offset + w).collect();
                    acc(*p, g.select_cols(&idx));
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let h = self.shape(*p).0;
                    let idx: Vec<usize> = (offset..offset + h).collect();
                    acc(*p, g.select_rows(&idx));
                    offset += h;
                }
            }
            Op::SliceCols { x, start } => {
                let (r, c) = self.shape(*x);
                let mut dx = Tensor::zeros(r, c);
                for i in 0..r {
                    for j in 0..g.cols() {
                        dx.set(i, start + j, g.get(i, j));
                    }
                }
                acc(*x, dx);
            }
            Op::GradReverse { x, lambda } => acc(*x, g.scale(-lambda)),
            Op::BceWithLogits { logits, targets } => {
                let n = targets.len() as f64;
                let scale = g.data()[0] / n;
                let lv = self.value(*logits);
                let d: Vec<f64> = lv
                    .data()
                    .iter()
                    .zip(targets)
                    .map(|(&l, &y)| (sigmoid(l) - y) * scale)
                    .collect();
                acc(*logits, Tensor::new(lv.rows(), lv.cols(), d).expect("shape"));
            }
            Op::SoftmaxXent { logits, labels } => {
                let lv = self.value(*logits);
                let (n, k) = lv.shape();
                let scale = g.data()[0] / n as f64;
                let mut d = Tensor::zeros(n, k);
                for (i, (row, &l)) in lv.iter_rows().zip(labels).enumerate() {
                    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
                    for (j, v) in row.iter().enumerate() {
                        let p = (v - m).exp() / z;
                        let t = if j == l { 1.0 } else { 0.0 };
                        d.set(i, j, (p - t) * scale);
                    }
                }
                acc(*logits, d);
            }
        }
    }
}
