use std::borrow::Cow;
use std::collections::HashMap;

use super::kernels::{self, ConvGeometry};
use super::{ParamStore, Real, Tensor, TensorError};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Unary {
    Relu,
    Sigmoid,
    Tanh,
    Square,
    Log,
    Exp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Binary { op: Binary, a: Var, b: Var },
    Unary { op: Unary, x: Var },
    Scale { x: Var, factor: Real },
    Clamp { x: Var, lo: Real, hi: Real },
    MatMul { a: Var, b: Var, m: usize, k: usize, p: usize },
    AddBias { x: Var, bias: Var },
    Reduce { x: Var, axis: Option<usize>, mean: bool },
    Reshape { x: Var },
    Conv2d { input: Var, kernels: Var, geo: ConvGeometry },
    LogSoftmax { x: Var },
    Gather { x: Var, indices: Vec<usize> },
    Concat { parts: Vec<Var> },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Binary { a, b, .. } | Op::MatMul { a, b, .. } => vec![*a, *b],
            Op::Unary { x, .. }
            | Op::Scale { x, .. }
            | Op::Clamp { x, .. }
            | Op::Reduce { x, .. }
            | Op::Reshape { x }
            | Op::LogSoftmax { x }
            | Op::Gather { x, .. } => vec![*x],
            Op::AddBias { x, bias } => vec![*x, *bias],
            Op::Conv2d { input, kernels, .. } => vec![*input, *kernels],
            Op::Concat { parts } => parts.clone(),
        }
    }
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of primitive operations for reverse-mode differentiation.
///
/// Nodes are stored in creation order, which is also a topological order.
/// A graph is built for a single update and consumed by [`Graph::backward`].
/// Parameters are bound by reference, so binding a large store is free.
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
    recording: bool,
    consumed: bool,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar loss with respect to every leaf that requires them.
#[derive(Debug, Default)]
pub struct Gradients {
    by_leaf: HashMap<Var, Tensor>,
    visited: usize,
}

impl Gradients {
    pub fn wrt(&self, leaf: Var) -> Option<&Tensor> {
        self.by_leaf.get(&leaf)
    }

    /// Number of graph nodes the backward sweep propagated through.
    pub fn nodes_visited(&self) -> usize {
        self.visited
    }

    /// Gradient for each bound parameter in store order; parameters the loss
    /// does not depend on receive zeros.
    pub fn for_params(&self, bound: &[Var], store: &ParamStore) -> Vec<Tensor> {
        bound
            .iter()
            .zip(store.tensors())
            .map(|(v, t)| {
                self.by_leaf
                    .get(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(t.shape()))
            })
            .collect()
    }
}

fn shape_err(op: &'static str, a: &[usize], b: &[usize]) -> TensorError {
    TensorError::Shape {
        op,
        detail: format!("{:?} vs {:?}", a, b),
    }
}

impl<'a> Graph<'a> {
    /// A recording graph whose parameters receive gradients.
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            recording: true,
            consumed: false,
        }
    }

    /// A graph that only evaluates; nothing in it requires a gradient.
    pub fn inference() -> Self {
        Graph {
            nodes: Vec::new(),
            recording: false,
            consumed: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
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

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad =
            self.recording && op.inputs().iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_leaf(&mut self, value: Cow<'a, Tensor>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: requires_grad && self.recording,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives a gradient (when recording).
    pub fn param(&mut self, t: &'a Tensor) -> Var {
        self.push_leaf(Cow::Borrowed(t), true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push_leaf(Cow::Owned(t), false)
    }

    pub fn constant_ref(&mut self, t: &'a Tensor) -> Var {
        self.push_leaf(Cow::Borrowed(t), false)
    }

    /// Places every tensor of `store` on the graph as a parameter leaf.
    pub fn bind(&mut self, store: &'a ParamStore) -> Vec<Var> {
        store.tensors().iter().map(|t| self.param(t)).collect()
    }

    /// Copy of `v`'s value as a constant; gradients stop here.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    fn binary(&mut self, op: Binary, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let f = |x: Real, y: Real| match op {
            Binary::Add => x + y,
            Binary::Sub => x - y,
            Binary::Mul => x * y,
        };
        let (shape, data): (Vec<usize>, Vec<Real>) = if ta.shape() == tb.shape() {
            (
                ta.shape().to_vec(),
                ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect(),
            )
        } else if tb.len() == 1 {
            let y = tb.data()[0];
            (ta.shape().to_vec(), ta.data().iter().map(|&x| f(x, y)).collect())
        } else if ta.len() == 1 {
            let x = ta.data()[0];
            (tb.shape().to_vec(), tb.data().iter().map(|&y| f(x, y)).collect())
        } else {
            let name = match op {
                Binary::Add => "add",
                Binary::Sub => "sub",
                Binary::Mul => "mul",
            };
            return Err(shape_err(name, ta.shape(), tb.shape()));
        };
        Ok(self.push(Tensor::from_parts(shape, data), Op::Binary { op, a, b }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(Binary::Mul, a, b)
    }

    fn unary(&mut self, op: Unary, x: Var) -> Result<Var, TensorError> {
        let t = self.value(x);
        if op == Unary::Log {
            if let Some(i) = t.data().iter().position(|&v| v <= 0.0) {
                return Err(TensorError::Domain {
                    op: "log",
                    detail: format!("non-positive input {} at index {}", t.data()[i], i),
                });
            }
        }
        let data = t
            .data()
            .iter()
            .map(|&v| match op {
                Unary::Relu => v.max(0.0),
                Unary::Sigmoid => kernels::sigmoid(v),
                Unary::Tanh => v.tanh(),
                Unary::Square => v * v,
                Unary::Log => v.ln(),
                Unary::Exp => v.exp(),
            })
            .collect();
        let out = Tensor::from_parts(t.shape().to_vec(), data);
        Ok(self.push(out, Op::Unary { op, x }))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, TensorError> {
        self.unary(Unary::Relu, x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, TensorError> {
        self.unary(Unary::Sigmoid, x)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var, TensorError> {
        self.unary(Unary::Tanh, x)
    }

    pub fn square(&mut self, x: Var) -> Result<Var, TensorError> {
        self.unary(Unary::Square, x)
    }

    /// Natural log; any non-positive input is a domain error.
    pub fn log(&mut self, x: Var) -> Result<Var, TensorError> {
        self.unary(Unary::Log, x)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var, TensorError> {
        self.unary(Unary::Exp, x)
    }

    pub fn scale(&mut self, x: Var, factor: Real) -> Var {
        let t = self.value(x);
        let out = Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|v| v * factor).collect());
        self.push(out, Op::Scale { x, factor })
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn clamp(&mut self, x: Var, lo: Real, hi: Real) -> Result<Var, TensorError> {
        if lo > hi {
            return Err(TensorError::Domain {
                op: "clamp",
                detail: format!("lower bound {} exceeds upper bound {}", lo, hi),
            });
        }
        let t = self.value(x);
        let out = Tensor::from_parts(
            t.shape().to_vec(),
            t.data().iter().map(|v| v.clamp(lo, hi)).collect(),
        );
        Ok(self.push(out, Op::Clamp { x, lo, hi }))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(shape_err("matmul", ta.shape(), tb.shape()));
        }
        let (m, k, p) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![0.0; m * p];
        kernels::matmul_acc(ta.data(), tb.data(), &mut out, m, k, p);
        Ok(self.push(Tensor::from_parts(vec![m, p], out), Op::MatMul { a, b, m, k, p }))
    }

    /// Adds `bias[C]` along axis 1 of `x[N×C×…]` (or to a plain `x[C]`).
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, TensorError> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let channel_axis = if tx.rank() == 1 { 0 } else { 1 };
        if tb.rank() != 1 || tx.rank() == 0 || tx.shape()[channel_axis] != tb.len() {
            return Err(shape_err("add_bias", tx.shape(), tb.shape()));
        }
        let inner: usize = tx.shape()[channel_axis + 1..].iter().product();
        let channels = tb.len();
        let mut data = tx.data().to_vec();
        for (i, v) in data.iter_mut().enumerate() {
            *v += tb.data()[(i / inner) % channels];
        }
        Ok(self.push(Tensor::from_parts(tx.shape().to_vec(), data), Op::AddBias { x, bias }))
    }

    fn reduce(&mut self, x: Var, axis: Option<usize>, mean: bool) -> Result<Var, TensorError> {
        let t = self.value(x);
        let out = match axis {
            None => {
                let s: Real = t.data().iter().sum();
                Tensor::scalar(if mean { s / t.len() as Real } else { s })
            }
            Some(ax) => {
                if ax >= t.rank() {
                    return Err(TensorError::Axis { axis: ax, rank: t.rank() });
                }
                let (outer, len, inner) = split_axis(t.shape(), ax);
                let mut data = vec![0.0; outer * inner];
                for o in 0..outer {
                    for l in 0..len {
                        let src = &t.data()[(o * len + l) * inner..][..inner];
                        for (d, s) in data[o * inner..][..inner].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
                if mean {
                    for d in &mut data {
                        *d /= len as Real;
                    }
                }
                let mut shape = t.shape().to_vec();
                shape.remove(ax);
                Tensor::from_parts(shape, data)
            }
        };
        Ok(self.push(out, Op::Reduce { x, axis, mean }))
    }

    pub fn sum(&mut self, x: Var, axis: Option<usize>) -> Result<Var, TensorError> {
        self.reduce(x, axis, false)
    }

    pub fn mean(&mut self, x: Var, axis: Option<usize>) -> Result<Var, TensorError> {
        self.reduce(x, axis, true)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let t = self.value(x).reshape(shape)?;
        Ok(self.push(t, Op::Reshape { x }))
    }

    /// Flattens all axes after the first.
    pub fn flatten_rows(&mut self, x: Var) -> Result<Var, TensorError> {
        let t = self.value(x);
        let rows = t.shape()[0];
        let cols = t.len() / rows;
        self.reshape(x, &[rows, cols])
    }

    /// Valid-padding cross-correlation of `input[C×H×W]` or `input[N×C×H×W]`
    /// with `kernels[O×C×kh×kw]`.
    pub fn conv2d(&mut self, input: Var, kernels: Var, stride: usize) -> Result<Var, TensorError> {
        let (ti, tk) = (self.value(input), self.value(kernels));
        let batched = ti.rank() == 4;
        if !(ti.rank() == 3 || batched) || tk.rank() != 4 || stride == 0 {
            return Err(shape_err("conv2d", ti.shape(), tk.shape()));
        }
        let s = ti.shape();
        let (batch, c, h, w) = if batched {
            (s[0], s[1], s[2], s[3])
        } else {
            (1, s[0], s[1], s[2])
        };
        let k = tk.shape();
        if k[1] != c || k[2] > h || k[3] > w {
            return Err(shape_err("conv2d", ti.shape(), tk.shape()));
        }
        let geo = ConvGeometry {
            batch,
            in_channels: c,
            height: h,
            width: w,
            out_channels: k[0],
            kernel_h: k[2],
            kernel_w: k[3],
            stride,
        };
        let data = kernels::conv2d_forward(&geo, ti.data(), tk.data());
        let mut shape = vec![geo.out_channels, geo.out_h(), geo.out_w()];
        if batched {
            shape.insert(0, batch);
        }
        Ok(self.push(Tensor::from_parts(shape, data), Op::Conv2d { input, kernels, geo }))
    }

    /// Log-softmax over the last axis of a vector or a `[rows×classes]` matrix.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var, TensorError> {
        let t = self.value(x);
        if t.rank() == 0 || t.rank() > 2 {
            return Err(shape_err("log_softmax", t.shape(), &[]));
        }
        let cols = *t.shape().last().unwrap();
        let data = kernels::log_softmax_rows(t.data(), cols);
        Ok(self.push(Tensor::from_parts(t.shape().to_vec(), data), Op::LogSoftmax { x }))
    }

    /// Picks `x[i, indices[i]]` for each row (or `x[indices[0]]` for a vector).
    pub fn gather(&mut self, x: Var, indices: &[usize]) -> Result<Var, TensorError> {
        let t = self.value(x);
        let (rows, cols, out_shape) = match t.rank() {
            1 => (1, t.len(), vec![]),
            2 => (t.shape()[0], t.shape()[1], vec![t.shape()[0]]),
            _ => return Err(shape_err("gather", t.shape(), &[indices.len()])),
        };
        if indices.len() != rows {
            return Err(shape_err("gather", t.shape(), &[indices.len()]));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= cols) {
            return Err(TensorError::Index { index: bad, len: cols });
        }
        let data = indices
            .iter()
            .enumerate()
            .map(|(r, &i)| t.data()[r * cols + i])
            .collect();
        Ok(self.push(
            Tensor::from_parts(out_shape, data),
            Op::Gather { x, indices: indices.to_vec() },
        ))
    }

    /// Concatenates along axis 0; trailing shapes must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = parts.first().ok_or_else(|| TensorError::Shape {
            op: "concat",
            detail: "nothing to concatenate".into(),
        })?;
        let tail = self.value(*first).shape()[1..].to_vec();
        let mut rows = 0;
        let mut data = Vec::new();
        for p in parts {
            let t = self.value(*p);
            if t.rank() == 0 || t.shape()[1..] != tail[..] {
                return Err(shape_err("concat", self.value(*first).shape(), t.shape()));
            }
            rows += t.shape()[0];
            data.extend_from_slice(t.data());
        }
        let mut shape = vec![rows];
        shape.extend(tail);
        Ok(self.push(Tensor::from_parts(shape, data), Op::Concat { parts: parts.to_vec() }))
    }

    /// log softmax(logits)[action] for a single logit vector.
    pub fn softmax_logprob(&mut self, logits: Var, action: usize) -> Result<Var, TensorError> {
        let t = self.value(logits);
        if t.rank() != 1 || t.len() < 2 {
            return Err(shape_err("softmax_logprob", t.shape(), &[]));
        }
        let ls = self.log_softmax(logits)?;
        self.gather(ls, &[action])
    }

    /// Reverse sweep from a scalar `loss`. Consumes the graph: node values are
    /// released and a second call is an error.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, TensorError> {
        if self.consumed {
            return Err(TensorError::GraphConsumed);
        }
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(TensorError::NonScalarLoss { shape: lt.shape().to_vec() });
        }
        lt.ensure_finite("loss")?;
        if !self.nodes[loss.0].requires_grad {
            return Err(TensorError::Detached);
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<Real>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut result = Gradients::default();
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            result.visited += 1;
            if let Op::Leaf = node.op {
                result
                    .by_leaf
                    .insert(Var(idx), Tensor::from_parts(node.value.shape().to_vec(), g));
                continue;
            }
            self.propagate(idx, &g, &mut grads);
        }
        self.nodes.clear();
        Ok(result)
    }

    fn propagate(&self, idx: usize, g: &[Real], grads: &mut [Option<Vec<Real>>]) {
        let node = &self.nodes[idx];
        let nodes = &self.nodes;
        let wants = |v: Var| nodes[v.0].requires_grad;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [Real])| {
            if nodes[v.0].requires_grad {
                let slot = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]);
                f(slot);
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Binary { op, a, b } => {
                let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
                let n = g.len();
                let at = |t: &Tensor, i: usize| if t.len() == n { t.data()[i] } else { t.data()[0] };
                for (var, other, is_b) in [(*a, tb, false), (*b, ta, true)] {
                    let own_len = nodes[var.0].value.len();
                    acc(var, &mut |slot| {
                        for i in 0..n {
                            let d = match op {
                                Binary::Add => g[i],
                                Binary::Sub => {
                                    if is_b {
                                        -g[i]
                                    } else {
                                        g[i]
                                    }
                                }
                                Binary::Mul => g[i] * at(other, i),
                            };
                            if own_len == n {
                                slot[i] += d;
                            } else {
                                slot[0] += d;
                            }
                        }
                    });
                }
            }
            Op::Unary { op, x } => {
                let xv = nodes[x.0].value.data();
                let yv = node.value.data();
                acc(*x, &mut |slot| {
                    for i in 0..g.len() {
                        slot[i] += g[i]
                            * match op {
                                Unary::Relu => {
                                    if xv[i] > 0.0 {
                                        1.0
                                    } else {
                                        0.0
                                    }
                                }
                                Unary::Sigmoid => yv[i] * (1.0 - yv[i]),
                                Unary::Tanh => 1.0 - yv[i] * yv[i],
                                Unary::Square => 2.0 * xv[i],
                                Unary::Log => 1.0 / xv[i],
                                Unary::Exp => yv[i],
                            };
                    }
                });
            }
            Op::Scale { x, factor } => acc(*x, &mut |slot| {
                for (s, gi) in slot.iter_mut().zip(g) {
                    *s += gi * factor;
                }
            }),
            Op::Clamp { x, lo, hi } => {
                let xv = nodes[x.0].value.data();
                acc(*x, &mut |slot| {
                    for i in 0..g.len() {
                        if xv[i] >= *lo && xv[i] <= *hi {
                            slot[i] += g[i];
                        }
                    }
                })
            }
            Op::MatMul { a, b, m, k, p } => {
                let (ta, tb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                acc(*a, &mut |slot| kernels::matmul_nt_acc(g, tb, slot, *m, *k, *p));
                acc(*b, &mut |slot| kernels::matmul_tn_acc(ta, g, slot, *m, *k, *p));
            }
            Op::AddBias { x, bias } => {
                let tx = &nodes[x.0].value;
                let channel_axis = if tx.rank() == 1 { 0 } else { 1 };
                let inner: usize = tx.shape()[channel_axis + 1..].iter().product();
                let channels = tx.shape()[channel_axis];
                acc(*x, &mut |slot| {
                    for (s, gi) in slot.iter_mut().zip(g) {
                        *s += gi;
                    }
                });
                acc(*bias, &mut |slot| {
                    for (i, gi) in g.iter().enumerate() {
                        slot[(i / inner) % channels] += gi;
                    }
                });
            }
            Op::Reduce { x, axis, mean } => {
                let tx = &nodes[x.0].value;
                match axis {
                    None => {
                        let d = if *mean { g[0] / tx.len() as Real } else { g[0] };
                        acc(*x, &mut |slot| slot.iter_mut().for_each(|s| *s += d));
                    }
                    Some(ax) => {
                        let (outer, len, inner) = split_axis(tx.shape(), *ax);
                        let div = if *mean { len as Real } else { 1.0 };
                        acc(*x, &mut |slot| {
                            for o in 0..outer {
                                for l in 0..len {
                                    for i in 0..inner {
                                        slot[(o * len + l) * inner + i] += g[o * inner + i] / div;
                                    }
                                }
                            }
                        });
                    }
                }
            }
            Op::Reshape { x } => acc(*x, &mut |slot| {
                for (s, gi) in slot.iter_mut().zip(g) {
                    *s += gi;
                }
            }),
            Op::Conv2d { input, kernels, geo } => {
                let (ti, tk) = (nodes[input.0].value.data(), nodes[kernels.0].value.data());
                let mut gi = wants(*input).then(|| vec![0.0; ti.len()]);
                let mut gk = wants(*kernels).then(|| vec![0.0; tk.len()]);
                kernels::conv2d_backward(geo, ti, tk, g, gi.as_deref_mut(), gk.as_deref_mut());
                if let Some(gi) = gi {
                    acc(*input, &mut |slot| slot.iter_mut().zip(&gi).for_each(|(s, v)| *s += v));
                }
                if let Some(gk) = gk {
                    acc(*kernels, &mut |slot| slot.iter_mut().zip(&gk).for_each(|(s, v)| *s += v));
                }
            }
            Op::LogSoftmax { x } => {
                let y = node.value.data();
                let cols = *node.value.shape().last().unwrap();
                acc(*x, &mut |slot| {
                    for ((s_row, g_row), y_row) in
                        slot.chunks_mut(cols).zip(g.chunks(cols)).zip(y.chunks(cols))
                    {
                        let total: Real = g_row.iter().sum();
                        for j in 0..cols {
                            s_row[j] += g_row[j] - y_row[j].exp() * total;
                        }
                    }
                });
            }
            Op::Gather { x, indices } => {
                let cols = *nodes[x.0].value.shape().last().unwrap();
                acc(*x, &mut |slot| {
                    for (r, &i) in indices.iter().enumerate() {
                        slot[r * cols + i] += g[r];
                    }
                });
            }
            Op::Concat { parts } => {
                let mut offset = 0;
                for p in parts {
                    let len = nodes[p.0].value.len();
                    let piece = &g[offset..offset + len];
                    acc(*p, &mut |slot| slot.iter_mut().zip(piece).for_each(|(s, v)| *s += v));
                    offset += len;
                }
            }
        }
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}
