//! Tape-based reverse-mode differentiation over [`Tensor2`] values.
//!
//! Every operation appends a node holding its forward value. Nodes are
//! created in topological order, so [`Tape::backward`] is a single reverse
//! sweep. Operations that are piecewise constant in some input (the ReLU
//! mask, for instance) propagate nothing to that input, which is what makes
//! the unrolled input gradients used by the gradient penalty differentiable
//! with respect to the critic weights.

use std::collections::BTreeMap;

use super::optim::ParamSet;
use super::tensor::{gemm, Tensor2};
use crate::error::{Error, Result};

/// Floor applied before taking logarithms.
pub const LOG_CLAMP: f64 = 1e-12;

pub type NodeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Training,
    Inference,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    MulRow(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Powf(NodeId, f64),
    ColMean(NodeId),
    RowSum(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    Relu(NodeId),
    LeakyRelu(NodeId, f64),
    Tanh(NodeId),
    /// `g * (pre > 0 ? 1 : slope)`; constant in `pre`.
    ReluMask { grad: NodeId, pre: NodeId, slope: f64 },
    Softmax(NodeId),
    Log(NodeId),
    Concat(Vec<NodeId>),
    SliceCols(NodeId, usize),
    Reshape(NodeId),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::MulRow(..) => "mul_row",
            Op::Scale(..) => "scale",
            Op::AddScalar(_) => "add_scalar",
            Op::Powf(..) => "powf",
            Op::ColMean(_) => "col_mean",
            Op::RowSum(_) => "row_sum",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Relu(_) => "relu",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Tanh(_) => "tanh",
            Op::ReluMask { .. } => "relu_mask",
            Op::Softmax(_) => "softmax",
            Op::Log(_) => "log",
            Op::Concat(_) => "concat",
            Op::SliceCols(..) => "slice_cols",
            Op::Reshape(_) => "reshape",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor2,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation graph for one forward pass.
#[derive(Clone, Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    mode: Mode,
    params: BTreeMap<String, NodeId>,
    buffer_updates: Vec<(String, Tensor2)>,
}

/// Result of a backward sweep.
#[derive(Debug)]
pub struct Gradients {
    by_node: Vec<Option<Tensor2>>,
    params: BTreeMap<String, Tensor2>,
}

impl Gradients {
    /// Gradient for a parameter block, if it was placed on the tape.
    pub fn param(&self, name: &str) -> Option<&Tensor2> {
        self.params.get(name)
    }

    pub fn params(&self) -> &BTreeMap<String, Tensor2> {
        &self.params
    }

    pub fn into_params(self) -> BTreeMap<String, Tensor2> {
        self.params
    }

    /// Gradient with respect to any node; `None` when the node was not reached.
    pub fn node(&self, id: NodeId) -> Option<&Tensor2> {
        self.by_node.get(id).and_then(Option::as_ref)
    }
}

impl Tape {
    pub fn new(mode: Mode) -> Self {
        Self {
            nodes: Vec::new(),
            mode,
            params: BTreeMap::new(),
            buffer_updates: Vec::new(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor2 {
        &self.nodes[id].value
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id].value.shape()
    }

    fn push(&mut self, value: Tensor2, op: Op, requires_grad: bool) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite(op.name().to_string()));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(self.nodes.len() - 1)
    }

    fn push_unary(&mut self, value: Tensor2, op: Op, input: NodeId) -> Result<NodeId> {
        let rg = self.nodes[input].requires_grad;
        self.push(value, op, rg)
    }

    fn push_binary(&mut self, value: Tensor2, op: Op, a: NodeId, b: NodeId) -> Result<NodeId> {
        let rg = self.nodes[a].requires_grad || self.nodes[b].requires_grad;
        self.push(value, op, rg)
    }

    /// A constant: no gradient flows into it.
    pub fn constant(&mut self, value: Tensor2) -> Result<NodeId> {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf whose gradient is tracked (inputs differentiated against).
    pub fn variable(&mut self, value: Tensor2) -> Result<NodeId> {
        self.push(value, Op::Leaf, true)
    }

    /// Places a trainable block on the tape. Repeated calls for the same
    /// name return the same node so gradients accumulate across uses.
    pub fn param(&mut self, params: &ParamSet, name: &str) -> Result<NodeId> {
        if let Some(&id) = self.params.get(name) {
            return Ok(id);
        }
        let value = params
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter block {name}")))?
            .clone();
        let id = self.push(value, Op::Leaf, true)?;
        self.params.insert(name.to_string(), id);
        Ok(id)
    }

    /// Queues a non-trainable buffer write (batch-norm running statistics).
    pub fn record_buffer(&mut self, name: String, value: Tensor2) {
        self.buffer_updates.push((name, value));
    }

    pub fn take_buffer_updates(&mut self) -> Vec<(String, Tensor2)> {
        std::mem::take(&mut self.buffer_updates)
    }

    fn check_same(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn check_row(&self, op: &'static str, a: NodeId, row: NodeId) -> Result<()> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        if sr != (1, sa.1) {
            return Err(Error::shape(op, format!("{sa:?} with row {sr:?}")));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        self.push_binary(v, Op::MatMul(a, b), a, b)
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).transpose();
        self.push_unary(v, Op::Transpose(a), a)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_same("add", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push_binary(v, Op::Add(a, b), a, b)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_same("sub", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push_binary(v, Op::Sub(a, b), a, b)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_same("mul", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push_binary(v, Op::Mul(a, b), a, b)
    }

    /// Adds a `1 x cols` row to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        self.check_row("add_row", a, row)?;
        let mut v = self.value(a).clone();
        let r = self.value(row).data().to_vec();
        for i in 0..v.rows() {
            for (x, b) in v.row_mut(i).iter_mut().zip(&r) {
                *x += b;
            }
        }
        self.push_binary(v, Op::AddRow(a, row), a, row)
    }

    /// Multiplies every row of `a` elementwise by a `1 x cols` row.
    pub fn mul_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        self.check_row("mul_row", a, row)?;
        let mut v = self.value(a).clone();
        let r = self.value(row).data().to_vec();
        for i in 0..v.rows() {
            for (x, b) in v.row_mut(i).iter_mut().zip(&r) {
                *x *= b;
            }
        }
        self.push_binary(v, Op::MulRow(a, row), a, row)
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        let v = self.value(a).map(|x| x * factor);
        self.push_unary(v, Op::Scale(a, factor), a)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let v = self.value(a).map(|x| x + c);
        self.push_unary(v, Op::AddScalar(a), a)
    }

    pub fn powf(&mut self, a: NodeId, p: f64) -> Result<NodeId> {
        let v = self.value(a).map(|x| x.powf(p));
        self.push_unary(v, Op::Powf(a, p), a)
    }

    pub fn col_mean(&mut self, a: NodeId) -> Result<NodeId> {
        if self.shape(a).0 == 0 {
            return Err(Error::shape("col_mean", "no rows"));
        }
        let v = self.value(a).col_mean();
        self.push_unary(v, Op::ColMean(a), a)
    }

    pub fn row_sum(&mut self, a: NodeId) -> Result<NodeId> {
        let t = self.value(a);
        let data = (0..t.rows()).map(|r| t.row(r).iter().sum()).collect();
        let v = Tensor2::from_vec(t.rows(), 1, data)?;
        self.push_unary(v, Op::RowSum(a), a)
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let v = Tensor2::scalar(self.value(a).sum());
        self.push_unary(v, Op::Sum(a), a)
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        if self.value(a).data().is_empty() {
            return Err(Error::shape("mean", "empty tensor"));
        }
        let v = Tensor2::scalar(self.value(a).mean());
        self.push_unary(v, Op::Mean(a), a)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push_unary(v, Op::Relu(a), a)
    }

    pub fn leaky_relu(&mut self, a: NodeId, alpha: f64) -> Result<NodeId> {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { alpha * x });
        self.push_unary(v, Op::LeakyRelu(a, alpha), a)
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(f64::tanh);
        self.push_unary(v, Op::Tanh(a), a)
    }

    /// Gates `grad` by the activation pattern of `pre`: `grad` where
    /// `pre > 0`, `slope * grad` elsewhere.
    pub fn relu_mask(&mut self, grad: NodeId, pre: NodeId, slope: f64) -> Result<NodeId> {
        self.check_same("relu_mask", grad, pre)?;
        let v = self
            .value(grad)
            .zip_map(self.value(pre), |g, p| if p > 0.0 { g } else { slope * g });
        let rg = self.nodes[grad].requires_grad;
        self.push(v, Op::ReluMask { grad, pre, slope }, rg)
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let mut v = self.value(a).clone();
        for r in 0..v.rows() {
            let row = v.row_mut(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                total += *x;
            }
            row.iter_mut().for_each(|x| *x /= total);
        }
        self.push_unary(v, Op::Softmax(a), a)
    }

    /// Natural log with the argument clamped below at [`LOG_CLAMP`].
    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(|x| x.max(LOG_CLAMP).ln());
        self.push_unary(v, Op::Log(a), a)
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let values: Vec<&Tensor2> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Tensor2::concat_cols(&values)?;
        let rg = parts.iter().any(|&p| self.nodes[p].requires_grad);
        self.push(v, Op::Concat(parts.to_vec()), rg)
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let cols = self.shape(a).1;
        if start + len > cols {
            return Err(Error::shape(
                "slice_cols",
                format!("[{start}, {}) of {cols}", start + len),
            ));
        }
        let v = self.value(a).slice_cols(start, len);
        self.push_unary(v, Op::SliceCols(a, start), a)
    }

    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        let v = self.value(a).clone().reshape(rows, cols)?;
        self.push_unary(v, Op::Reshape(a), a)
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if loss >= self.nodes.len() {
            return Err(Error::DetachedGraph);
        }
        let (rows, cols) = self.shape(loss);
        if (rows, cols) != (1, 1) {
            return Err(Error::NonScalarLoss { rows, cols });
        }
        if !self.params.values().any(|&p| p <= loss) || !self.nodes[loss].requires_grad {
            return Err(Error::DetachedGraph);
        }

        let mut grads: Vec<Option<Tensor2>> = vec![None; loss + 1];
        grads[loss] = Some(Tensor2::scalar(1.0));
        for id in (0..=loss).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if node.requires_grad {
                self.propagate(id, &g, &mut grads);
            }
            grads[id] = Some(g);
        }

        let params = self
            .params
            .iter()
            .map(|(name, &id)| {
                let g = grads
                    .get(id)
                    .and_then(Clone::clone)
                    .unwrap_or_else(|| {
                        let (r, c) = self.shape(id);
                        Tensor2::zeros(r, c)
                    });
                (name.clone(), g)
            })
            .collect();
        Ok(Gradients {
            by_node: grads,
            params,
        })
    }

    fn propagate(&self, id: NodeId, g: &Tensor2, grads: &mut [Option<Tensor2>]) {
        let node = &self.nodes[id];
        let val = |i: NodeId| &self.nodes[i].value;
        let wants = |i: NodeId| self.nodes[i].requires_grad;
        let mut acc = |i: NodeId, t: Tensor2| match &mut grads[i] {
            Some(existing) => existing.add_assign(&t),
            slot => *slot = Some(t),
        };

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                if wants(a) {
                    let mut ga = Tensor2::zeros(val(a).rows(), val(a).cols());
                    gemm(g, false, val(b), true, 1.0, 0.0, &mut ga);
                    acc(a, ga);
                }
                if wants(b) {
                    let mut gb = Tensor2::zeros(val(b).rows(), val(b).cols());
                    gemm(val(a), true, g, false, 1.0, 0.0, &mut gb);
                    acc(b, gb);
                }
            }
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::Add(a, b) => {
                if wants(*a) {
                    acc(*a, g.clone());
                }
                if wants(*b) {
                    acc(*b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if wants(*a) {
                    acc(*a, g.clone());
                }
                if wants(*b) {
                    acc(*b, g.map(|x| -x));
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    acc(*a, g.zip_map(val(*b), |x, y| x * y));
                }
                if wants(*b) {
                    acc(*b, g.zip_map(val(*a), |x, y| x * y));
                }
            }
            Op::AddRow(a, row) => {
                if wants(*a) {
                    acc(*a, g.clone());
                }
                if wants(*row) {
                    let mut gr = Tensor2::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, x) in gr.data_mut().iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    acc(*row, gr);
                }
            }
            Op::MulRow(a, row) => {
                let rv = val(*row).data();
                if wants(*a) {
                    let mut ga = g.clone();
                    for r in 0..ga.rows() {
                        for (x, s) in ga.row_mut(r).iter_mut().zip(rv) {
                            *x *= s;
                        }
                    }
                    acc(*a, ga);
                }
                if wants(*row) {
                    let av = val(*a);
                    let mut gr = Tensor2::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for ((o, x), y) in gr.data_mut().iter_mut().zip(g.row(r)).zip(av.row(r)) {
                            *o += x * y;
                        }
                    }
                    acc(*row, gr);
                }
            }
            Op::Scale(a, f) => acc(*a, g.map(|x| x * f)),
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::Powf(a, p) => {
                let p = *p;
                acc(*a, g.zip_map(val(*a), |x, y| x * p * y.powf(p - 1.0)));
            }
            Op::ColMean(a) => {
                let n = val(*a).rows();
                let mut ga = Tensor2::zeros(n, g.cols());
                let scaled: Vec<f64> = g.data().iter().map(|x| x / n as f64).collect();
                for r in 0..n {
                    ga.row_mut(r).copy_from_slice(&scaled);
                }
                acc(*a, ga);
            }
            Op::RowSum(a) => {
                let (n, c) = val(*a).shape();
                let mut ga = Tensor2::zeros(n, c);
                for r in 0..n {
                    let gr = g.get(r, 0);
                    ga.row_mut(r).iter_mut().for_each(|x| *x = gr);
                }
                acc(*a, ga);
            }
            Op::Sum(a) => {
                let (n, c) = val(*a).shape();
                acc(*a, Tensor2::filled(n, c, g.item()));
            }
            Op::Mean(a) => {
                let (n, c) = val(*a).shape();
                acc(*a, Tensor2::filled(n, c, g.item() / (n * c) as f64));
            }
            Op::Relu(a) => acc(*a, g.zip_map(val(*a), |x, p| if p > 0.0 { x } else { 0.0 })),
            Op::LeakyRelu(a, alpha) => {
                let alpha = *alpha;
                acc(
                    *a,
                    g.zip_map(val(*a), |x, p| if p > 0.0 { x } else { alpha * x }),
                );
            }
            Op::Tanh(a) => acc(*a, g.zip_map(&node.value, |x, y| x * (1.0 - y * y))),
            Op::ReluMask { grad, pre, slope } => {
                let slope = *slope;
                if wants(*grad) {
                    acc(
                        *grad,
                        g.zip_map(val(*pre), |x, p| if p > 0.0 { x } else { slope * x }),
                    );
                }
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let mut ga = Tensor2::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                    for ((o, gi), yi) in ga.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                        *o = yi * (gi - dot);
                    }
                }
                acc(*a, ga);
            }
            Op::Log(a) => acc(
                *a,
                g.zip_map(val(*a), |x, p| if p > LOG_CLAMP { x / p } else { 0.0 }),
            ),
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).cols();
                    if wants(p) {
                        acc(p, g.slice_cols(offset, w));
                    }
                    offset += w;
                }
            }
            Op::SliceCols(a, start) => {
                let (n, c) = val(*a).shape();
                let mut ga = Tensor2::zeros(n, c);
                for r in 0..n {
                    ga.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                acc(*a, ga);
            }
            Op::Reshape(a) => {
                let (n, c) = val(*a).shape();
                let ga = g.clone().reshape(n, c).expect("reshape preserves size");
                acc(*a, ga);
            }
        }
    }
}
