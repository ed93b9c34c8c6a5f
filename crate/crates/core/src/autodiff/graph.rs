use crate::autodiff::kernels::{self, ConvGeometry};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Index of a node in a [`Graph`]. Ids are handed out in creation order, so
/// every node's inputs have smaller ids than the node itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Pointwise operations accepted by [`Graph::elementwise`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Elementwise {
    Sigmoid,
    Tanh,
    Relu,
    Add,
    Sub,
    Mul,
    Scale(f64),
}

impl Elementwise {
    fn arity(self) -> usize {
        match self {
            Elementwise::Add | Elementwise::Sub | Elementwise::Mul => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Pointwise(Elementwise, NodeId),
    Binary(Elementwise, NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Conv2d {
        input: NodeId,
        kernel: NodeId,
        geo: ConvGeometry,
    },
    AddChannelBias(NodeId, NodeId),
    AddRowBias(NodeId, NodeId),
    /// Concatenation along the leading axis (channels or rows).
    Concat(Vec<NodeId>),
    Reshape(NodeId),
    PoolAvg(NodeId, usize),
    GlobalPoolAvg(NodeId),
    BceWithLogits(NodeId, Tensor),
    Sum(NodeId),
}

impl Op {
    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf => vec![],
            Op::Pointwise(_, a)
            | Op::Reshape(a)
            | Op::PoolAvg(a, _)
            | Op::GlobalPoolAvg(a)
            | Op::BceWithLogits(a, _)
            | Op::Sum(a) => vec![*a],
            Op::Binary(_, a, b)
            | Op::MatMul(a, b)
            | Op::AddChannelBias(a, b)
            | Op::AddRowBias(a, b) => vec![*a, *b],
            Op::Conv2d { input, kernel, .. } => vec![*input, *kernel],
            Op::Concat(parts) => parts.clone(),
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
    is_param: bool,
}

/// Append-only computation graph for reverse-mode differentiation.
///
/// Leaves are created with [`Graph::param`] (differentiated) or
/// [`Graph::constant`] (not). Every operation evaluates eagerly and records
/// enough to run [`Graph::backward`] later. A graph is single-threaded; use
/// one graph per worker.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.0).and_then(Option::take)
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

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Input node ids of `id`, in argument order.
    pub fn inputs(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes[id.0].op.inputs()
    }

    pub fn is_param(&self, id: NodeId) -> bool {
        self.nodes[id.0].is_param
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        let requires_grad = op.inputs().iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
            is_param: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn leaf(&mut self, value: Tensor, param: bool) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            requires_grad: param,
            is_param: param,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, false)
    }

    /// Apply a pointwise operation. Unary kinds take one operand, binary kinds
    /// two operands of equal shape.
    pub fn elementwise(&mut self, kind: Elementwise, operands: &[NodeId]) -> Result<NodeId> {
        if operands.len() != kind.arity() {
            return Err(Error::contract(format!(
                "{kind:?} takes {} operand(s), got {}",
                kind.arity(),
                operands.len()
            )));
        }
        if let [a, b] = *operands {
            let value = {
                let (x, y) = (self.value(a), self.value(b));
                match kind {
                    Elementwise::Add => x.zip_map(y, |p, q| p + q)?,
                    Elementwise::Sub => x.zip_map(y, |p, q| p - q)?,
                    _ => x.zip_map(y, |p, q| p * q)?,
                }
            };
            return Ok(self.push(Op::Binary(kind, a, b), value));
        }
        let a = operands[0];
        let x = self.value(a);
        let value = match kind {
            Elementwise::Sigmoid => x.map(kernels::sigmoid),
            Elementwise::Tanh => x.map(f64::tanh),
            Elementwise::Relu => x.map(|v| v.max(0.0)),
            Elementwise::Scale(c) => x.map(|v| v * c),
            _ => unreachable!("binary kinds handled above"),
        };
        Ok(self.push(Op::Pointwise(kind, a), value))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.elementwise(Elementwise::Sigmoid, &[a]).expect("unary")
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.elementwise(Elementwise::Tanh, &[a]).expect("unary")
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.elementwise(Elementwise::Relu, &[a]).expect("unary")
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        self.elementwise(Elementwise::Scale(factor), &[a])
            .expect("unary")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(Elementwise::Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(Elementwise::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(Elementwise::Mul, &[a, b])
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (x, y) = (self.value(a), self.value(b));
        if x.rank() != 2 || y.rank() != 2 || x.shape()[1] != y.shape()[0] {
            return Err(Error::shape(format!(
                "matmul: {:?} x {:?}",
                x.shape(),
                y.shape()
            )));
        }
        let value = kernels::matmul(x, y);
        Ok(self.push(Op::MatMul(a, b), value))
    }

    /// 2-D cross-correlation with zero padding. `input` is `[Cin, H, W]`,
    /// `kernel` is `[Cout, Cin, kh, kw]`.
    pub fn conv2d(
        &mut self,
        input: NodeId,
        kernel: NodeId,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId> {
        let (x, k) = (self.value(input), self.value(kernel));
        let geo = conv_geometry(x.shape(), k.shape(), stride, pad)?;
        let value = kernels::conv2d(x, k, &geo);
        Ok(self.push(Op::Conv2d { input, kernel, geo }, value))
    }

    /// Add `bias[c]` to every spatial position of channel `c` of `[C, H, W]`.
    pub fn add_channel_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if xv.rank() != 3 || bv.shape() != [xv.shape()[0]] {
            return Err(Error::shape(format!(
                "channel bias {:?} for {:?}",
                bv.shape(),
                xv.shape()
            )));
        }
        let plane = xv.shape()[1] * xv.shape()[2];
        let mut out = xv.clone();
        for (c, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
            let b = bv.data()[c];
            chunk.iter_mut().for_each(|v| *v += b);
        }
        Ok(self.push(Op::AddChannelBias(x, bias), out))
    }

    /// Add `bias[j]` to column `j` of every row of `[M, N]`.
    pub fn add_row_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if xv.rank() != 2 || bv.shape() != [xv.shape()[1]] {
            return Err(Error::shape(format!(
                "row bias {:?} for {:?}",
                bv.shape(),
                xv.shape()
            )));
        }
        let mut out = xv.clone();
        for row in out.data_mut().chunks_mut(bv.len()) {
            row.iter_mut().zip(bv.data()).for_each(|(v, b)| *v += b);
        }
        Ok(self.push(Op::AddRowBias(x, bias), out))
    }

    /// Concatenate `[Ci, H, W]` tensors along the channel axis, in argument order.
    pub fn concat_channels(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.concat_leading(parts, 3)
    }

    /// Concatenate `[Mi, N]` matrices along the row axis.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.concat_leading(parts, 2)
    }

    fn concat_leading(&mut self, parts: &[NodeId], rank: usize) -> Result<NodeId> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat of zero tensors"))?;
        let tail = self.value(*first).shape()[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if v.rank() != rank || v.shape()[1..] != tail[..] {
                return Err(Error::shape(format!(
                    "concat: {:?} does not match trailing dims {tail:?}",
                    v.shape()
                )));
            }
            lead += v.shape()[0];
            data.extend_from_slice(v.data());
        }
        let mut shape = vec![lead];
        shape.extend(tail);
        Ok(self.push(Op::Concat(parts.to_vec()), Tensor::from_parts(shape, data)))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let value = self.value(a).reshape(shape)?;
        Ok(self.push(Op::Reshape(a), value))
    }

    /// Non-overlapping `window × window` mean pooling of `[C, H, W]`.
    pub fn pool_avg(&mut self, a: NodeId, window: usize) -> Result<NodeId> {
        let x = self.value(a);
        if x.rank() != 3
            || window == 0
            || x.shape()[1] % window != 0
            || x.shape()[2] % window != 0
        {
            return Err(Error::shape(format!(
                "pool window {window} does not tile {:?}",
                x.shape()
            )));
        }
        let value = kernels::pool_avg(x, window);
        Ok(self.push(Op::PoolAvg(a, window), value))
    }

    /// Mean over all spatial positions of `[C, H, W]`, giving `[C]`.
    pub fn global_pool_avg(&mut self, a: NodeId) -> Result<NodeId> {
        let x = self.value(a);
        if x.rank() != 3 {
            return Err(Error::shape(format!(
                "global pool expects [C,H,W], got {:?}",
                x.shape()
            )));
        }
        let value = kernels::global_pool_avg(x);
        Ok(self.push(Op::GlobalPoolAvg(a), value))
    }

    /// Mean binary cross-entropy between `logits` and 0/1 `targets` of the
    /// same shape, in the overflow-free form.
    pub fn bce_with_logits(&mut self, logits: NodeId, targets: &Tensor) -> Result<NodeId> {
        let z = self.value(logits);
        if z.shape() != targets.shape() {
            return Err(Error::shape(format!(
                "bce: logits {:?} vs targets {:?}",
                z.shape(),
                targets.shape()
            )));
        }
        if let Some(bad) = targets.data().iter().find(|&&t| t != 0.0 && t != 1.0) {
            return Err(Error::domain(format!("bce target {bad} is not 0 or 1")));
        }
        let total: f64 = z
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&z, &t)| kernels::bce_term(z, t))
            .sum();
        let value = Tensor::scalar(total / z.len() as f64);
        Ok(self.push(Op::BceWithLogits(logits, targets.clone()), value))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(Op::Sum(a), value)
    }

    /// Reverse-mode accumulation from a scalar `root`.
    ///
    /// The root's own gradient is 1. Gradients from multiple consumers of a
    /// node are summed. Every parameter leaf gets an entry, zero if it does
    /// not influence `root`.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        let root_value = self
            .nodes
            .get(root.0)
            .ok_or_else(|| Error::contract(format!("unknown root node {}", root.0)))?
            .value
            .clone();
        if root_value.len() != 1 {
            return Err(Error::contract(format!(
                "backward root must be scalar, got shape {:?}",
                root_value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(root_value.map(|_| 1.0));

        for id in (0..=root.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            for (input, contribution) in self.local_gradients(node, &g) {
                accumulate(&mut grads, input, contribution);
            }
            grads[id] = Some(g);
        }

        for (id, node) in self.nodes.iter().enumerate() {
            if node.is_param && grads[id].is_none() {
                grads[id] = Some(node.value.map(|_| 0.0));
            }
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Vector-Jacobian products of `node` for each input that needs a gradient.
    fn local_gradients(&self, node: &Node, g: &Tensor) -> Vec<(NodeId, Tensor)> {
        let mut out = Vec::with_capacity(2);
        match &node.op {
            Op::Leaf => {}
            Op::Pointwise(kind, a) => {
                let y = &node.value;
                let local = match kind {
                    Elementwise::Sigmoid => zip(g, y, |g, y| g * y * (1.0 - y)),
                    Elementwise::Tanh => zip(g, y, |g, y| g * (1.0 - y * y)),
                    Elementwise::Relu => {
                        zip(g, self.value(*a), |g, x| if x > 0.0 { g } else { 0.0 })
                    }
                    Elementwise::Scale(c) => g.map(|v| v * c),
                    _ => unreachable!("binary kind in pointwise node"),
                };
                out.push((*a, local));
            }
            Op::Binary(kind, a, b) => {
                let (a, b) = (*a, *b);
                match kind {
                    Elementwise::Add => {
                        out.push((a, g.clone()));
                        out.push((b, g.clone()));
                    }
                    Elementwise::Sub => {
                        out.push((a, g.clone()));
                        out.push((b, g.map(|v| -v)));
                    }
                    _ => {
                        if self.wants(a) {
                            out.push((a, zip(g, self.value(b), |g, y| g * y)));
                        }
                        if self.wants(b) {
                            out.push((b, zip(g, self.value(a), |g, x| g * x)));
                        }
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (ga, gb) = kernels::matmul_backward(self.value(*a), self.value(*b), g);
                out.push((*a, ga));
                out.push((*b, gb));
            }
            Op::Conv2d { input, kernel, geo } => {
                let (gi, gk) = kernels::conv2d_backward(
                    self.value(*input),
                    self.value(*kernel),
                    g,
                    geo,
                    self.wants(*input),
                    self.wants(*kernel),
                );
                out.extend(gi.map(|t| (*input, t)));
                out.extend(gk.map(|t| (*kernel, t)));
            }
            Op::AddChannelBias(x, b) => {
                let plane = g.len() / self.value(*b).len();
                let gb = g.data().chunks(plane).map(|c| c.iter().sum()).collect();
                out.push((*x, g.clone()));
                out.push((*b, Tensor::from_parts(self.value(*b).shape().to_vec(), gb)));
            }
            Op::AddRowBias(x, b) => {
                let n = self.value(*b).len();
                let mut gb = vec![0.0; n];
                for row in g.data().chunks(n) {
                    gb.iter_mut().zip(row).for_each(|(s, v)| *s += v);
                }
                out.push((*x, g.clone()));
                out.push((*b, Tensor::from_parts(vec![n], gb)));
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let v = self.value(p);
                    let piece = g.data()[offset..offset + v.len()].to_vec();
                    offset += v.len();
                    out.push((p, Tensor::from_parts(v.shape().to_vec(), piece)));
                }
            }
            Op::Reshape(a) => {
                let shape = self.value(*a).shape().to_vec();
                out.push((*a, Tensor::from_parts(shape, g.data().to_vec())));
            }
            Op::PoolAvg(a, window) => {
                let shape = self.value(*a).shape();
                out.push((*a, kernels::pool_avg_backward(shape, g, *window)));
            }
            Op::GlobalPoolAvg(a) => {
                let x = self.value(*a);
                let plane = x.len() / x.shape()[0];
                let data = g
                    .data()
                    .iter()
                    .flat_map(|&v| std::iter::repeat_n(v / plane as f64, plane))
                    .collect();
                out.push((*a, Tensor::from_parts(x.shape().to_vec(), data)));
            }
            Op::BceWithLogits(a, targets) => {
                let z = self.value(*a);
                let scale = g.data()[0] / z.len() as f64;
                let local = zip(z, targets, |z, t| (kernels::sigmoid(z) - t) * scale);
                out.push((*a, local));
            }
            Op::Sum(a) => {
                let x = self.value(*a);
                out.push((*a, x.map(|_| g.data()[0])));
            }
        }
        out.retain(|(id, _)| self.wants(*id));
        out
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    a.zip_map(b, f).expect("shapes fixed at graph construction")
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, contribution: Tensor) {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&contribution),
        slot => *slot = Some(contribution),
    }
}

pub(crate) fn conv_geometry(
    input: &[usize],
    kernel: &[usize],
    stride: usize,
    pad: usize,
) -> Result<ConvGeometry> {
    let err = |why: &str| {
        Error::shape(format!(
            "conv2d input {input:?} kernel {kernel:?} stride {stride} pad {pad}: {why}"
        ))
    };
    let ([cin, h, w], [cout, kcin, kh, kw]) = (input, kernel) else {
        return Err(err("expected [Cin,H,W] and [Cout,Cin,kh,kw]"));
    };
    if stride == 0 {
        return Err(err("stride must be at least 1"));
    }
    if kcin != cin {
        return Err(err("channel mismatch"));
    }
    if *kh > h + 2 * pad || *kw > w + 2 * pad {
        return Err(err("kernel larger than padded input"));
    }
    Ok(ConvGeometry {
        cin: *cin,
        h: *h,
        w: *w,
        cout: *cout,
        kh: *kh,
        kw: *kw,
        stride,
        pad,
        oh: (h + 2 * pad - kh) / stride + 1,
        ow: (w + 2 * pad - kw) / stride + 1,
    })
}
