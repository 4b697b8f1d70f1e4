//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node holding its output value and, when any
//! input requires a gradient, the information its backward rule needs.
//! Because nodes only reference earlier nodes, walking the tape backwards is
//! a valid reverse topological order. [`Tape::backward`] consumes the tape.

use crate::conv::{conv_backward, conv_forward, ConvGeometry};
use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::{matmul_dims, matmul_kernel, matmul_nt_kernel, matmul_tn_kernel, softmax_rows, Tensor};

/// Handle to a node on a [`Tape`]. Only meaningful for the tape that issued it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise nonlinearity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Activation {
    #[default]
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Relu, Activation::Sigmoid, Activation::Tanh];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }

    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Sigmoid => T::one() / (T::one() + (-x).exp()),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Tanh => T::one() - y * y,
        }
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Affine(Var, T),
    Activation(Var, Activation),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    Narrow { x: Var, axis: usize, start: usize },
    Concat { inputs: Vec<Var>, axis: usize },
    Conv { x: Var, w: Var, b: Var, geom: ConvGeometry },
    Sum(Var),
    SoftmaxCe { logits: Var, targets: Vec<usize>, probs: Vec<T> },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddBias(..) => "add_bias",
            Op::Affine(..) => "affine",
            Op::Activation(..) => "activation",
            Op::Reshape(..) => "reshape",
            Op::Permute(..) => "permute",
            Op::Narrow { .. } => "narrow",
            Op::Concat { .. } => "concat",
            Op::Conv { .. } => "convolve_nd",
            Op::Sum(..) => "sum",
            Op::SoftmaxCe { .. } => "softmax_cross_entropy",
        }
    }
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Op<T>,
}

/// Recording context for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of the leaf tensors that required them, produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Grads<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Grads<T> {
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

/// `[outer, axis, inner]` factorisation of a shape around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers an input tensor.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    fn data(&self, var: Var) -> &[T] {
        self.nodes[var.0].value.data()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: op.name() });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value: Tensor::from_parts(shape, data),
            requires_grad,
            op: if requires_grad { op } else { Op::Leaf },
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::Shape {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k, n) = matmul_dims(self.shape(a), self.shape(b))?;
        let out = matmul_kernel(self.data(a), self.data(b), m, k, n);
        self.push(vec![m, n], out, Op::MatMul(a, b), &[a, b])
    }

    fn zip(&mut self, a: Var, b: Var, op: Op<T>, f: impl Fn(T, T) -> T) -> Result<Var> {
        self.same_shape(op.name(), a, b)?;
        let out = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| f(x, y)).collect();
        let shape = self.shape(a).to_vec();
        self.push(shape, out, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Adds a rank-1 `bias` along the last axis of `x`, the only broadcast supported.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let n = *self.shape(x).last().unwrap_or(&1);
        if self.shape(bias) != [n] {
            return Err(TensorError::Shape {
                op: "add_bias",
                lhs: self.shape(x).to_vec(),
                rhs: self.shape(bias).to_vec(),
            });
        }
        let b = self.data(bias);
        let out = self
            .data(x)
            .chunks(n)
            .flat_map(|row| row.iter().zip(b).map(|(&v, &bv)| v + bv))
            .collect();
        let shape = self.shape(x).to_vec();
        self.push(shape, out, Op::AddBias(x, bias), &[x, bias])
    }

    /// `scale · x + shift`
    pub fn affine(&mut self, x: Var, scale: T, shift: T) -> Result<Var> {
        let out = self.data(x).iter().map(|&v| scale * v + shift).collect();
        let shape = self.shape(x).to_vec();
        self.push(shape, out, Op::Affine(x, scale), &[x])
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Result<Var> {
        let out = self.data(x).iter().map(|&v| kind.apply(v)).collect();
        let shape = self.shape(x).to_vec();
        self.push(shape, out, Op::Activation(x, kind), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Relu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Tanh)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape.to_vec())?;
        let data = value.into_data();
        self.push(shape.to_vec(), data, Op::Reshape(x), &[x])
    }

    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let value = self.value(x).permute(axes)?;
        let shape = value.shape().to_vec();
        self.push(shape, value.into_data(), Op::Permute(x, axes.to_vec()), &[x])
    }

    /// Slice `start..start + len` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(TensorError::Index(format!(
                "narrow {start}..{} on axis {axis} of shape {shape:?}",
                start + len
            )));
        }
        let (outer, extent, inner) = split_axis(&shape, axis);
        let src = self.data(x);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * extent * inner + start * inner;
            out.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut new_shape = shape;
        new_shape[axis] = len;
        self.push(new_shape, out, Op::Narrow { x, axis, start }, &[x])
    }

    /// Joins tensors that agree on every axis except `axis`.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| TensorError::Contract("concat of zero tensors".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(TensorError::Index(format!("concat axis {axis} for shape {base:?}")));
        }
        let mut total = 0;
        for v in inputs {
            let s = self.shape(*v);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(TensorError::Shape {
                    op: "concat",
                    lhs: base,
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in inputs {
                let chunk = self.shape(*v)[axis] * inner;
                out.extend_from_slice(&self.data(*v)[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        self.push(
            shape,
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        )
    }

    /// Batched cross-correlation: `x [B, C_in, spatial...]`, `w [C_out, C_in, k...]`, `b [C_out]`.
    pub fn conv(&mut self, x: Var, w: Var, b: Var, stride: &[usize], padding: &[usize]) -> Result<Var> {
        let geom = ConvGeometry::resolve(self.shape(x), self.shape(w), stride, padding)?;
        if self.shape(b) != [geom.c_out] {
            return Err(TensorError::Shape {
                op: "convolve_nd bias",
                lhs: vec![geom.c_out],
                rhs: self.shape(b).to_vec(),
            });
        }
        let out = conv_forward(&geom, self.data(x), self.data(w), self.data(b));
        let shape = geom.output_shape();
        self.push(shape, out, Op::Conv { x, w, b, geom }, &[x, w, b])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let total = self.data(x).iter().copied().sum();
        self.push(Vec::new(), vec![total], Op::Sum(x), &[x])
    }

    /// Mean softmax cross-entropy over a `[B×C]` batch of logits.
    ///
    /// Returns the scalar loss node and the row-wise softmax probabilities.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<(Var, Tensor<T>)> {
        let shape = self.shape(logits).to_vec();
        if shape.len() != 2 || targets.len() != shape[0] {
            return Err(TensorError::Contract(format!(
                "softmax_cross_entropy expects [B×C] logits with B targets, got {shape:?} and {} targets",
                targets.len()
            )));
        }
        let (b, c) = (shape[0], shape[1]);
        if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
            return Err(TensorError::Index(format!("target class {bad} out of range for {c} classes")));
        }
        let probs = softmax_rows(self.value(logits))?;
        let mut loss = T::zero();
        for (row, &t) in self.data(logits).chunks(c).zip(targets) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
            loss += lse - row[t];
        }
        loss /= T::from_usize(b).unwrap();
        let op = Op::SoftmaxCe {
            logits,
            targets: targets.to_vec(),
            probs: probs.data().to_vec(),
        };
        let var = self.push(Vec::new(), vec![loss], op, &[logits])?;
        Ok((var, probs))
    }

    /// Back-propagates from the scalar `loss`, consuming the tape.
    ///
    /// Gradients reaching a node through several paths are summed. Every leaf
    /// registered with `requires_grad` receives a gradient (zeros when the
    /// loss does not depend on it).
    pub fn backward(self, loss: Var) -> Result<Grads<T>> {
        let Tape { nodes } = self;
        let root = nodes
            .get(loss.0)
            .ok_or_else(|| TensorError::Contract("loss does not belong to this tape".into()))?;
        if root.value.len() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..nodes.len()).map(|_| None).collect();
        if root.requires_grad {
            grads[loss.0] = Some(vec![T::one()]);
        }
        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let name = node.op.name();
            let mut contributions: Vec<(Var, Vec<T>)> = Vec::with_capacity(2);
            let val = |v: Var| nodes[v.0].value.data();
            let shp = |v: Var| nodes[v.0].value.shape();
            let needs = |v: Var| nodes[v.0].requires_grad;
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    let (m, k, n) = (shp(*a)[0], shp(*a)[1], shp(*b)[1]);
                    if needs(*a) {
                        contributions.push((*a, matmul_nt_kernel(&g, val(*b), m, n, k)));
                    }
                    if needs(*b) {
                        contributions.push((*b, matmul_tn_kernel(val(*a), &g, m, k, n)));
                    }
                }
                Op::Add(a, b) => {
                    contributions.push((*a, g.clone()));
                    contributions.push((*b, g));
                }
                Op::Sub(a, b) => {
                    contributions.push((*b, g.iter().map(|&v| -v).collect()));
                    contributions.push((*a, g));
                }
                Op::Mul(a, b) => {
                    if needs(*a) {
                        contributions.push((*a, g.iter().zip(val(*b)).map(|(&d, &y)| d * y).collect()));
                    }
                    if needs(*b) {
                        contributions.push((*b, g.iter().zip(val(*a)).map(|(&d, &x)| d * x).collect()));
                    }
                }
                Op::AddBias(x, bias) => {
                    if needs(*bias) {
                        let n = shp(*bias)[0];
                        let mut gb = vec![T::zero(); n];
                        for row in g.chunks(n) {
                            for (acc, &d) in gb.iter_mut().zip(row) {
                                *acc += d;
                            }
                        }
                        contributions.push((*bias, gb));
                    }
                    contributions.push((*x, g));
                }
                Op::Affine(x, scale) => {
                    contributions.push((*x, g.iter().map(|&d| d * *scale).collect()));
                }
                Op::Activation(x, kind) => {
                    let y = node.value.data();
                    contributions.push((
                        *x,
                        g.iter().zip(y).map(|(&d, &yv)| d * kind.derivative_from_output(yv)).collect(),
                    ));
                }
                Op::Reshape(x) => contributions.push((*x, g)),
                Op::Permute(x, axes) => {
                    let mut inverse = vec![0; axes.len()];
                    for (i, &a) in axes.iter().enumerate() {
                        inverse[a] = i;
                    }
                    let gt = Tensor::from_parts(node.value.shape().to_vec(), g).permute(&inverse)?;
                    contributions.push((*x, gt.into_data()));
                }
                Op::Narrow { x, axis, start } => {
                    let (outer, extent, inner) = split_axis(shp(*x), *axis);
                    let len = node.value.shape()[*axis];
                    let mut gx = vec![T::zero(); outer * extent * inner];
                    for o in 0..outer {
                        let dst = o * extent * inner + start * inner;
                        gx[dst..dst + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                    }
                    contributions.push((*x, gx));
                }
                Op::Concat { inputs, axis } => {
                    let (outer, total, inner) = split_axis(node.value.shape(), *axis);
                    let mut offset = 0;
                    for v in inputs {
                        let extent = shp(*v)[*axis];
                        if needs(*v) {
                            let mut gv = Vec::with_capacity(outer * extent * inner);
                            for o in 0..outer {
                                let src = (o * total + offset) * inner;
                                gv.extend_from_slice(&g[src..src + extent * inner]);
                            }
                            contributions.push((*v, gv));
                        }
                        offset += extent;
                    }
                }
                Op::Conv { x, w, b, geom } => {
                    let (gx, gw, gb) = conv_backward(geom, val(*x), val(*w), &g);
                    contributions.push((*x, gx));
                    contributions.push((*w, gw));
                    contributions.push((*b, gb));
                }
                Op::Sum(x) => {
                    let n = nodes[x.0].value.len();
                    contributions.push((*x, vec![g[0]; n]));
                }
                Op::SoftmaxCe { logits, targets, probs } => {
                    let c = shp(*logits)[1];
                    let scale = g[0] / T::from_usize(targets.len()).unwrap();
                    let mut gl: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                    for (row, &t) in targets.iter().enumerate() {
                        gl[row * c + t] -= scale;
                    }
                    contributions.push((*logits, gl));
                }
            }
            for (v, contrib) in contributions {
                if !needs(v) {
                    continue;
                }
                if contrib.iter().any(|c| !c.is_finite()) {
                    return Err(TensorError::NonFinite { op: name });
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, &c)| *a += c),
                    slot @ None => *slot = Some(contrib),
                }
            }
        }
        let grads = nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| match (&node.op, node.requires_grad) {
                (Op::Leaf, true) => Some(Tensor::from_parts(
                    node.value.shape().to_vec(),
                    g.unwrap_or_else(|| vec![T::zero(); node.value.len()]),
                )),
                _ => None,
            })
            .collect();
        Ok(Grads { grads })
    }
}
