//! The tape: an append-only list of nodes, each holding its forward value
//! and the operation that produced it.
//!
//! Nodes are only ever appended, so node order is a topological order and
//! backward is a single reverse sweep. Values are never mutated once
//! recorded.

use std::collections::BTreeMap;

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::ops;
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Constant,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddScalar(Var),
    MulScalar(Var, f64),
    Sigmoid(Var),
    LeakyRelu(Var, f64),
    Square(Var),
    AbsMean(Var),
    Mean(Var),
    MeanAxis(Var, usize),
    Sum(Var),
    MatMul {
        a: Var,
        b: Var,
        ta: bool,
        tb: bool,
    },
    Reshape(Var),
    Permute(Var, Vec<usize>),
    Concat(Vec<Var>, usize),
    Narrow {
        input: Var,
        axis: usize,
        start: usize,
    },
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Softmax(Var, usize),
    ResizeBilinear(Var),
    AvgPool2(Var),
}

impl Op {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddScalar(..) => "add_scalar",
            Op::MulScalar(..) => "mul_scalar",
            Op::Sigmoid(..) => "sigmoid",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Square(..) => "square",
            Op::AbsMean(..) => "abs_mean",
            Op::Mean(..) => "reduce_mean",
            Op::MeanAxis(..) => "mean_axis",
            Op::Sum(..) => "sum",
            Op::MatMul { .. } => "matmul",
            Op::Reshape(..) => "reshape",
            Op::Permute(..) => "permute",
            Op::Concat(..) => "concat",
            Op::Narrow { .. } => "narrow",
            Op::Conv2d { .. } => "conv2d",
            Op::Linear { .. } => "linear",
            Op::Softmax(..) => "softmax",
            Op::ResizeBilinear(..) => "resize_bilinear",
            Op::AvgPool2(..) => "avg_pool2",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf | Op::Constant => Vec::new(),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::AddScalar(a)
            | Op::MulScalar(a, _)
            | Op::Sigmoid(a)
            | Op::LeakyRelu(a, _)
            | Op::Square(a)
            | Op::AbsMean(a)
            | Op::Mean(a)
            | Op::MeanAxis(a, _)
            | Op::Sum(a)
            | Op::Reshape(a)
            | Op::Permute(a, _)
            | Op::Softmax(a, _)
            | Op::ResizeBilinear(a)
            | Op::AvgPool2(a)
            | Op::Narrow { input: a, .. } => vec![*a],
            Op::MatMul { a, b, .. } => vec![*a, *b],
            Op::Concat(vs, _) => vs.clone(),
            Op::Conv2d {
                input,
                weight,
                bias,
                ..
            }
            | Op::Linear {
                input,
                weight,
                bias,
            } => vec![*input, *weight, *bias],
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op,
    requires_grad: bool,
}

/// A computation graph recorded eagerly as operations are applied.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    consumed: bool,
    adjoint_fault: Option<String>,
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            consumed: false,
            adjoint_fault: None,
        }
    }

    /// Records a differentiable input.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records an input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Constant,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op) -> Var {
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn check(&self, v: Var) -> Result<()> {
        if v.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(TensorError::UnknownVar(v.0))
        }
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of recorded nodes per operation kind.
    pub fn op_counts(&self) -> BTreeMap<&'static str, usize> {
        let mut counts = BTreeMap::new();
        for node in &self.nodes {
            *counts.entry(node.op.name()).or_insert(0) += 1;
        }
        counts
    }

    /// Test fixture: doubles every input gradient produced by the named op
    /// during backward, simulating a broken adjoint.
    #[doc(hidden)]
    pub fn inject_adjoint_fault(&mut self, op_name: &str) {
        self.adjoint_fault = Some(op_name.to_string());
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Every leaf recorded with [`Graph::leaf`] receives a gradient (zeros if
    /// the loss does not depend on it). A graph can only be differentiated
    /// once.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>> {
        self.check(loss)?;
        if self.consumed {
            return Err(TensorError::BackwardConsumed);
        }
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.numel() != 1 {
            return Err(TensorError::NonScalarLoss(loss_value.shape().to_vec()));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(loss_value.shape().to_vec(), T::one()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let need = |v: Var| self.nodes[v.0].requires_grad;
            let mut contributions = ops::backward(self, node_view(node), &g, &need)?;
            if self.adjoint_fault.as_deref() == Some(node.op.name()) {
                let two = T::one() + T::one();
                for (_, t) in contributions.iter_mut() {
                    *t = t.map(|x| x * two);
                }
            }
            for (v, contribution) in contributions {
                if !need(v) {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&contribution)?,
                    slot @ None => *slot = Some(contribution),
                }
            }
        }

        let leaves = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, node)| match node.op {
                Op::Leaf => Some(
                    grads[i]
                        .take()
                        .unwrap_or_else(|| Tensor::zeros(node.value.shape().to_vec())),
                ),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads: leaves })
    }
}

/// Borrowed view of a node used by the backward rules.
pub(crate) struct NodeView<'a, T> {
    pub value: &'a Tensor<T>,
    pub op: &'a Op,
}

fn node_view<T>(node: &Node<T>) -> NodeView<'_, T> {
    NodeView {
        value: &node.value,
        op: &node.op,
    }
}

/// Leaf gradients produced by [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Element> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}
