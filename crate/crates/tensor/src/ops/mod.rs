mod conv;
mod elementwise;
mod linalg;
mod reduce;
mod resize;
mod shape;
mod softmax;

pub use resize::corner_aligned_source;

use crate::element::Element;
use crate::error::Result;
use crate::graph::{Graph, NodeView, Op, Var};
use crate::tensor::Tensor;

/// Input gradients of one node given the gradient of its output.
pub(crate) fn backward<T: Element>(
    g: &Graph<T>,
    node: NodeView<'_, T>,
    grad: &Tensor<T>,
    need: &dyn Fn(Var) -> bool,
) -> Result<Vec<(Var, Tensor<T>)>> {
    let op = node.op;
    Ok(match op {
        Op::Leaf | Op::Constant => Vec::new(),
        Op::Add(..)
        | Op::Sub(..)
        | Op::Mul(..)
        | Op::AddScalar(..)
        | Op::MulScalar(..)
        | Op::Sigmoid(..)
        | Op::LeakyRelu(..)
        | Op::Square(..) => elementwise::backward(g, node.value, op, grad, need),
        Op::AbsMean(..) | Op::Mean(..) | Op::MeanAxis(..) | Op::Sum(..) => {
            reduce::backward(g, op, grad)
        }
        Op::MatMul { .. } | Op::Linear { .. } => linalg::backward(g, op, grad, need),
        Op::Reshape(..) | Op::Permute(..) | Op::Concat(..) | Op::Narrow { .. } => {
            shape::backward(g, op, grad, need)
        }
        Op::Conv2d { .. } | Op::AvgPool2(..) => conv::backward(g, op, grad, need),
        Op::Softmax(..) => softmax::backward(node.value, op, grad),
        Op::ResizeBilinear(..) => resize::backward(g, op, grad),
    })
}
