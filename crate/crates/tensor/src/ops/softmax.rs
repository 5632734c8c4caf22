use crate::element::Element;
use crate::error::{invalid, Result};
use crate::graph::{Graph, Op, Var};
use crate::tensor::Tensor;

fn layout(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<T: Element> Graph<T> {
    /// Normalized exponentials along `axis`, with max subtraction.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.check(a)?;
        let x = self.value(a);
        if axis >= x.ndim() || x.shape()[axis] == 0 {
            return Err(invalid(
                "softmax",
                format!("axis {axis} invalid for {:?}", x.shape()),
            ));
        }
        let (outer, len, inner) = layout(x.shape(), axis);
        let mut out = vec![T::zero(); x.numel()];
        let src = x.data();
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * len + k) * inner + i;
                let max = (0..len).map(|k| src[at(k)]).fold(T::neg_infinity(), T::max);
                let mut total = T::zero();
                for k in 0..len {
                    let e = (src[at(k)] - max).exp();
                    out[at(k)] = e;
                    total = total + e;
                }
                for k in 0..len {
                    out[at(k)] = out[at(k)] / total;
                }
            }
        }
        let t = Tensor::new(x.shape().to_vec(), out)?;
        Ok(self.push(t, Op::Softmax(a, axis)))
    }
}

pub(crate) fn backward<T: Element>(
    out: &Tensor<T>,
    op: &Op,
    grad: &Tensor<T>,
) -> Vec<(Var, Tensor<T>)> {
    let Op::Softmax(a, axis) = *op else {
        unreachable!("not softmax")
    };
    let (outer, len, inner) = layout(out.shape(), axis);
    let (y, gy) = (out.data(), grad.data());
    let mut dx = vec![T::zero(); y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * len + k) * inner + i;
            let dot = (0..len).map(|k| gy[at(k)] * y[at(k)]).sum::<T>();
            for k in 0..len {
                dx[at(k)] = y[at(k)] * (gy[at(k)] - dot);
            }
        }
    }
    vec![(
        a,
        Tensor::new(out.shape().to_vec(), dx).expect("same shape"),
    )]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_input_is_uniform() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::full([2, 5], 3.7));
        let y = g.softmax(x, 1).unwrap();
        assert!(g.value(y).data().iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn zero_and_ln2_give_thirds() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::new([2], vec![0.0, 2f64.ln()]).unwrap());
        let y = g.softmax(x, 0).unwrap();
        let d = g.value(y).data();
        assert!((d[0] - 1.0 / 3.0).abs() < 1e-15 && (d[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn large_logits_stay_finite() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::new([3], vec![1000.0, 999.0, -1000.0]).unwrap());
        let y = g.softmax(x, 0).unwrap();
        assert!(g.value(y).is_finite());
    }

    #[test]
    fn bad_axis_rejected() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::zeros([3]));
        assert!(g.softmax(x, 1).is_err());
    }
}
