use crate::element::Element;
use crate::error::{invalid, Result};
use crate::graph::{Graph, Op, Var};
use crate::tensor::Tensor;

fn count<T: Element>(n: usize) -> T {
    T::from_usize(n).expect("element count fits the float type")
}

impl<T: Element> Graph<T> {
    /// Mean of absolute values over every element; rank-0 result.
    pub fn abs_mean(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let x = self.value(a);
        if x.numel() == 0 {
            return Err(invalid("abs_mean", "empty tensor"));
        }
        let m = x.data().iter().map(|v| v.abs()).sum::<T>() / count(x.numel());
        Ok(self.push(Tensor::scalar(m), Op::AbsMean(a)))
    }

    /// Mean over every element; rank-0 result.
    pub fn reduce_mean(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let x = self.value(a);
        if x.numel() == 0 {
            return Err(invalid("reduce_mean", "empty tensor"));
        }
        let m = x.sum() / count(x.numel());
        Ok(self.push(Tensor::scalar(m), Op::Mean(a)))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let s = self.value(a).sum();
        Ok(self.push(Tensor::scalar(s), Op::Sum(a)))
    }

    /// Mean along one axis, which is removed from the shape.
    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.check(a)?;
        let x = self.value(a);
        let shape = x.shape();
        if axis >= shape.len() || shape[axis] == 0 {
            return Err(invalid(
                "mean_axis",
                format!("axis {axis} invalid for {shape:?}"),
            ));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let n = count::<T>(len);
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for k in 0..len {
                let row = &x.data()[(o * len + k) * inner..(o * len + k + 1) * inner];
                for (acc, &v) in out[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                    *acc = *acc + v;
                }
            }
        }
        for v in &mut out {
            *v = *v / n;
        }
        let mut out_shape = shape.to_vec();
        out_shape.remove(axis);
        let t = Tensor::new(out_shape, out)?;
        Ok(self.push(t, Op::MeanAxis(a, axis)))
    }
}

pub(crate) fn backward<T: Element>(
    g: &Graph<T>,
    op: &Op,
    grad: &Tensor<T>,
) -> Vec<(Var, Tensor<T>)> {
    match *op {
        Op::AbsMean(a) => {
            let x = g.value(a);
            let s = grad.data()[0] / count(x.numel());
            // subgradient 0 at x == 0
            let t = x.map(|v| {
                if v > T::zero() {
                    s
                } else if v < T::zero() {
                    -s
                } else {
                    T::zero()
                }
            });
            vec![(a, t)]
        }
        Op::Mean(a) => {
            let shape = g.shape(a).to_vec();
            let s = grad.data()[0] / count(shape.iter().product());
            vec![(a, Tensor::full(shape, s))]
        }
        Op::Sum(a) => vec![(a, Tensor::full(g.shape(a).to_vec(), grad.data()[0]))],
        Op::MeanAxis(a, axis) => {
            let shape = g.shape(a).to_vec();
            let outer: usize = shape[..axis].iter().product();
            let len = shape[axis];
            let inner: usize = shape[axis + 1..].iter().product();
            let n = count::<T>(len);
            let mut t = Tensor::zeros(shape);
            let data = t.data_mut();
            for o in 0..outer {
                for k in 0..len {
                    for i in 0..inner {
                        data[(o * len + k) * inner + i] = grad.data()[o * inner + i] / n;
                    }
                }
            }
            vec![(a, t)]
        }
        _ => unreachable!("not a reduction"),
    }
}
