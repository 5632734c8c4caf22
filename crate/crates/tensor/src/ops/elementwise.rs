use crate::element::Element;
use crate::error::{mismatch, Result};
use crate::graph::{Graph, Op, Var};
use crate::tensor::{numel, strides_of, Tensor};

/// Numpy-style broadcast of two shapes.
pub(crate) fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank {
            a[i + a.len() - rank]
        } else {
            1
        };
        let db = if i + b.len() >= rank {
            b[i + b.len() - rank]
        } else {
            1
        };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return Err(mismatch(op, a, b)),
        };
    }
    Ok(out)
}

/// For every linear index of `out`, the linear index of the broadcast `input`.
pub(crate) fn source_offsets(out: &[usize], input: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let in_strides = strides_of(input);
    let mut strides = vec![0; rank];
    for i in 0..input.len() {
        let o = rank - input.len() + i;
        strides[o] = if input[i] == 1 { 0 } else { in_strides[i] };
    }
    let total = numel(out);
    let mut offsets = Vec::with_capacity(total);
    let mut counter = vec![0usize; rank];
    let mut offset = 0usize;
    for _ in 0..total {
        offsets.push(offset);
        for d in (0..rank).rev() {
            counter[d] += 1;
            offset += strides[d];
            if counter[d] < out[d] {
                break;
            }
            offset -= strides[d] * counter[d];
            counter[d] = 0;
        }
    }
    offsets
}

fn binary<T: Element>(
    op: &'static str,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Result<Tensor<T>> {
    if a.shape() == b.shape() {
        let data = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        return Tensor::new(a.shape().to_vec(), data);
    }
    let out = broadcast_shape(op, a.shape(), b.shape())?;
    let oa = source_offsets(&out, a.shape());
    let ob = source_offsets(&out, b.shape());
    let data = oa
        .iter()
        .zip(&ob)
        .map(|(&i, &j)| f(a.data()[i], b.data()[j]))
        .collect();
    Tensor::new(out, data)
}

/// Sums `grad` (shaped like the broadcast output) back onto `shape`,
/// weighting each element by `scale(i)` where `i` is the output index.
fn reduce_to<T: Element>(
    grad: &Tensor<T>,
    shape: &[usize],
    scale: impl Fn(usize) -> T,
) -> Tensor<T> {
    if grad.shape() == shape {
        return Tensor::from_fn(shape.to_vec(), |i| grad.data()[i] * scale(i));
    }
    let offsets = source_offsets(grad.shape(), shape);
    let mut out = Tensor::zeros(shape.to_vec());
    let data = out.data_mut();
    for (i, &o) in offsets.iter().enumerate() {
        data[o] = data[o] + grad.data()[i] * scale(i);
    }
    out
}

impl<T: Element> Graph<T> {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let v = binary("add", self.value(a), self.value(b), |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let v = binary("sub", self.value(a), self.value(b), |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let v = binary("mul", self.value(a), self.value(b), |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        self.check(a)?;
        let s = T::from_f64_lossy(s);
        let v = self.value(a).map(|x| x + s);
        Ok(self.push(v, Op::AddScalar(a)))
    }

    pub fn mul_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        self.check(a)?;
        let st = T::from_f64_lossy(s);
        let v = self.value(a).map(|x| x * st);
        Ok(self.push(v, Op::MulScalar(a, s)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let v = self.value(a).map(|x| T::one() / (T::one() + (-x).exp()));
        Ok(self.push(v, Op::Sigmoid(a)))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        self.check(a)?;
        let s = T::from_f64_lossy(slope);
        let v = self.value(a).map(|x| if x > T::zero() { x } else { x * s });
        Ok(self.push(v, Op::LeakyRelu(a, slope)))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let v = self.value(a).map(|x| x * x);
        Ok(self.push(v, Op::Square(a)))
    }
}

pub(crate) fn backward<T: Element>(
    g: &Graph<T>,
    out: &Tensor<T>,
    op: &Op,
    grad: &Tensor<T>,
    need: &dyn Fn(Var) -> bool,
) -> Vec<(Var, Tensor<T>)> {
    let mut res = Vec::new();
    match *op {
        Op::Add(a, b) | Op::Sub(a, b) => {
            let sign = if matches!(op, Op::Sub(..)) {
                -T::one()
            } else {
                T::one()
            };
            if need(a) {
                res.push((a, reduce_to(grad, g.shape(a), |_| T::one())));
            }
            if need(b) {
                res.push((b, reduce_to(grad, g.shape(b), |_| sign)));
            }
        }
        Op::Mul(a, b) => {
            let (va, vb) = (g.value(a), g.value(b));
            let same = va.shape() == vb.shape();
            let out_shape = grad.shape().to_vec();
            let (oa, ob) = if same {
                (Vec::new(), Vec::new())
            } else {
                (
                    source_offsets(&out_shape, va.shape()),
                    source_offsets(&out_shape, vb.shape()),
                )
            };
            if need(a) {
                let t = if same {
                    reduce_to(grad, va.shape(), |i| vb.data()[i])
                } else {
                    reduce_to(grad, va.shape(), |i| vb.data()[ob[i]])
                };
                res.push((a, t));
            }
            if need(b) {
                let t = if same {
                    reduce_to(grad, vb.shape(), |i| va.data()[i])
                } else {
                    reduce_to(grad, vb.shape(), |i| va.data()[oa[i]])
                };
                res.push((b, t));
            }
        }
        Op::AddScalar(a) => res.push((a, grad.clone())),
        Op::MulScalar(a, s) => {
            let s = T::from_f64_lossy(s);
            res.push((a, grad.map(|x| x * s)));
        }
        Op::Sigmoid(a) => {
            let t = Tensor::from_fn(grad.shape().to_vec(), |i| {
                let y = out.data()[i];
                grad.data()[i] * y * (T::one() - y)
            });
            res.push((a, t));
        }
        Op::LeakyRelu(a, slope) => {
            let s = T::from_f64_lossy(slope);
            let x = g.value(a);
            let t = Tensor::from_fn(grad.shape().to_vec(), |i| {
                if x.data()[i] > T::zero() {
                    grad.data()[i]
                } else {
                    grad.data()[i] * s
                }
            });
            res.push((a, t));
        }
        Op::Square(a) => {
            let x = g.value(a);
            let two = T::one() + T::one();
            let t = Tensor::from_fn(grad.shape().to_vec(), |i| {
                grad.data()[i] * two * x.data()[i]
            });
            res.push((a, t));
        }
        _ => unreachable!("not an elementwise op"),
    }
    res
}
