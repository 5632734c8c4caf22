use crate::element::Element;
use crate::error::{invalid, mismatch, Result};
use crate::graph::{Graph, Op, Var};
use crate::tensor::{numel, strides_of, Tensor};

fn permute_data<T: Element>(x: &Tensor<T>, perm: &[usize]) -> Tensor<T> {
    let in_shape = x.shape();
    let in_strides = strides_of(in_shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let rank = out_shape.len();
    let mut data = Vec::with_capacity(x.numel());
    let mut counter = vec![0usize; rank];
    let mut offset = 0usize;
    for _ in 0..x.numel() {
        data.push(x.data()[offset]);
        for d in (0..rank).rev() {
            counter[d] += 1;
            offset += strides[d];
            if counter[d] < out_shape[d] {
                break;
            }
            offset -= strides[d] * counter[d];
            counter[d] = 0;
        }
    }
    Tensor::new(out_shape, data).expect("permutation preserves size")
}

fn inverse_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

impl<T: Element> Graph<T> {
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        self.check(a)?;
        let x = self.value(a);
        if numel(shape) != x.numel() {
            return Err(mismatch("reshape", x.shape(), shape));
        }
        let t = x.clone().reshape(shape.to_vec())?;
        Ok(self.push(t, Op::Reshape(a)))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        self.check(a)?;
        let x = self.value(a);
        let mut seen = vec![false; x.ndim()];
        if perm.len() != x.ndim()
            || perm
                .iter()
                .any(|&p| p >= x.ndim() || std::mem::replace(&mut seen[p], true))
        {
            return Err(invalid(
                "permute",
                format!("{perm:?} is not a permutation of {} axes", x.ndim()),
            ));
        }
        let t = permute_data(x, perm);
        Ok(self.push(t, Op::Permute(a, perm.to_vec())))
    }

    /// Concatenates along `axis`; every other dimension must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = *inputs
            .first()
            .ok_or_else(|| invalid("concat", "no inputs"))?;
        for &v in inputs {
            self.check(v)?;
        }
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(invalid(
                "concat",
                format!("axis {axis} invalid for {base:?}"),
            ));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(mismatch("concat", &base, s));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out_shape = base.clone();
        out_shape[axis] = total;
        let mut data = Vec::with_capacity(numel(&out_shape));
        for o in 0..outer {
            for &v in inputs {
                let x = self.value(v);
                let chunk = x.shape()[axis] * inner;
                data.extend_from_slice(&x.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let t = Tensor::new(out_shape, data)?;
        Ok(self.push(t, Op::Concat(inputs.to_vec(), axis)))
    }

    /// Concatenation along axis 1 of `[N, C, ...]` tensors.
    pub fn concat_channels(&mut self, inputs: &[Var]) -> Result<Var> {
        self.concat(inputs, 1)
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        self.check(a)?;
        let x = self.value(a);
        let shape = x.shape();
        if axis >= shape.len() || start + len > shape[axis] || len == 0 {
            return Err(invalid(
                "narrow",
                format!(
                    "range {start}..{} on axis {axis} invalid for {shape:?}",
                    start + len
                ),
            ));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let dim = shape[axis];
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * dim + start) * inner;
            data.extend_from_slice(&x.data()[base..base + len * inner]);
        }
        let mut out_shape = shape.to_vec();
        out_shape[axis] = len;
        let t = Tensor::new(out_shape, data)?;
        Ok(self.push(
            t,
            Op::Narrow {
                input: a,
                axis,
                start,
            },
        ))
    }
}

pub(crate) fn backward<T: Element>(
    g: &Graph<T>,
    op: &Op,
    grad: &Tensor<T>,
    need: &dyn Fn(Var) -> bool,
) -> Vec<(Var, Tensor<T>)> {
    match op {
        Op::Reshape(a) => {
            let t = grad
                .clone()
                .reshape(g.shape(*a).to_vec())
                .expect("same size");
            vec![(*a, t)]
        }
        Op::Permute(a, perm) => vec![(*a, permute_data(grad, &inverse_perm(perm)))],
        Op::Concat(inputs, axis) => {
            let axis = *axis;
            let shape = grad.shape();
            let outer: usize = shape[..axis].iter().product();
            let inner: usize = shape[axis + 1..].iter().product();
            let total = shape[axis];
            let mut res = Vec::new();
            let mut offset = 0;
            for &v in inputs {
                let vs = g.shape(v).to_vec();
                let chunk = vs[axis] * inner;
                if need(v) {
                    let mut data = Vec::with_capacity(numel(&vs));
                    for o in 0..outer {
                        let base = o * total * inner + offset;
                        data.extend_from_slice(&grad.data()[base..base + chunk]);
                    }
                    res.push((v, Tensor::new(vs, data).expect("chunk sizes add up")));
                }
                offset += chunk;
            }
            res
        }
        Op::Narrow { input, axis, start } => {
            let shape = g.shape(*input).to_vec();
            let outer: usize = shape[..*axis].iter().product();
            let inner: usize = shape[*axis + 1..].iter().product();
            let dim = shape[*axis];
            let len = grad.shape()[*axis];
            let mut t = Tensor::zeros(shape);
            let data = t.data_mut();
            for o in 0..outer {
                let dst = (o * dim + start) * inner;
                let src = o * len * inner;
                data[dst..dst + len * inner].copy_from_slice(&grad.data()[src..src + len * inner]);
            }
            vec![(*input, t)]
        }
        _ => unreachable!("not a shape op"),
    }
}
