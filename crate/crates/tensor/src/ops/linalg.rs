use crate::element::Element;
use crate::error::{invalid, mismatch, Result};
use crate::graph::{Graph, Op, Var};
use crate::tensor::Tensor;

/// Geometry of one operand of a (batched) matmul.
#[derive(Clone, Copy)]
struct Operand {
    batch: usize,
    rows: usize,
    cols: usize,
    // strides of the (optionally transposed) logical matrix
    rs: isize,
    cs: isize,
}

impl Operand {
    fn of(shape: &[usize], transposed: bool) -> Option<Self> {
        let (batch, r, c) = match *shape {
            [r, c] => (1, r, c),
            [b, r, c] => (b, r, c),
            _ => return None,
        };
        Some(if transposed {
            Operand {
                batch,
                rows: c,
                cols: r,
                rs: 1,
                cs: c as isize,
            }
        } else {
            Operand {
                batch,
                rows: r,
                cols: c,
                rs: c as isize,
                cs: 1,
            }
        })
    }

    fn size(&self) -> usize {
        self.rows * self.cols
    }
}

impl<T: Element> Graph<T> {
    /// `op(a) @ op(b)` for rank-2 or batched rank-3 operands, where `op`
    /// transposes the last two axes when the matching flag is set.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (xa, xb) = (self.value(a), self.value(b));
        let (Some(pa), Some(pb)) = (Operand::of(xa.shape(), ta), Operand::of(xb.shape(), tb))
        else {
            return Err(mismatch("matmul", xa.shape(), xb.shape()));
        };
        if xa.ndim() != xb.ndim() || pa.batch != pb.batch || pa.cols != pb.rows {
            return Err(mismatch("matmul", xa.shape(), xb.shape()));
        }
        let (m, k, n) = (pa.rows, pa.cols, pb.cols);
        let mut out = vec![T::zero(); pa.batch * m * n];
        for bi in 0..pa.batch {
            T::gemm(
                m,
                k,
                n,
                (&xa.data()[bi * pa.size()..], pa.rs, pa.cs),
                (&xb.data()[bi * pb.size()..], pb.rs, pb.cs),
                (&mut out[bi * m * n..], n as isize, 1),
                false,
            );
        }
        let shape = if xa.ndim() == 3 {
            vec![pa.batch, m, n]
        } else {
            vec![m, n]
        };
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::MatMul { a, b, ta, tb }))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, b, false, false)
    }

    /// Affine map over the last axis: `x @ weight^T + bias`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        self.check(input)?;
        self.check(weight)?;
        self.check(bias)?;
        let (x, w, b) = (self.value(input), self.value(weight), self.value(bias));
        let (&[dout, din], &[nb]) = (w.shape(), b.shape()) else {
            return Err(invalid(
                "linear",
                format!(
                    "weight {:?} / bias {:?} must be rank 2 / 1",
                    w.shape(),
                    b.shape()
                ),
            ));
        };
        if nb != dout {
            return Err(mismatch("linear", w.shape(), b.shape()));
        }
        if x.shape().last() != Some(&din) {
            return Err(mismatch("linear", x.shape(), w.shape()));
        }
        let rows = x.numel() / din;
        let mut out = vec![T::zero(); rows * dout];
        T::gemm(
            rows,
            din,
            dout,
            (x.data(), din as isize, 1),
            (w.data(), 1, din as isize),
            (&mut out, dout as isize, 1),
            false,
        );
        for row in out.chunks_mut(dout) {
            for (o, &bv) in row.iter_mut().zip(b.data()) {
                *o = *o + bv;
            }
        }
        let mut shape = x.shape().to_vec();
        *shape.last_mut().expect("rank >= 1") = dout;
        let t = Tensor::new(shape, out)?;
        Ok(self.push(
            t,
            Op::Linear {
                input,
                weight,
                bias,
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
    let mut res = Vec::new();
    match *op {
        Op::MatMul { a, b, ta, tb } => {
            let (xa, xb) = (g.value(a), g.value(b));
            let pa = Operand::of(xa.shape(), ta).expect("validated in forward");
            let pb = Operand::of(xb.shape(), tb).expect("validated in forward");
            let (m, k, n) = (pa.rows, pa.cols, pb.cols);
            if need(a) {
                // d op(a) = dC @ op(b)^T, written back through op(a)'s strides
                let mut da = Tensor::zeros(xa.shape().to_vec());
                for bi in 0..pa.batch {
                    T::gemm(
                        m,
                        n,
                        k,
                        (&grad.data()[bi * m * n..], n as isize, 1),
                        (&xb.data()[bi * pb.size()..], pb.cs, pb.rs),
                        (&mut da.data_mut()[bi * pa.size()..], pa.rs, pa.cs),
                        false,
                    );
                }
                res.push((a, da));
            }
            if need(b) {
                let mut db = Tensor::zeros(xb.shape().to_vec());
                for bi in 0..pa.batch {
                    T::gemm(
                        k,
                        m,
                        n,
                        (&xa.data()[bi * pa.size()..], pa.cs, pa.rs),
                        (&grad.data()[bi * m * n..], n as isize, 1),
                        (&mut db.data_mut()[bi * pb.size()..], pb.rs, pb.cs),
                        false,
                    );
                }
                res.push((b, db));
            }
        }
        Op::Linear {
            input,
            weight,
            bias,
        } => {
            let (x, w) = (g.value(input), g.value(weight));
            let (dout, din) = (w.shape()[0], w.shape()[1]);
            let rows = x.numel() / din;
            if need(input) {
                let mut dx = Tensor::zeros(x.shape().to_vec());
                T::gemm(
                    rows,
                    dout,
                    din,
                    (grad.data(), dout as isize, 1),
                    (w.data(), din as isize, 1),
                    (dx.data_mut(), din as isize, 1),
                    false,
                );
                res.push((input, dx));
            }
            if need(weight) {
                let mut dw = Tensor::zeros(w.shape().to_vec());
                T::gemm(
                    dout,
                    rows,
                    din,
                    (grad.data(), 1, dout as isize),
                    (x.data(), din as isize, 1),
                    (dw.data_mut(), din as isize, 1),
                    false,
                );
                res.push((weight, dw));
            }
            if need(bias) {
                let mut db = vec![T::zero(); dout];
                for row in grad.data().chunks(dout) {
                    for (acc, &v) in db.iter_mut().zip(row) {
                        *acc = *acc + v;
                    }
                }
                res.push((bias, Tensor::new(vec![dout], db).expect("bias shape")));
            }
        }
        _ => unreachable!("not a linear algebra op"),
    }
    res
}
