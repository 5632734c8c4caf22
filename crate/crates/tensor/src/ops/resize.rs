use crate::element::Element;
use crate::error::{invalid, Result};
use crate::graph::{Graph, Op, Var};
use crate::tensor::Tensor;

/// Source sample for output index `i` under corner alignment: the two
/// neighbouring input indices and the weight of the second one.
///
/// With a single input or output sample the mapping degenerates to the
/// first (top/left) input sample.
pub fn corner_aligned_source(i: usize, input: usize, output: usize) -> (usize, usize, f64) {
    if input <= 1 || output <= 1 {
        return (0, 0, 0.0);
    }
    // integer numerator keeps anchors (including both corners) exact
    let s = (i * (input - 1)) as f64 / (output - 1) as f64;
    let i0 = (s.floor() as usize).min(input - 1);
    let i1 = (i0 + 1).min(input - 1);
    (i0, i1, s - i0 as f64)
}

struct Taps<T> {
    lo: usize,
    hi: usize,
    frac: T,
}

fn taps<T: Element>(input: usize, output: usize) -> Vec<Taps<T>> {
    (0..output)
        .map(|i| {
            let (lo, hi, f) = corner_aligned_source(i, input, output);
            Taps {
                lo,
                hi,
                frac: T::from_f64_lossy(f),
            }
        })
        .collect()
}

impl<T: Element> Graph<T> {
    /// Bilinear resize of `[N, C, H, W]` with corner alignment.
    pub fn resize_bilinear(&mut self, input: Var, out_h: usize, out_w: usize) -> Result<Var> {
        self.check(input)?;
        let x = self.value(input);
        let &[n, c, h, w] = x.shape() else {
            return Err(invalid(
                "resize_bilinear",
                format!("expected [N,C,H,W], got {:?}", x.shape()),
            ));
        };
        if out_h == 0 || out_w == 0 {
            return Err(invalid("resize_bilinear", "output size must be >= 1"));
        }
        let (ty, tx) = (taps::<T>(h, out_h), taps::<T>(w, out_w));
        let mut out = Vec::with_capacity(n * c * out_h * out_w);
        for plane in x.data().chunks(h * w) {
            for y in &ty {
                let (r0, r1) = (
                    &plane[y.lo * w..(y.lo + 1) * w],
                    &plane[y.hi * w..(y.hi + 1) * w],
                );
                for t in &tx {
                    let top = r0[t.lo] * (T::one() - t.frac) + r0[t.hi] * t.frac;
                    let bottom = r1[t.lo] * (T::one() - t.frac) + r1[t.hi] * t.frac;
                    out.push(top * (T::one() - y.frac) + bottom * y.frac);
                }
            }
        }
        let t = Tensor::new(vec![n, c, out_h, out_w], out)?;
        Ok(self.push(t, Op::ResizeBilinear(input)))
    }
}

pub(crate) fn backward<T: Element>(
    g: &Graph<T>,
    op: &Op,
    grad: &Tensor<T>,
) -> Vec<(Var, Tensor<T>)> {
    let Op::ResizeBilinear(input) = *op else {
        unreachable!("not a resize")
    };
    let shape = g.shape(input).to_vec();
    let (h, w) = (shape[2], shape[3]);
    let (out_h, out_w) = (grad.shape()[2], grad.shape()[3]);
    let (ty, tx) = (taps::<T>(h, out_h), taps::<T>(w, out_w));
    let mut dx = Tensor::zeros(shape);
    for (plane, gp) in dx
        .data_mut()
        .chunks_mut(h * w)
        .zip(grad.data().chunks(out_h * out_w))
    {
        for (oy, y) in ty.iter().enumerate() {
            for (ox, t) in tx.iter().enumerate() {
                let gv = gp[oy * out_w + ox];
                let top = gv * (T::one() - y.frac);
                let bottom = gv * y.frac;
                plane[y.lo * w + t.lo] = plane[y.lo * w + t.lo] + top * (T::one() - t.frac);
                plane[y.lo * w + t.hi] = plane[y.lo * w + t.hi] + top * t.frac;
                plane[y.hi * w + t.lo] = plane[y.hi * w + t.lo] + bottom * (T::one() - t.frac);
                plane[y.hi * w + t.hi] = plane[y.hi * w + t.hi] + bottom * t.frac;
            }
        }
    }
    vec![(input, dx)]
}
