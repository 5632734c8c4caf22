use crate::element::Element;
use crate::error::{invalid, mismatch, Result};
use crate::graph::{Graph, Op, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn patch(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    // 1x1, stride 1, no padding: the input plane already is the column matrix
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

fn geometry(x: &[usize], w: &[usize], b: &[usize], stride: usize, pad: usize) -> Result<ConvGeom> {
    let (&[n, cin, h, wd], &[cout, wcin, kh, kw]) = (x, w) else {
        return Err(mismatch("conv2d", x, w));
    };
    if cin != wcin {
        return Err(mismatch("conv2d", x, w));
    }
    if b != [cout] {
        return Err(mismatch("conv2d", w, b));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(invalid("conv2d", format!("kernel {kh}x{kw} must be odd")));
    }
    if stride == 0 {
        return Err(invalid("conv2d", "stride must be >= 1"));
    }
    if h + 2 * pad < kh || wd + 2 * pad < kw {
        return Err(invalid(
            "conv2d",
            format!("input {h}x{wd} (pad {pad}) smaller than kernel {kh}x{kw}"),
        ));
    }
    Ok(ConvGeom {
        n,
        cin,
        h,
        w: wd,
        cout,
        kh,
        kw,
        stride,
        pad,
        oh: (h + 2 * pad - kh) / stride + 1,
        ow: (wd + 2 * pad - kw) / stride + 1,
    })
}

fn im2col<T: Element>(gm: &ConvGeom, x: &[T], cols: &mut [T]) {
    let p = gm.positions();
    for c in 0..gm.cin {
        let plane = &x[c * gm.h * gm.w..(c + 1) * gm.h * gm.w];
        for ky in 0..gm.kh {
            for kx in 0..gm.kw {
                let row = ((c * gm.kh + ky) * gm.kw + kx) * p;
                for oy in 0..gm.oh {
                    let iy = (oy * gm.stride + ky) as isize - gm.pad as isize;
                    let dst = &mut cols[row + oy * gm.ow..row + (oy + 1) * gm.ow];
                    if iy < 0 || iy >= gm.h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * gm.w..(iy as usize + 1) * gm.w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * gm.stride + kx) as isize - gm.pad as isize;
                        *d = if ix < 0 || ix >= gm.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Element>(gm: &ConvGeom, cols: &[T], dx: &mut [T]) {
    let p = gm.positions();
    for c in 0..gm.cin {
        let plane = &mut dx[c * gm.h * gm.w..(c + 1) * gm.h * gm.w];
        for ky in 0..gm.kh {
            for kx in 0..gm.kw {
                let row = ((c * gm.kh + ky) * gm.kw + kx) * p;
                for oy in 0..gm.oh {
                    let iy = (oy * gm.stride + ky) as isize - gm.pad as isize;
                    if iy < 0 || iy >= gm.h as isize {
                        continue;
                    }
                    let src = &cols[row + oy * gm.ow..row + (oy + 1) * gm.ow];
                    let dst = &mut plane[iy as usize * gm.w..(iy as usize + 1) * gm.w];
                    for (ox, &v) in src.iter().enumerate() {
                        let ix = (ox * gm.stride + kx) as isize - gm.pad as isize;
                        if ix >= 0 && (ix as usize) < gm.w {
                            dst[ix as usize] = dst[ix as usize] + v;
                        }
                    }
                }
            }
        }
    }
}

impl<T: Element> Graph<T> {
    /// 2-D cross-correlation over `[N, Cin, H, W]` with zero padding.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        self.check(input)?;
        self.check(weight)?;
        self.check(bias)?;
        let (x, w, b) = (self.value(input), self.value(weight), self.value(bias));
        let gm = geometry(x.shape(), w.shape(), b.shape(), stride, padding)?;
        let (k, p) = (gm.patch(), gm.positions());
        let in_plane = gm.cin * gm.h * gm.w;
        let mut out = vec![T::zero(); gm.n * gm.cout * p];
        let mut cols = if gm.is_pointwise() {
            Vec::new()
        } else {
            vec![T::zero(); k * p]
        };
        for ni in 0..gm.n {
            let xs = &x.data()[ni * in_plane..(ni + 1) * in_plane];
            let cm: &[T] = if gm.is_pointwise() {
                xs
            } else {
                im2col(&gm, xs, &mut cols);
                &cols
            };
            let dst = &mut out[ni * gm.cout * p..(ni + 1) * gm.cout * p];
            T::gemm(
                gm.cout,
                k,
                p,
                (w.data(), k as isize, 1),
                (cm, p as isize, 1),
                (dst, p as isize, 1),
                false,
            );
            for (co, row) in dst.chunks_mut(p).enumerate() {
                let bv = b.data()[co];
                for v in row {
                    *v = *v + bv;
                }
            }
        }
        let t = Tensor::new(vec![gm.n, gm.cout, gm.oh, gm.ow], out)?;
        Ok(self.push(
            t,
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
            },
        ))
    }

    /// 2x2 average pooling with stride 2 (trailing odd row/column dropped).
    pub fn avg_pool2(&mut self, input: Var) -> Result<Var> {
        self.check(input)?;
        let x = self.value(input);
        let &[n, c, h, w] = x.shape() else {
            return Err(invalid(
                "avg_pool2",
                format!("expected [N,C,H,W], got {:?}", x.shape()),
            ));
        };
        let (oh, ow) = (h / 2, w / 2);
        if oh == 0 || ow == 0 {
            return Err(invalid(
                "avg_pool2",
                format!("{h}x{w} is too small to pool"),
            ));
        }
        let quarter = T::from_f64_lossy(0.25);
        let mut out = Vec::with_capacity(n * c * oh * ow);
        for plane in x.data().chunks(h * w) {
            for oy in 0..oh {
                for ox in 0..ow {
                    let i = 2 * oy * w + 2 * ox;
                    out.push((plane[i] + plane[i + 1] + plane[i + w] + plane[i + w + 1]) * quarter);
                }
            }
        }
        let t = Tensor::new(vec![n, c, oh, ow], out)?;
        Ok(self.push(t, Op::AvgPool2(input)))
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
        Op::Conv2d {
            input,
            weight,
            bias,
            stride,
            padding,
        } => {
            let (x, w, b) = (g.value(input), g.value(weight), g.value(bias));
            let gm = geometry(x.shape(), w.shape(), b.shape(), stride, padding)
                .expect("validated in forward");
            let (k, p) = (gm.patch(), gm.positions());
            let in_plane = gm.cin * gm.h * gm.w;
            let mut dw = need(weight).then(|| Tensor::zeros(w.shape().to_vec()));
            let mut dx = need(input).then(|| Tensor::zeros(x.shape().to_vec()));
            let mut cols = vec![T::zero(); k * p];
            let mut dcols = vec![T::zero(); k * p];
            for ni in 0..gm.n {
                let gy = &grad.data()[ni * gm.cout * p..(ni + 1) * gm.cout * p];
                let xs = &x.data()[ni * in_plane..(ni + 1) * in_plane];
                if let Some(dw) = dw.as_mut() {
                    let cm: &[T] = if gm.is_pointwise() {
                        xs
                    } else {
                        im2col(&gm, xs, &mut cols);
                        &cols
                    };
                    // dW += dY @ cols^T
                    T::gemm(
                        gm.cout,
                        p,
                        k,
                        (gy, p as isize, 1),
                        (cm, 1, p as isize),
                        (dw.data_mut(), k as isize, 1),
                        true,
                    );
                }
                if let Some(dx) = dx.as_mut() {
                    let dxs = &mut dx.data_mut()[ni * in_plane..(ni + 1) * in_plane];
                    // dcols = W^T @ dY
                    if gm.is_pointwise() {
                        T::gemm(
                            k,
                            gm.cout,
                            p,
                            (w.data(), 1, k as isize),
                            (gy, p as isize, 1),
                            (dxs, p as isize, 1),
                            false,
                        );
                    } else {
                        T::gemm(
                            k,
                            gm.cout,
                            p,
                            (w.data(), 1, k as isize),
                            (gy, p as isize, 1),
                            (&mut dcols, p as isize, 1),
                            false,
                        );
                        col2im(&gm, &dcols, dxs);
                    }
                }
            }
            if let Some(dx) = dx {
                res.push((input, dx));
            }
            if let Some(dw) = dw {
                res.push((weight, dw));
            }
            if need(bias) {
                let mut db = vec![T::zero(); gm.cout];
                for (i, row) in grad.data().chunks(p).enumerate() {
                    db[i % gm.cout] = db[i % gm.cout] + row.iter().copied().sum::<T>();
                }
                res.push((bias, Tensor::new(vec![gm.cout], db).expect("bias shape")));
            }
        }
        Op::AvgPool2(input) => {
            let shape = g.shape(input).to_vec();
            let (h, w) = (shape[2], shape[3]);
            let (oh, ow) = (h / 2, w / 2);
            let quarter = T::from_f64_lossy(0.25);
            let mut dx = Tensor::zeros(shape);
            for (plane, gp) in dx
                .data_mut()
                .chunks_mut(h * w)
                .zip(grad.data().chunks(oh * ow))
            {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let v = gp[oy * ow + ox] * quarter;
                        let i = 2 * oy * w + 2 * ox;
                        plane[i] = v;
                        plane[i + 1] = v;
                        plane[i + w] = v;
                        plane[i + w + 1] = v;
                    }
                }
            }
            res.push((input, dx));
        }
        _ => unreachable!("not a convolution op"),
    }
    res
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_pointwise_kernel_is_identity() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::from_fn([2, 1, 5, 5], |i| i as f32 * 0.1));
        let w = g.constant(Tensor::ones([1, 1, 1, 1]));
        let b = g.constant(Tensor::zeros([1]));
        let y = g.conv2d(x, w, b, 1, 0).unwrap();
        assert_eq!(g.value(y), g.value(x));
    }

    #[test]
    fn padded_3x3_keeps_resolution() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::zeros([1, 3, 8, 8]));
        let w = g.constant(Tensor::zeros([16, 3, 3, 3]));
        let b = g.constant(Tensor::zeros([16]));
        let y = g.conv2d(x, w, b, 1, 1).unwrap();
        assert_eq!(g.shape(y), &[1, 16, 8, 8]);
    }

    #[test]
    fn strided_output_size_floors() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::zeros([1, 2, 7, 8]));
        let w = g.constant(Tensor::zeros([4, 2, 3, 3]));
        let b = g.constant(Tensor::zeros([4]));
        let y = g.conv2d(x, w, b, 2, 1).unwrap();
        assert_eq!(g.shape(y), &[1, 4, 4, 4]);
    }

    #[test]
    fn channel_mismatch_names_both_shapes() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::zeros([1, 3, 8, 8]));
        let w = g.constant(Tensor::zeros([16, 4, 3, 3]));
        let b = g.constant(Tensor::zeros([16]));
        let msg = g.conv2d(x, w, b, 1, 1).unwrap_err().to_string();
        assert!(
            msg.contains("[1, 3, 8, 8]") && msg.contains("[16, 4, 3, 3]"),
            "{msg}"
        );
    }

    #[test]
    fn even_kernel_rejected() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::zeros([1, 1, 8, 8]));
        let w = g.constant(Tensor::zeros([1, 1, 2, 2]));
        let b = g.constant(Tensor::zeros([1]));
        assert!(g.conv2d(x, w, b, 1, 0).is_err());
    }

    #[test]
    fn direct_convolution_agrees() {
        let mut g = Graph::<f64>::new();
        let xs = Tensor::from_fn([1, 2, 5, 6], |i| ((i * 7) % 11) as f64 - 5.0);
        let ws = Tensor::from_fn([3, 2, 3, 3], |i| ((i * 5) % 7) as f64 * 0.25 - 0.7);
        let bs = Tensor::from_fn([3], |i| i as f64);
        let (x, w, b) = (
            g.constant(xs.clone()),
            g.constant(ws.clone()),
            g.constant(bs.clone()),
        );
        let y = g.conv2d(x, w, b, 2, 1).unwrap();
        let out = g.value(y);
        let (oh, ow) = (3, 3);
        for co in 0..3 {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bs.data()[co];
                    for ci in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (oy * 2 + ky) as isize - 1;
                                let ix = (ox * 2 + kx) as isize - 1;
                                if (0..5).contains(&iy) && (0..6).contains(&ix) {
                                    acc += xs.data()[(ci * 5 + iy as usize) * 6 + ix as usize]
                                        * ws.data()[((co * 2 + ci) * 3 + ky) * 3 + kx];
                                }
                            }
                        }
                    }
                    assert!((out.data()[(co * oh + oy) * ow + ox] - acc).abs() < 1e-12);
                }
            }
        }
    }
}
