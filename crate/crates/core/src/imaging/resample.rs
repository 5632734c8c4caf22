//! Separable bicubic resampling (Keys kernel, `a = -0.5`) with edge clamping.
//!
//! When shrinking, the kernel is stretched by the scale factor so it acts as
//! an anti-aliasing filter.

use crate::error::{Result, ScsError};
use crate::imaging::color::Planar;

pub const BICUBIC_A: f64 = -0.5;

/// Keys cubic convolution kernel.
pub fn cubic(x: f64) -> f64 {
    let a = BICUBIC_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Normalized taps of one output coordinate.
#[derive(Debug, Clone)]
pub struct Contribution {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Input position (pixel-center convention) sampled by output index `i`.
pub fn source_center(i: usize, input: usize, output: usize) -> f64 {
    (i as f64 + 0.5) * input as f64 / output as f64 - 0.5
}

pub fn contributions(input: usize, output: usize) -> Vec<Contribution> {
    let scale = input as f64 / output as f64;
    let stretch = scale.max(1.0);
    let support = 2.0 * stretch;
    (0..output)
        .map(|i| {
            let center = source_center(i, input, output);
            let lo = (center - support).floor() as isize;
            let hi = (center + support).ceil() as isize;
            let mut indices = Vec::new();
            let mut weights = Vec::new();
            for j in lo..=hi {
                let w = cubic((center - j as f64) / stretch);
                if w != 0.0 {
                    indices.push(j.clamp(0, input as isize - 1) as usize);
                    weights.push(w);
                }
            }
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            Contribution { indices, weights }
        })
        .collect()
}

/// Bicubic resize of every channel to `out_h x out_w`.
pub fn resize_bicubic(img: &Planar, out_h: usize, out_w: usize) -> Result<Planar> {
    if out_h == 0 || out_w == 0 {
        return Err(ScsError::Argument(format!(
            "bicubic output {out_h}x{out_w} is empty"
        )));
    }
    let (h, w) = (img.height(), img.width());
    let cx = contributions(w, out_w);
    let cy = contributions(h, out_h);
    let mut out = Vec::with_capacity(img.channels() * out_h * out_w);
    let mut tmp = vec![0.0f64; h * out_w];
    for c in 0..img.channels() {
        let plane = img.plane(c);
        for y in 0..h {
            let row = &plane[y * w..(y + 1) * w];
            for (x, con) in cx.iter().enumerate() {
                tmp[y * out_w + x] = con
                    .indices
                    .iter()
                    .zip(&con.weights)
                    .map(|(&j, &wt)| row[j] as f64 * wt)
                    .sum();
            }
        }
        for con in &cy {
            for x in 0..out_w {
                let v: f64 = con
                    .indices
                    .iter()
                    .zip(&con.weights)
                    .map(|(&j, &wt)| tmp[j * out_w + x] * wt)
                    .sum();
                out.push(v as f32);
            }
        }
    }
    Planar::new(img.channels(), out_h, out_w, out)
}

/// Output size of shrinking `n` by `factor`.
pub fn downscaled_dim(n: usize, factor: f64) -> usize {
    (n as f64 / factor + 1e-9).floor() as usize
}

/// Bicubic downsample by a real `factor` (output `floor(n / factor)`).
pub fn bicubic_downsample(img: &Planar, factor: f64) -> Result<Planar> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(ScsError::Argument(format!(
            "downsample factor {factor} must be positive"
        )));
    }
    let (oh, ow) = (
        downscaled_dim(img.height(), factor),
        downscaled_dim(img.width(), factor),
    );
    if oh == 0 || ow == 0 {
        return Err(ScsError::Argument(format!(
            "downsampling {}x{} by {factor} leaves no pixels",
            img.height(),
            img.width()
        )));
    }
    resize_bicubic(img, oh, ow)
}
