//! Image quality metrics on `[0, 1]` RGB images.

use crate::error::{Result, ScsError};
use crate::imaging::{Planar, RgbImage};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Rec. 601 luma weights.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    /// dB; `f64::INFINITY` when the images are identical.
    pub psnr: f64,
    pub ssim: f64,
    /// Colorfulness of the prediction.
    pub cn: f64,
}

impl MetricReport {
    /// Compares `pred` against `target`.
    pub fn compute(pred: &RgbImage, target: &RgbImage) -> Result<Self> {
        Ok(Self {
            psnr: psnr(pred, target)?,
            ssim: ssim(pred, target)?,
            cn: colorfulness(pred),
        })
    }

    /// Component-wise mean; an infinite PSNR in any entry makes the mean infinite.
    pub fn mean(reports: &[MetricReport]) -> Option<MetricReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        Some(MetricReport {
            psnr: reports.iter().map(|r| r.psnr).sum::<f64>() / n,
            ssim: reports.iter().map(|r| r.ssim).sum::<f64>() / n,
            cn: reports.iter().map(|r| r.cn).sum::<f64>() / n,
        })
    }
}

fn same_shape(a: &Planar, b: &Planar) -> Result<()> {
    if (a.channels(), a.height(), a.width()) != (b.channels(), b.height(), b.width()) {
        return Err(ScsError::Argument(format!(
            "image shapes differ: {}x{}x{} vs {}x{}x{}",
            a.channels(),
            a.height(),
            a.width(),
            b.channels(),
            b.height(),
            b.width()
        )));
    }
    Ok(())
}

pub fn psnr(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    same_shape(a, b)?;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        / a.data().len() as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    })
}

pub fn luma(img: &RgbImage) -> Vec<f64> {
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    (0..r.len())
        .map(|i| LUMA[0] * r[i] as f64 + LUMA[1] * g[i] as f64 + LUMA[2] * b[i] as f64)
        .collect()
}

pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Valid-mode separable filtering of an `h x w` plane.
fn filter_valid(x: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for xo in 0..ow {
            rows[y * ow + xo] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * x[y * w + xo + i])
                .sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for yo in 0..oh {
        for xo in 0..ow {
            out[yo * ow + xo] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * rows[(yo + i) * ow + xo])
                .sum();
        }
    }
    out
}

/// Single-scale SSIM on luma, averaged over every fully contained window.
pub fn ssim(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    same_shape(a, b)?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(ScsError::Argument(format!(
            "{h}x{w} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let (x, y) = (luma(a), luma(b));
    let k = gaussian_window();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
    let mu_x = filter_valid(&x, h, w, &k);
    let mu_y = filter_valid(&y, h, w, &k);
    let xx = filter_valid(&prod(&x, &x), h, w, &k);
    let yy = filter_valid(&prod(&y, &y), h, w, &k);
    let xy = filter_valid(&prod(&x, &y), h, w, &k);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    for i in 0..mu_x.len() {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let vx = xx[i] - mx * mx;
        let vy = yy[i] - my * my;
        let cov = xy[i] - mx * my;
        total +=
            ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    Ok(total / mu_x.len() as f64)
}

/// Hasler–Süsstrunk colorfulness on the `[0, 1]` scale.
pub fn colorfulness(img: &RgbImage) -> f64 {
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let n = r.len() as f64;
    let (mut s_rg, mut s_yb, mut q_rg, mut q_yb) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..r.len() {
        let rg = r[i] as f64 - g[i] as f64;
        let yb = 0.5 * (r[i] as f64 + g[i] as f64) - b[i] as f64;
        s_rg += rg;
        s_yb += yb;
        q_rg += rg * rg;
        q_yb += yb * yb;
    }
    let (m_rg, m_yb) = (s_rg / n, s_yb / n);
    let var_rg = (q_rg / n - m_rg * m_rg).max(0.0);
    let var_yb = (q_yb / n - m_yb * m_yb).max(0.0);
    (var_rg + var_yb).sqrt() + 0.3 * (m_rg * m_rg + m_yb * m_yb).sqrt()
}
