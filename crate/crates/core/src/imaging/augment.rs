//! Reference-image augmentation: random horizontal flip and elastic warp.
//!
//! The elastic field is i.i.d. uniform noise smoothed by a Gaussian of width
//! `sigma`, rescaled so each displacement component has standard deviation
//! `alpha / 4` (so `alpha` bounds displacements at four standard
//! deviations). Both lengths are given at a 64-pixel reference width and
//! scale with the image.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::imaging::color::{LabImage, Planar};

pub const REFERENCE_WIDTH: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticParams {
    /// Displacement bound in pixels at 64 px width.
    pub alpha: f64,
    /// Smoothing width in pixels at 64 px width.
    pub sigma: f64,
    pub flip_probability: f64,
}

impl Default for ElasticParams {
    fn default() -> Self {
        Self {
            alpha: 8.0,
            sigma: 4.0,
            flip_probability: 0.5,
        }
    }
}

impl ElasticParams {
    /// (alpha, sigma) in pixels for an image `width` pixels wide.
    pub fn scaled(&self, width: usize) -> (f64, f64) {
        let k = width as f64 / REFERENCE_WIDTH;
        (self.alpha * k, self.sigma * k)
    }

    /// Per-component standard deviation of the displacement at `width`.
    pub fn displacement_std(&self, width: usize) -> f64 {
        self.scaled(width).0 / 4.0
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Displacement field `(dy, dx)`, each `h * w` row-major, in pixels.
pub fn displacement_field(
    h: usize,
    w: usize,
    params: &ElasticParams,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<f64>) {
    let (_, sigma) = params.scaled(w);
    let std = params.displacement_std(w);
    if std == 0.0 || sigma <= 0.0 {
        return (vec![0.0; h * w], vec![0.0; h * w]);
    }
    let kernel = gaussian_kernel(sigma);
    let r = kernel.len() / 2;
    // noise on a padded grid so every output sample sees a full kernel
    let (ph, pw) = (h + 2 * r, w + 2 * r);
    // Var(U(-1,1)) = 1/3; the separable kernel scales it by (sum k^2)^2
    let k2: f64 = kernel.iter().map(|v| v * v).sum();
    let smoothed_std = (k2 * k2 / 3.0).sqrt();
    let mut component = || {
        let noise: Vec<f64> = (0..ph * pw).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut rows = vec![0.0; ph * w];
        for y in 0..ph {
            for x in 0..w {
                rows[y * w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, kv)| kv * noise[y * pw + x + k])
                    .sum();
            }
        }
        let mut out = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let v: f64 = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, kv)| kv * rows[(y + k) * w + x])
                    .sum();
                out[y * w + x] = v / smoothed_std * std;
            }
        }
        out
    };
    let dy = component();
    let dx = component();
    (dy, dx)
}

fn bilinear_clamped(plane: &[f32], h: usize, w: usize, y: f64, x: f64) -> f32 {
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    let at = |yy: usize, xx: usize| plane[yy * w + xx] as f64;
    let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
    let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
    (top * (1.0 - fy) + bottom * fy) as f32
}

/// Resamples every channel at `(y + dy, x + dx)` with edge clamping.
pub fn warp(img: &Planar, dy: &[f64], dx: &[f64]) -> Planar {
    let (h, w) = (img.height(), img.width());
    let mut out = img.clone();
    for c in 0..img.channels() {
        let src = img.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                dst[i] = bilinear_clamped(src, h, w, y as f64 + dy[i], x as f64 + dx[i]);
            }
        }
    }
    out
}

/// Flip with probability `flip_probability`, then elastic warp.
pub fn augment_reference(img: &LabImage, seed: u64, params: &ElasticParams) -> LabImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flipped = if rng.random_bool(params.flip_probability.clamp(0.0, 1.0)) {
        img.flip_horizontal()
    } else {
        img.clone()
    };
    if params.alpha == 0.0 {
        return flipped;
    }
    let (dy, dx) = displacement_field(img.height(), img.width(), params, &mut rng);
    LabImage::from_planar_unchecked(warp(flipped.planar(), &dy, &dx))
}
