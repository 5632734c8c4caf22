//! Seeded synthetic "shapes" images used in place of a photo dataset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, ScsError};
use crate::imaging::color::RgbImage;

/// Images whose least varied RGB channel has a smaller standard deviation
/// than this are redrawn.
pub const MIN_CHANNEL_STD: f64 = 0.05;

const SUPERSAMPLE: usize = 4;

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let c = v * s;
    let x = c * (1.0 - (h6 % 2.0 - 1.0).abs());
    let (r, g, b) = match h6 as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

fn random_color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    hsv_to_rgb(
        rng.random(),
        rng.random_range(0.45..1.0),
        rng.random_range(0.3..1.0),
    )
}

enum Shape {
    Disk {
        cx: f64,
        cy: f64,
        r: f64,
        color: [f64; 3],
    },
    Rect {
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
        color: [f64; 3],
    },
    // rectangle filled with a linear ramp between two colours
    Ramp {
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
        dir: [f64; 2],
        from: [f64; 3],
        to: [f64; 3],
    },
}

impl Shape {
    fn random(rng: &mut ChaCha8Rng, size: f64) -> Self {
        match rng.random_range(0..3) {
            0 => Shape::Disk {
                cx: rng.random_range(0.0..size),
                cy: rng.random_range(0.0..size),
                r: rng.random_range(0.08..0.3) * size,
                color: random_color(rng),
            },
            1 => {
                let (w, h) = (
                    rng.random_range(0.15..0.6) * size,
                    rng.random_range(0.15..0.6) * size,
                );
                let (x0, y0) = (
                    rng.random_range(-0.1..0.9) * size,
                    rng.random_range(-0.1..0.9) * size,
                );
                Shape::Rect {
                    x0,
                    y0,
                    x1: x0 + w,
                    y1: y0 + h,
                    color: random_color(rng),
                }
            }
            _ => {
                let (w, h) = (
                    rng.random_range(0.25..0.7) * size,
                    rng.random_range(0.25..0.7) * size,
                );
                let (x0, y0) = (
                    rng.random_range(-0.1..0.8) * size,
                    rng.random_range(-0.1..0.8) * size,
                );
                let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                Shape::Ramp {
                    x0,
                    y0,
                    x1: x0 + w,
                    y1: y0 + h,
                    dir: [angle.cos(), angle.sin()],
                    from: random_color(rng),
                    to: random_color(rng),
                }
            }
        }
    }

    /// Colour at a sample point, if the point is inside.
    fn sample(&self, x: f64, y: f64) -> Option<[f64; 3]> {
        match *self {
            Shape::Disk { cx, cy, r, color } => {
                ((x - cx).powi(2) + (y - cy).powi(2) <= r * r).then_some(color)
            }
            Shape::Rect {
                x0,
                y0,
                x1,
                y1,
                color,
            } => (x >= x0 && x < x1 && y >= y0 && y < y1).then_some(color),
            Shape::Ramp {
                x0,
                y0,
                x1,
                y1,
                dir,
                from,
                to,
            } => {
                if !(x >= x0 && x < x1 && y >= y0 && y < y1) {
                    return None;
                }
                let half = [(x1 - x0) / 2.0, (y1 - y0) / 2.0];
                let reach = (half[0] * dir[0]).abs() + (half[1] * dir[1]).abs();
                let proj = (x - x0 - half[0]) * dir[0] + (y - y0 - half[1]) * dir[1];
                let t = (proj / reach * 0.5 + 0.5).clamp(0.0, 1.0);
                Some(std::array::from_fn(|c| from[c] + (to[c] - from[c]) * t))
            }
        }
    }
}

fn render(rng: &mut ChaCha8Rng, size: usize) -> RgbImage {
    let s = size as f64;
    let top = random_color(rng);
    let bottom = random_color(rng);
    let count = rng.random_range(2..=6);
    let shapes: Vec<Shape> = (0..count).map(|_| Shape::random(rng, s)).collect();
    let mut data = vec![0.0f32; 3 * size * size];
    let n = SUPERSAMPLE as f64;
    for y in 0..size {
        for x in 0..size {
            let mut acc = [0.0f64; 3];
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let px = x as f64 + (sx as f64 + 0.5) / n;
                    let py = y as f64 + (sy as f64 + 0.5) / n;
                    let t = py / s;
                    let mut color: [f64; 3] =
                        std::array::from_fn(|c| top[c] * (1.0 - t) + bottom[c] * t);
                    for shape in &shapes {
                        if let Some(c) = shape.sample(px, py) {
                            color = c;
                        }
                    }
                    for c in 0..3 {
                        acc[c] += color[c];
                    }
                }
            }
            for c in 0..3 {
                data[(c * size + y) * size + x] = (acc[c] / (n * n)).clamp(0.0, 1.0) as f32;
            }
        }
    }
    RgbImage::new(size, size, data).expect("sizes agree")
}

/// Standard deviation of each RGB channel.
pub fn channel_stds(img: &RgbImage) -> [f64; 3] {
    std::array::from_fn(|c| {
        let p = img.plane(c);
        let n = p.len() as f64;
        let mean = p.iter().map(|&v| v as f64).sum::<f64>() / n;
        (p.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n).sqrt()
    })
}

/// `n` images of `size x size` pixels; identical for identical seeds.
pub fn synth_dataset(seed: u64, n: usize, size: usize) -> Result<Vec<RgbImage>> {
    if n == 0 {
        return Err(ScsError::Argument("dataset size must be at least 1".into()));
    }
    if size < 4 {
        return Err(ScsError::Argument(format!(
            "image size {size} is too small"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let img = render(&mut rng, size);
        if channel_stds(&img).iter().all(|&s| s >= MIN_CHANNEL_STD) {
            out.push(img);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hsv_primaries() {
        assert_eq!(hsv_to_rgb(0.0, 1.0, 1.0), [1.0, 0.0, 0.0]);
        let g = hsv_to_rgb(1.0 / 3.0, 1.0, 1.0);
        assert!((g[1] - 1.0).abs() < 1e-12 && g[0].abs() < 1e-12);
    }

    #[test]
    fn rejects_zero_images() {
        assert!(synth_dataset(0, 0, 16).is_err());
    }
}
