//! Seeded parameter initializers.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::element::Element;
use crate::tensor::Tensor;

/// Gain of a leaky rectifier with negative slope `slope`.
pub fn leaky_relu_gain(slope: f64) -> f64 {
    (2.0 / (1.0 + slope * slope)).sqrt()
}

/// Kaiming-uniform: U(-b, b) with `b = gain * sqrt(3 / fan_in)`.
pub fn kaiming_uniform<T: Element>(
    shape: &[usize],
    fan_in: usize,
    gain: f64,
    rng: &mut impl Rng,
) -> Tensor<T> {
    let bound = gain * (3.0 / fan_in.max(1) as f64).sqrt();
    Tensor::from_fn(shape.to_vec(), |_| {
        T::from_f64_lossy(rng.random_range(-bound..=bound))
    })
}

/// Rows (or columns, whichever are fewer) of the `[shape[0], rest]` matrix
/// are orthonormal, then scaled by `gain`.
pub fn orthogonal<T: Element>(shape: &[usize], gain: f64, rng: &mut impl Rng) -> Tensor<T> {
    let rows = shape[0];
    let cols: usize = shape[1..].iter().product();
    let mut m: Vec<f64> = (0..rows * cols)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    let (count, len, stride_vec, stride_el) = if rows <= cols {
        (rows, cols, cols, 1)
    } else {
        (cols, rows, 1, cols)
    };
    let at = |v: usize, e: usize| v * stride_vec + e * stride_el;
    for v in 0..count {
        for u in 0..v {
            let dot: f64 = (0..len).map(|e| m[at(v, e)] * m[at(u, e)]).sum();
            for e in 0..len {
                m[at(v, e)] -= dot * m[at(u, e)];
            }
        }
        let norm = (0..len)
            .map(|e| m[at(v, e)].powi(2))
            .sum::<f64>()
            .sqrt()
            .max(1e-12);
        for e in 0..len {
            m[at(v, e)] /= norm;
        }
    }
    Tensor::from_fn(shape.to_vec(), |i| T::from_f64_lossy(gain * m[i]))
}
