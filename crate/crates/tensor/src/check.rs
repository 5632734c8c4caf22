//! Central finite-difference verification of analytic gradients (f64).

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TensorError};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Default perturbation for central differences.
pub const FD_EPSILON: f64 = 1e-5;

/// Denominator floor of [`relative_error`]; below it the error is absolute.
pub const RELATIVE_FLOOR: f64 = 1e-3;

/// `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

#[derive(Debug, Clone)]
pub struct CheckOptions {
    pub epsilon: f64,
    /// Seed of the random projection that turns the output into a scalar.
    pub probe_seed: u64,
    /// Check this many randomly chosen input elements instead of all.
    pub samples: Option<usize>,
    /// Only these inputs are perturbed (all when `None`).
    pub inputs: Option<Vec<usize>>,
    pub adjoint_fault: Option<String>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            epsilon: FD_EPSILON,
            probe_seed: 0,
            samples: None,
            inputs: None,
            adjoint_fault: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckReport {
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    pub checked: usize,
}

/// Compares the engine's gradient of `sum(f(inputs) * R)` (R a fixed random
/// probe) with central differences of the same scalar.
///
/// `f` may return any error type that absorbs engine errors.
pub fn check_gradients<F, E>(
    inputs: &[Tensor<f64>],
    options: &CheckOptions,
    f: F,
) -> std::result::Result<CheckReport, E>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> std::result::Result<Var, E>,
    E: From<TensorError>,
{
    let mut g = Graph::new();
    if let Some(op) = &options.adjoint_fault {
        g.inject_adjoint_fault(op);
    }
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.probe_seed);
    let probe = Tensor::from_fn(g.shape(out).to_vec(), |_| rng.random_range(-1.0..1.0));
    let p = g.constant(probe.clone());
    let weighted = g.mul(out, p)?;
    let loss = g.sum(weighted)?;
    let grads = g.backward(loss)?;

    let eval = |perturbed: &[Tensor<f64>]| -> std::result::Result<f64, E> {
        let mut h = Graph::new();
        let vs: Vec<Var> = perturbed.iter().map(|t| h.constant(t.clone())).collect();
        let o = f(&mut h, &vs)?;
        Ok(h.value(o)
            .data()
            .iter()
            .zip(probe.data())
            .map(|(a, b)| a * b)
            .sum())
    };

    let chosen: Vec<usize> = options
        .inputs
        .clone()
        .unwrap_or_else(|| (0..inputs.len()).collect());
    let mut coords: Vec<(usize, usize)> = chosen
        .iter()
        .flat_map(|&i| (0..inputs[i].numel()).map(move |e| (i, e)))
        .collect();
    if let Some(k) = options.samples {
        if k < coords.len() {
            let mut pick = sample(&mut rng, coords.len(), k).into_vec();
            pick.sort_unstable();
            coords = pick.into_iter().map(|i| coords[i]).collect();
        }
    }

    let mut report = CheckReport {
        max_relative_error: 0.0,
        max_absolute_error: 0.0,
        checked: coords.len(),
    };
    let mut work = inputs.to_vec();
    for (i, e) in coords {
        let orig = work[i].data()[e];
        work[i].data_mut()[e] = orig + options.epsilon;
        let up = eval(&work)?;
        work[i].data_mut()[e] = orig - options.epsilon;
        let down = eval(&work)?;
        work[i].data_mut()[e] = orig;
        let numeric = (up - down) / (2.0 * options.epsilon);
        let analytic = grads.get(vars[i]).map_or(0.0, |t| t.data()[e]);
        report.max_relative_error = report
            .max_relative_error
            .max(relative_error(analytic, numeric));
        report.max_absolute_error = report.max_absolute_error.max((analytic - numeric).abs());
    }
    Ok(report)
}

/// A named primitive with an input generator, for batch verification.
pub struct PrimitiveCase {
    pub name: &'static str,
    pub inputs: fn(&mut ChaCha8Rng) -> Vec<Tensor<f64>>,
    pub apply: fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
}

fn uniform(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

// magnitudes in [0.1, 1) keep abs and leaky-relu kinks out of reach of the
// finite-difference stencil
fn off_kink(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| {
        let m = rng.random_range(0.1..1.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

macro_rules! case {
    ($name:literal, |$r:ident| $inputs:expr, |$g:ident, $v:ident| $apply:expr) => {
        PrimitiveCase {
            name: $name,
            inputs: |$r| $inputs,
            apply: |$g, $v| $apply,
        }
    };
}

/// Every differentiable op of the engine, each on small random inputs.
pub fn primitive_suite() -> Vec<PrimitiveCase> {
    vec![
        case!(
            "add",
            |r| vec![uniform(&[2, 3, 2], r), uniform(&[3, 1], r)],
            |g, v| g.add(v[0], v[1])
        ),
        case!(
            "sub",
            |r| vec![uniform(&[4], r), uniform(&[], r)],
            |g, v| g.sub(v[0], v[1])
        ),
        case!(
            "mul",
            |r| vec![uniform(&[2, 1, 3], r), uniform(&[4, 1], r)],
            |g, v| g.mul(v[0], v[1])
        ),
        case!("add_scalar", |r| vec![uniform(&[5], r)], |g, v| g
            .add_scalar(v[0], 1.5)),
        case!("mul_scalar", |r| vec![uniform(&[5], r)], |g, v| g
            .mul_scalar(v[0], -2.5)),
        case!("sigmoid", |r| vec![uniform(&[3, 4], r)], |g, v| g
            .sigmoid(v[0])),
        case!("leaky_relu", |r| vec![off_kink(&[3, 4], r)], |g, v| g
            .leaky_relu(v[0], 0.2)),
        case!("square", |r| vec![uniform(&[5], r)], |g, v| g.square(v[0])),
        case!("abs_mean", |r| vec![off_kink(&[3, 4], r)], |g, v| g
            .abs_mean(v[0])),
        case!("reduce_mean", |r| vec![uniform(&[3, 4], r)], |g, v| g
            .reduce_mean(v[0])),
        case!("sum", |r| vec![uniform(&[3, 4], r)], |g, v| g.sum(v[0])),
        case!("mean_axis", |r| vec![uniform(&[2, 3, 4], r)], |g, v| g
            .mean_axis(v[0], 1)),
        case!(
            "matmul",
            |r| vec![uniform(&[2, 4, 3], r), uniform(&[2, 5, 4], r)],
            |g, v| g.matmul_t(v[0], v[1], true, true)
        ),
        case!("reshape", |r| vec![uniform(&[2, 6], r)], |g, v| g
            .reshape(v[0], &[3, 4])),
        case!("permute", |r| vec![uniform(&[2, 3, 4], r)], |g, v| g
            .permute(v[0], &[2, 0, 1])),
        case!(
            "concat",
            |r| vec![uniform(&[2, 3, 2, 2], r), uniform(&[2, 1, 2, 2], r)],
            |g, v| g.concat_channels(&[v[0], v[1]])
        ),
        case!("narrow", |r| vec![uniform(&[2, 5, 3], r)], |g, v| g
            .narrow(v[0], 1, 1, 3)),
        case!(
            "conv2d",
            |r| vec![
                uniform(&[2, 2, 6, 5], r),
                uniform(&[3, 2, 3, 3], r),
                uniform(&[3], r)
            ],
            |g, v| g.conv2d(v[0], v[1], v[2], 2, 1)
        ),
        case!(
            "linear",
            |r| vec![
                uniform(&[2, 3, 4], r),
                uniform(&[5, 4], r),
                uniform(&[5], r)
            ],
            |g, v| g.linear(v[0], v[1], v[2])
        ),
        case!("softmax", |r| vec![uniform(&[2, 3, 4], r)], |g, v| g
            .softmax(v[0], 2)),
        case!(
            "resize_bilinear",
            |r| vec![uniform(&[1, 2, 3, 4], r)],
            |g, v| g.resize_bilinear(v[0], 7, 5)
        ),
        case!("avg_pool2", |r| vec![uniform(&[1, 2, 4, 5], r)], |g, v| g
            .avg_pool2(v[0])),
    ]
}

/// Worst relative error of `case` over `seeds` input/probe draws.
pub fn check_case(
    case: &PrimitiveCase,
    first_seed: u64,
    seeds: u64,
    adjoint_fault: Option<&str>,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for seed in first_seed..first_seed + seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(7919).wrapping_add(13));
        let inputs = (case.inputs)(&mut rng);
        let options = CheckOptions {
            probe_seed: seed,
            adjoint_fault: adjoint_fault.map(str::to_string),
            ..CheckOptions::default()
        };
        let report = check_gradients(&inputs, &options, case.apply)?;
        worst = worst.max(report.max_relative_error);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_corrupted_adjoint() {
        let x = Tensor::from_fn([2, 3], |i| 0.3 + i as f64 * 0.1);
        let run = |fault: Option<&str>| {
            let options = CheckOptions {
                adjoint_fault: fault.map(str::to_string),
                ..CheckOptions::default()
            };
            check_gradients(std::slice::from_ref(&x), &options, |g, v| g.sigmoid(v[0])).unwrap()
        };
        assert!(run(None).max_relative_error < 1e-8);
        assert!(run(Some("sigmoid")).max_relative_error > 0.5);
    }
}
