//! Gradient verification of the engine primitives and of the assembled
//! generator, shared by the command line and the test suites.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scs_tensor::check::{check_case, check_gradients, primitive_suite, CheckOptions};
use scs_tensor::{Graph, Tensor, Var};

use crate::error::Result;
use crate::model::{Ctx, Discriminator, Generator, Mode, ParamSet, ScsNetConfig};
use crate::training::{
    content_loss, generator_adversarial_loss, perceptual_loss, total_loss, LossWeights,
    SurrogateNet,
};

pub const PRIMITIVE_TOLERANCE: f64 = 1e-6;
pub const STAGE_TOLERANCE: f64 = 1e-5;
pub const END_TO_END_TOLERANCE: f64 = 1e-4;
/// Randomly chosen coordinates checked per seed in the model-level cases.
pub const MODEL_SAMPLES: usize = 30;
const SCALE: f64 = 2.0;

type Stage = fn(&Bench, u64, &CheckOptions) -> Result<f64>;

#[derive(Debug, Clone)]
pub struct GradcheckOptions {
    pub seed: u64,
    pub seeds: u64,
    /// Name of an op whose backward rule is deliberately corrupted.
    pub adjoint_fault: Option<String>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            seeds: 20,
            adjoint_fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckRow {
    pub name: String,
    pub tolerance: f64,
    pub max_relative_error: f64,
}

impl GradcheckRow {
    pub fn passed(&self) -> bool {
        self.max_relative_error.is_finite() && self.max_relative_error < self.tolerance
    }
}

/// Every primitive, then the encoder, decoder and full generator-plus-loss.
pub fn run(opts: &GradcheckOptions) -> Result<Vec<GradcheckRow>> {
    let mut rows = primitive_rows(opts)?;
    rows.extend(model_rows(opts)?);
    Ok(rows)
}

pub fn primitive_rows(opts: &GradcheckOptions) -> Result<Vec<GradcheckRow>> {
    primitive_suite()
        .iter()
        .map(|case| {
            let worst = check_case(case, opts.seed, opts.seeds, opts.adjoint_fault.as_deref())?;
            Ok(GradcheckRow {
                name: case.name.to_string(),
                tolerance: PRIMITIVE_TOLERANCE,
                max_relative_error: worst,
            })
        })
        .collect()
}

pub fn model_rows(opts: &GradcheckOptions) -> Result<Vec<GradcheckRow>> {
    let bench = Bench::new()?;
    let stages: [(&str, f64, Stage); 4] = [
        ("source encoder", STAGE_TOLERANCE, Bench::source_encoder),
        (
            "reference attention",
            STAGE_TOLERANCE,
            Bench::reference_attention,
        ),
        ("decoder", STAGE_TOLERANCE, Bench::decoder),
        ("generator + loss", END_TO_END_TOLERANCE, Bench::end_to_end),
    ];
    let mut rows = Vec::new();
    for (name, tolerance, stage) in stages {
        let mut worst = 0.0f64;
        for seed in opts.seed..opts.seed + opts.seeds {
            let options = CheckOptions {
                probe_seed: seed,
                samples: Some(MODEL_SAMPLES),
                adjoint_fault: opts.adjoint_fault.clone(),
                ..CheckOptions::default()
            };
            worst = worst.max(stage(&bench, seed, &options)?);
        }
        rows.push(GradcheckRow {
            name: name.to_string(),
            tolerance,
            max_relative_error: worst,
        });
    }
    Ok(rows)
}

pub fn format_table(rows: &[GradcheckRow]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(4);
    let mut out = format!(
        "{:<width$}  {:>12}  {:>9}  result\n",
        "case", "max rel err", "tolerance"
    );
    for r in rows {
        let verdict = if r.passed() { "pass" } else { "FAIL" };
        let _ = writeln!(
            out,
            "{:<width$}  {:>12.3e}  {:>9.0e}  {verdict}",
            r.name, r.max_relative_error, r.tolerance
        );
    }
    out
}

/// The tiny generator in f64 with every parameter perturbed away from its
/// initial value, so zero-initialized terms still carry gradient.
struct Bench {
    gen: Generator,
    disc: Discriminator,
    disc_params: ParamSet<f64>,
    surrogate: SurrogateNet<f64>,
    weights: LossWeights,
}

impl Bench {
    fn new() -> Result<Self> {
        let cfg = ScsNetConfig::tiny();
        let disc = Discriminator::new(cfg.disc_channels);
        Ok(Self {
            gen: Generator::new(cfg)?,
            disc_params: disc.init_params(11)?,
            disc,
            surrogate: SurrogateNet::new(12)?,
            weights: LossWeights::default(),
        })
    }

    fn params(&self, seed: u64) -> Result<ParamSet<f64>> {
        let mut params = self.gen.init_params::<f64>(seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let names: Vec<String> = params.names().cloned().collect();
        for name in names {
            let t = params.get_mut(&name).expect("listed name");
            for v in t.data_mut() {
                *v += rng.random_range(-0.05..0.05);
            }
        }
        Ok(params)
    }

    fn data(&self, seed: u64, shape: &[usize]) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(
            seed.wrapping_mul(0x9e37_79b9)
                .wrapping_add(shape.len() as u64),
        );
        Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
    }

    fn side(&self) -> usize {
        self.gen.config().input_height
    }

    /// Runs `build` with `data` and the parameters whose names start with one
    /// of `prefixes` as checked inputs; other parameters stay constant.
    fn check(
        &self,
        seed: u64,
        options: &CheckOptions,
        data: Vec<Tensor<f64>>,
        prefixes: &[&str],
        build: impl Fn(&mut Ctx<'_, '_, f64>, &[Var]) -> Result<Var>,
    ) -> Result<f64> {
        let params = self.params(seed)?;
        let names: Vec<String> = params
            .names()
            .filter(|n| prefixes.iter().any(|p| n.starts_with(p)))
            .cloned()
            .collect();
        let n_data = data.len();
        let mut inputs = data;
        inputs.extend(
            names
                .iter()
                .map(|n| params.get(n).expect("listed name").clone()),
        );
        let options = CheckOptions {
            inputs: Some((n_data..inputs.len()).collect()),
            ..options.clone()
        };
        let report = check_gradients(&inputs, &options, |g: &mut Graph<f64>, vars: &[Var]| {
            let bound: BTreeMap<String, Var> = names
                .iter()
                .cloned()
                .zip(vars[n_data..].iter().copied())
                .collect();
            let mut cx = Ctx::with_bound(g, &params, bound);
            build(&mut cx, &vars[..n_data])
        })?;
        Ok(report.max_relative_error)
    }

    fn source_encoder(&self, seed: u64, options: &CheckOptions) -> Result<f64> {
        let s = self.side();
        let source = self.data(seed, &[1, 1, s, s]);
        self.check(
            seed,
            options,
            vec![source],
            &["init_conv.", "enc_src."],
            |cx, d| {
                let f_init = self.gen.init_conv(cx, d[0])?;
                self.gen.encode_source(cx, f_init)
            },
        )
    }

    fn reference_attention(&self, seed: u64, options: &CheckOptions) -> Result<f64> {
        let s = self.side();
        let cfg = self.gen.config();
        let f_s = self.data(seed, &[1, cfg.deep_channels, s / 4, s / 4]);
        let reference = self.data(seed + 1, &[1, 3, s, s]);
        self.check(
            seed,
            options,
            vec![f_s, reference],
            &["enc_ref.", "pvcattn."],
            |cx, d| {
                let f_r = self.gen.encode_reference(cx, d[1])?;
                Ok(self.gen.pvcattn(cx, d[0], f_r)?.0)
            },
        )
    }

    fn decoder(&self, seed: u64, options: &CheckOptions) -> Result<f64> {
        let s = self.side();
        let f_int = self.data(seed, &[1, self.gen.config().deep_channels, s / 4, s / 4]);
        self.check(seed, options, vec![f_int], &["decoder."], |cx, d| {
            self.gen.decode_color(cx, d[0])
        })
    }

    fn end_to_end(&self, seed: u64, options: &CheckOptions) -> Result<f64> {
        let s = self.side();
        let source = self.data(seed, &[1, 1, s, s]);
        let reference = self.data(seed + 1, &[1, 3, s, s]);
        let out = (s as f64 * SCALE) as usize;
        let target = self.data(seed + 2, &[1, 3, out, out]);
        self.check(seed, options, vec![source, reference], &[""], |cx, d| {
            let trace = self.gen.forward(cx, d[0], Some(d[1]), Mode::Ref, SCALE)?;
            let target = cx.g.constant(target.clone());
            let l_c = content_loss(cx.g, trace.output, target)?;
            let (l_p, _) = perceptual_loss(
                cx.g,
                &self.surrogate,
                trace.output,
                target,
                &self.weights.perceptual,
            )?;
            let mut dx = Ctx::new(cx.g, &self.disc_params, false);
            let real = self.disc.forward(&mut dx, target)?;
            let fake = self.disc.forward(&mut dx, trace.output)?;
            let l_adv = generator_adversarial_loss(cx.g, real, fake)?;
            total_loss(cx.g, l_c, l_p, l_adv, &self.weights)
        })
    }
}
