//! Alternating two-mode adversarial training.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scs_tensor::Graph;

use crate::config::RunConfig;
use crate::error::{Result, ScsError};
use crate::imaging::{load_dataset, make_pair, synth_dataset, LabImage, TrainBatch, TrainPair};
use crate::model::{Ctx, Discriminator, Generator, Mode, ParamSet};
use crate::training::adam::{collect_gradients, Adam, Moments};
use crate::training::checkpoint::{
    Checkpoint, CheckpointMeta, DISC_PREFIX, GEN_PREFIX, OPT_PREFIX,
};
use crate::training::losses::{
    content_loss, discriminator_adversarial_loss, generator_adversarial_loss, perceptual_loss,
    total_loss, LossBreakdown, SurrogateNet,
};

/// Independent random streams derived from the run seed.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Stream {
    Generator = 1,
    Discriminator = 2,
    Surrogate = 3,
    Shuffle = 4,
    Reference = 5,
    Data = 6,
}

/// SplitMix64 finalizer over `(seed, stream, index)`.
pub fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add((stream as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    /// 1-based step number.
    pub step: u64,
    pub mode: Mode,
    pub losses: LossBreakdown,
}

impl StepLog {
    pub const HEADER: &'static str = "step, mode, L_C, L_P, L_advG, L_advD, total";
}

impl fmt::Display for StepLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = &self.losses;
        write!(
            f,
            "{}, {}, {:.9e}, {:.9e}, {:.9e}, {:.9e}, {:.9e}",
            self.step, self.mode, l.content, l.perceptual, l.adv_g, l.adv_d, l.total
        )
    }
}

/// Builds the training pairs a config describes.
pub fn load_pairs(cfg: &RunConfig) -> Result<Vec<TrainPair>> {
    let images = match &cfg.dataset {
        Some(path) => load_dataset(path)?,
        None => synth_dataset(
            derive_seed(cfg.seed, Stream::Data, 0),
            cfg.synth_count,
            cfg.image_size,
        )?,
    };
    let pairs = images
        .iter()
        .map(|img| make_pair(img, cfg.scale))
        .collect::<Result<Vec<_>>>()?;
    let m = &cfg.model;
    for (i, p) in pairs.iter().enumerate() {
        if (p.source.height(), p.source.width()) != (m.input_height, m.input_width) {
            return Err(ScsError::Data(format!(
                "image {i} gives a {}x{} source at scale {}, model expects {}x{}",
                p.source.height(),
                p.source.width(),
                cfg.scale,
                m.input_height,
                m.input_width
            )));
        }
    }
    Ok(pairs)
}

pub struct Trainer {
    cfg: RunConfig,
    generator: Generator,
    discriminator: Discriminator,
    surrogate: SurrogateNet<f32>,
    gen_params: ParamSet<f32>,
    disc_params: ParamSet<f32>,
    gen_opt: Adam,
    disc_opt: Adam,
    step: u64,
    pairs: Vec<TrainPair>,
}

impl Trainer {
    pub fn new(cfg: RunConfig, pairs: Vec<TrainPair>) -> Result<Self> {
        cfg.validate()?;
        let generator = Generator::new(cfg.model.clone())?;
        let discriminator = Discriminator::new(cfg.model.disc_channels);
        let gen_params = generator.init_params(derive_seed(cfg.seed, Stream::Generator, 0))?;
        let disc_params =
            discriminator.init_params(derive_seed(cfg.seed, Stream::Discriminator, 0))?;
        Self::assemble(cfg, pairs, gen_params, disc_params, Adam::new, 0)
    }

    fn assemble(
        cfg: RunConfig,
        pairs: Vec<TrainPair>,
        gen_params: ParamSet<f32>,
        disc_params: ParamSet<f32>,
        make_opt: impl Fn(crate::training::AdamConfig) -> Adam,
        step: u64,
    ) -> Result<Self> {
        if pairs.len() < cfg.batch_size {
            return Err(ScsError::Data(format!(
                "{} training images cannot fill a batch of {}",
                pairs.len(),
                cfg.batch_size
            )));
        }
        let generator = Generator::new(cfg.model.clone())?;
        let discriminator = Discriminator::new(cfg.model.disc_channels);
        let surrogate = SurrogateNet::new(derive_seed(cfg.seed, Stream::Surrogate, 0))?;
        Ok(Self {
            gen_opt: make_opt(cfg.optimizer),
            disc_opt: make_opt(cfg.optimizer),
            cfg,
            generator,
            discriminator,
            surrogate,
            gen_params,
            disc_params,
            step,
            pairs,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn generator_params(&self) -> &ParamSet<f32> {
        &self.gen_params
    }

    pub fn discriminator_params(&self) -> &ParamSet<f32> {
        &self.disc_params
    }

    pub fn generator_optimizer(&self) -> &Adam {
        &self.gen_opt
    }

    /// Completed steps.
    /// Replaces the stopping rule and checkpoint interval, e.g. to extend a
    /// resumed run. Everything that shapes the trajectory stays fixed.
    pub fn set_schedule(
        &mut self,
        epochs: usize,
        max_steps: u64,
        checkpoint_every: u64,
    ) -> Result<()> {
        let mut cfg = self.cfg.clone();
        cfg.epochs = epochs;
        cfg.max_steps = max_steps;
        cfg.checkpoint_every = checkpoint_every;
        cfg.validate()?;
        self.cfg = cfg;
        Ok(())
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn steps_per_epoch(&self) -> u64 {
        (self.pairs.len() / self.cfg.batch_size) as u64
    }

    pub fn total_steps(&self) -> u64 {
        let all = self.steps_per_epoch() * self.cfg.epochs as u64;
        if self.cfg.max_steps > 0 {
            all.min(self.cfg.max_steps)
        } else {
            all
        }
    }

    /// Dataset indices of the batch at 0-based `step`.
    pub fn batch_indices(&self, step: u64) -> Vec<usize> {
        let spe = self.steps_per_epoch();
        let epoch = step / spe;
        let mut order: Vec<usize> = (0..self.pairs.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
            self.cfg.seed,
            Stream::Shuffle,
            epoch,
        )));
        let b = self.cfg.batch_size;
        let start = (step % spe) as usize * b;
        order[start..start + b].to_vec()
    }

    /// The minibatch and mode used at 0-based `step`.
    pub fn batch(&self, step: u64) -> Result<(TrainBatch, Mode)> {
        let mode = self.cfg.mode.mode_at(step);
        let idx = self.batch_indices(step);
        let pairs: Vec<&TrainPair> = idx.iter().map(|&i| &self.pairs[i]).collect();
        let refs: Option<Vec<LabImage>> = (mode == Mode::Ref).then(|| {
            pairs
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let k = step * self.cfg.batch_size as u64 + i as u64;
                    p.reference(
                        derive_seed(self.cfg.seed, Stream::Reference, k),
                        &self.cfg.elastic,
                    )
                })
                .collect()
        });
        Ok((TrainBatch::new(&pairs, refs.as_deref())?, mode))
    }

    /// One discriminator update followed by one generator update.
    pub fn train_step(&mut self) -> Result<StepLog> {
        let (batch, mode) = self.batch(self.step)?;
        let Self {
            cfg,
            generator,
            discriminator,
            surrogate,
            gen_params,
            disc_params,
            gen_opt,
            disc_opt,
            ..
        } = self;
        let mut gg = Graph::new();
        let src = gg.constant(batch.source.clone());
        let rf = batch.reference.clone().map(|r| gg.constant(r));
        let target = gg.constant(batch.target.clone());
        let (output, gen_bound) = {
            let mut cx = Ctx::new(&mut gg, gen_params, true);
            let trace = generator.forward(&mut cx, src, rf, mode, batch.scale)?;
            (trace.output, cx.into_bound())
        };

        // discriminator: generated batch enters as a constant
        let adv_d = {
            let mut gd = Graph::new();
            let real = gd.constant(batch.target.clone());
            let fake = gd.constant(gg.value(output).clone());
            let mut cx = Ctx::new(&mut gd, disc_params, true);
            let dr = discriminator.forward(&mut cx, real)?;
            let df = discriminator.forward(&mut cx, fake)?;
            let bound = cx.into_bound();
            let ld = discriminator_adversarial_loss(&mut gd, dr, df, cfg.symmetric_d)?;
            let value = scalar(&gd, ld);
            if !value.is_finite() {
                return Err(ScsError::Numerical(format!(
                    "discriminator loss is {value} at step {}",
                    self.step + 1
                )));
            }
            let mut grads = gd.backward(ld)?;
            disc_opt.step(disc_params, &collect_gradients(&bound, &mut grads)?)?;
            value
        };

        // generator: against the updated, frozen discriminator
        let lc = content_loss(&mut gg, output, target)?;
        let (lp, _) = perceptual_loss(&mut gg, surrogate, output, target, &cfg.weights.perceptual)?;
        let (dr, df) = {
            let mut cx = Ctx::new(&mut gg, disc_params, false);
            (
                discriminator.forward(&mut cx, target)?,
                discriminator.forward(&mut cx, output)?,
            )
        };
        let lg = generator_adversarial_loss(&mut gg, dr, df)?;
        let total = total_loss(&mut gg, lc, lp, lg, &cfg.weights)?;
        let losses = LossBreakdown {
            content: scalar(&gg, lc),
            perceptual: scalar(&gg, lp),
            adv_g: scalar(&gg, lg),
            adv_d,
            total: scalar(&gg, total),
        };
        if !losses.total.is_finite() {
            return Err(ScsError::Numerical(format!(
                "total loss is {} at step {} (L_C {}, L_P {}, L_advG {})",
                losses.total,
                self.step + 1,
                losses.content,
                losses.perceptual,
                losses.adv_g
            )));
        }
        let mut grads = gg.backward(total)?;
        gen_opt.step(gen_params, &collect_gradients(&gen_bound, &mut grads)?)?;
        self.step += 1;
        Ok(StepLog {
            step: self.step,
            mode,
            losses,
        })
    }

    /// Trains up to [`Trainer::total_steps`]. With `out`, appends to
    /// `out/train.log` and writes checkpoints there.
    pub fn run(
        &mut self,
        out: Option<&Path>,
        mut on_step: impl FnMut(&StepLog),
    ) -> Result<Vec<StepLog>> {
        let mut log_file = match out {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| ScsError::io(dir, e))?;
                let path = dir.join("train.log");
                let fresh = !path.exists() || self.step == 0;
                let mut f = OpenOptions::new()
                    .create(true)
                    .append(!fresh)
                    .write(true)
                    .truncate(fresh)
                    .open(&path)
                    .map_err(|e| ScsError::io(&path, e))?;
                if fresh {
                    writeln!(f, "{}", StepLog::HEADER).map_err(|e| ScsError::io(&path, e))?;
                }
                Some((f, path))
            }
            None => None,
        };
        let mut logs = Vec::new();
        while self.step < self.total_steps() {
            let entry = self.train_step()?;
            if let Some((f, path)) = log_file.as_mut() {
                writeln!(f, "{entry}").map_err(|e| ScsError::io(&*path, e))?;
            }
            on_step(&entry);
            logs.push(entry);
            if let Some(dir) = out {
                let every = self.cfg.checkpoint_every;
                if (every > 0 && self.step.is_multiple_of(every)) || self.step == self.total_steps()
                {
                    self.save_checkpoint(dir)?;
                }
            }
        }
        Ok(logs)
    }

    /// Writes `ckpt_{step}.scs` and refreshes `last.scs`.
    pub fn save_checkpoint(&self, dir: &Path) -> Result<PathBuf> {
        let ck = self.checkpoint();
        let path = dir.join(format!("ckpt_{:06}.scs", self.step));
        ck.save(&path)?;
        ck.save(&dir.join("last.scs"))?;
        Ok(path)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut tensors = BTreeMap::new();
        let mut adam_steps = BTreeMap::new();
        for (prefix, params, opt) in [
            (GEN_PREFIX, &self.gen_params, &self.gen_opt),
            (DISC_PREFIX, &self.disc_params, &self.disc_opt),
        ] {
            for (name, t) in params.iter() {
                tensors.insert(format!("{prefix}{name}"), t.clone());
            }
            for (name, st) in opt.state() {
                tensors.insert(format!("{OPT_PREFIX}{prefix}{name}/m"), st.m.clone());
                tensors.insert(format!("{OPT_PREFIX}{prefix}{name}/v"), st.v.clone());
                adam_steps.insert(format!("{prefix}{name}"), st.step);
            }
        }
        Checkpoint {
            meta: CheckpointMeta {
                config: self.cfg.clone(),
                step: self.step,
                adam_steps,
            },
            tensors,
        }
    }

    /// Continues a run from `ck`; `pairs` must be the run's dataset.
    pub fn resume(ck: &Checkpoint, pairs: Vec<TrainPair>) -> Result<Self> {
        let cfg = ck.meta.config.clone();
        cfg.validate()?;
        let (generator, gen_params) = ck.generator()?;
        let disc_params = ck.params(DISC_PREFIX);
        disc_params.matches_specs(&Discriminator::new(cfg.model.disc_channels).param_specs())?;
        let restore = |prefix: &str| -> Result<BTreeMap<String, Moments>> {
            let mut state = BTreeMap::new();
            for (key, &step) in ck.meta.adam_steps.iter() {
                let Some(name) = key.strip_prefix(prefix) else {
                    continue;
                };
                let get = |suffix: &str| {
                    ck.tensors
                        .get(&format!("{OPT_PREFIX}{key}/{suffix}"))
                        .cloned()
                        .ok_or_else(|| {
                            ScsError::Checkpoint(format!(
                                "missing optimizer moment `{key}/{suffix}`"
                            ))
                        })
                };
                state.insert(
                    name.to_string(),
                    Moments {
                        m: get("m")?,
                        v: get("v")?,
                        step,
                    },
                );
            }
            Ok(state)
        };
        let gen_state = restore(GEN_PREFIX)?;
        let disc_state = restore(DISC_PREFIX)?;
        let mut t = Self::assemble(cfg, pairs, gen_params, disc_params, Adam::new, ck.meta.step)?;
        debug_assert_eq!(t.generator, generator);
        t.gen_opt = Adam::restore(t.cfg.optimizer, gen_state);
        t.disc_opt = Adam::restore(t.cfg.optimizer, disc_state);
        Ok(t)
    }
}

fn scalar(g: &Graph<f32>, v: scs_tensor::Var) -> f64 {
    g.value(v).data()[0] as f64
}
