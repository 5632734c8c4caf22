//! Run configuration and its flat `key = value` file format.
//!
//! Blank lines and `#` comments are ignored; every key has a default and
//! unknown keys are rejected by name.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScsError};
use crate::imaging::ElasticParams;
use crate::model::{Mode, ScsNetConfig};
use crate::training::{AdamConfig, LossWeights};

/// Which generator path each training step takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeSchedule {
    /// Automatic on even steps, referential on odd steps.
    Alternate,
    Only(Mode),
}

impl ModeSchedule {
    pub fn mode_at(&self, step: u64) -> Mode {
        match self {
            ModeSchedule::Alternate if step.is_multiple_of(2) => Mode::Auto,
            ModeSchedule::Alternate => Mode::Ref,
            ModeSchedule::Only(m) => *m,
        }
    }
}

impl FromStr for ModeSchedule {
    type Err = ScsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alternate" => Ok(ModeSchedule::Alternate),
            other => Ok(ModeSchedule::Only(other.parse().map_err(|_| {
                ScsError::Config(format!(
                    "unknown mode `{other}` (expected alternate|auto|ref)"
                ))
            })?)),
        }
    }
}

impl std::fmt::Display for ModeSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModeSchedule::Alternate => f.write_str("alternate"),
            ModeSchedule::Only(m) => write!(f, "{m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ScsNetConfig,
    pub weights: LossWeights,
    pub optimizer: AdamConfig,
    pub elastic: ElasticParams,
    pub seed: u64,
    /// Manifest file or directory; `None` trains on generated shapes.
    pub dataset: Option<PathBuf>,
    pub synth_count: usize,
    pub image_size: usize,
    pub scale: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Upper bound on steps; 0 means `epochs` alone decides.
    pub max_steps: u64,
    /// 0 writes only the final checkpoint.
    pub checkpoint_every: u64,
    pub mode: ModeSchedule,
    /// Two-sided discriminator loss instead of the single-term form.
    pub symmetric_d: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ScsNetConfig::desk(),
            weights: LossWeights::default(),
            optimizer: AdamConfig::default(),
            elastic: ElasticParams::default(),
            seed: 0,
            dataset: None,
            synth_count: 64,
            image_size: 64,
            scale: 2.0,
            batch_size: 4,
            epochs: 8,
            max_steps: 0,
            checkpoint_every: 100,
            mode: ModeSchedule::Alternate,
            symmetric_d: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| ScsError::Config(format!("invalid value `{value}` for key `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(ScsError::Config(format!(
            "invalid value `{value}` for key `{key}` (expected true|false)"
        ))),
    }
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        match key {
            "base_channels" => m.base_channels = parse(key, value)?,
            "deep_channels" => m.deep_channels = parse(key, value)?,
            "attn_divisor" => m.attn_divisor = parse(key, value)?,
            "pyramid_levels" => m.pyramid_levels = parse(key, value)?,
            "sr_blocks" => m.sr_blocks = parse(key, value)?,
            "cpm_hidden" => m.cpm_hidden = parse(key, value)?,
            "disc_channels" => m.disc_channels = parse(key, value)?,
            "input_height" => m.input_height = parse(key, value)?,
            "input_width" => m.input_width = parse(key, value)?,
            "lambda_c" => self.weights.lambda_c = parse(key, value)?,
            "lambda_p" => self.weights.lambda_p = parse(key, value)?,
            "lambda_adv" => self.weights.lambda_adv = parse(key, value)?,
            "perceptual_weights" => {
                let parts: Vec<f64> = value
                    .split(',')
                    .map(|p| parse(key, p.trim()))
                    .collect::<Result<_>>()?;
                self.weights.perceptual = parts.try_into().map_err(|_| {
                    ScsError::Config(format!("`{key}` needs exactly 5 comma-separated values"))
                })?;
            }
            "lr" => self.optimizer.lr = parse(key, value)?,
            "beta1" => self.optimizer.beta1 = parse(key, value)?,
            "beta2" => self.optimizer.beta2 = parse(key, value)?,
            "adam_eps" => self.optimizer.eps = parse(key, value)?,
            "weight_decay" => self.optimizer.weight_decay = parse(key, value)?,
            "elastic_alpha" => self.elastic.alpha = parse(key, value)?,
            "elastic_sigma" => self.elastic.sigma = parse(key, value)?,
            "flip_probability" => self.elastic.flip_probability = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "dataset" => self.dataset = (!value.is_empty()).then(|| PathBuf::from(value)),
            "synth_count" => self.synth_count = parse(key, value)?,
            "image_size" => self.image_size = parse(key, value)?,
            "scale" => self.scale = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "max_steps" => self.max_steps = parse(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "mode" => self.mode = value.parse()?,
            "symmetric_d" => self.symmetric_d = parse_bool(key, value)?,
            _ => return Err(ScsError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ScsError::Config(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    n + 1
                ))
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| ScsError::Config(format!("line {}: {}", n + 1, strip_prefix(&e))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ScsError::io(path, e))?;
        Self::parse(&text)
    }

    /// Renders every key, so `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let w = &self.weights;
        let o = &self.optimizer;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("base_channels", m.base_channels.to_string());
        kv("deep_channels", m.deep_channels.to_string());
        kv("attn_divisor", m.attn_divisor.to_string());
        kv("pyramid_levels", m.pyramid_levels.to_string());
        kv("sr_blocks", m.sr_blocks.to_string());
        kv("cpm_hidden", m.cpm_hidden.to_string());
        kv("disc_channels", m.disc_channels.to_string());
        kv("input_height", m.input_height.to_string());
        kv("input_width", m.input_width.to_string());
        kv("lambda_c", w.lambda_c.to_string());
        kv("lambda_p", w.lambda_p.to_string());
        kv("lambda_adv", w.lambda_adv.to_string());
        kv(
            "perceptual_weights",
            w.perceptual
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("lr", o.lr.to_string());
        kv("beta1", o.beta1.to_string());
        kv("beta2", o.beta2.to_string());
        kv("adam_eps", o.eps.to_string());
        kv("weight_decay", o.weight_decay.to_string());
        kv("elastic_alpha", self.elastic.alpha.to_string());
        kv("elastic_sigma", self.elastic.sigma.to_string());
        kv(
            "flip_probability",
            self.elastic.flip_probability.to_string(),
        );
        kv("seed", self.seed.to_string());
        kv(
            "dataset",
            self.dataset
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        );
        kv("synth_count", self.synth_count.to_string());
        kv("image_size", self.image_size.to_string());
        kv("scale", self.scale.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("epochs", self.epochs.to_string());
        kv("max_steps", self.max_steps.to_string());
        kv("checkpoint_every", self.checkpoint_every.to_string());
        kv("mode", self.mode.to_string());
        kv("symmetric_d", self.symmetric_d.to_string());
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.weights.validate()?;
        let o = &self.optimizer;
        if !(o.lr > 0.0
            && (0.0..1.0).contains(&o.beta1)
            && (0.0..1.0).contains(&o.beta2)
            && o.eps > 0.0)
            || o.weight_decay < 0.0
        {
            return Err(ScsError::Config("optimizer constants out of range".into()));
        }
        if !(self.scale.is_finite() && self.scale > 1.0) {
            return Err(ScsError::Config(format!(
                "scale {} must be > 1",
                self.scale
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(ScsError::Config(
                "batch_size and epochs must be positive".into(),
            ));
        }
        if self.dataset.is_none() && (self.synth_count == 0 || self.image_size == 0) {
            return Err(ScsError::Config(
                "synth_count and image_size must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.elastic.flip_probability)
            || self.elastic.alpha < 0.0
            || self.elastic.sigma < 0.0
        {
            return Err(ScsError::Config("elastic parameters out of range".into()));
        }
        Ok(())
    }
}

fn strip_prefix(e: &ScsError) -> String {
    match e {
        ScsError::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.seed = 17;
        cfg.scale = 2.5;
        cfg.mode = ModeSchedule::Only(Mode::Ref);
        cfg.dataset = Some(PathBuf::from("data/train"));
        cfg.weights.perceptual[4] = 2.0;
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::parse("seed = 1\nlearning_rate = 0.1\n").unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("learning_rate") && msg.contains("line 2"),
            "{msg}"
        );
    }

    #[test]
    fn bad_value_is_named() {
        let msg = RunConfig::parse("batch_size = four")
            .unwrap_err()
            .to_string();
        assert!(msg.contains("batch_size") && msg.contains("four"), "{msg}");
    }

    #[test]
    fn comments_and_blanks() {
        let cfg = RunConfig::parse("# desk run\n\nseed = 3 # trailing\n").unwrap();
        assert_eq!(cfg.seed, 3);
    }

    #[test]
    fn schedule_alternates() {
        let s = ModeSchedule::Alternate;
        let modes: Vec<Mode> = (0..4).map(|t| s.mode_at(t)).collect();
        assert_eq!(modes, vec![Mode::Auto, Mode::Ref, Mode::Auto, Mode::Ref]);
    }

    #[test]
    fn perceptual_weights_need_five_values() {
        assert!(RunConfig::parse("perceptual_weights = 1,2,3").is_err());
    }
}
