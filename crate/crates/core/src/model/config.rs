use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScsError};

/// Number of linear layers in the continuous pixel mapping head.
pub const CPM_LAYERS: usize = 4;

/// Negative slope of every leaky rectifier in the networks.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Architecture hyperparameters shared by generator and discriminator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScsNetConfig {
    /// Width of the full-resolution features (`F_init`, `F_tex`, `F_color`).
    pub base_channels: usize,
    /// Width of the quarter-resolution features and of `F_cs`.
    pub deep_channels: usize,
    /// Query/key width is `deep_channels / attn_divisor`.
    pub attn_divisor: usize,
    pub pyramid_levels: usize,
    pub sr_blocks: usize,
    pub cpm_hidden: usize,
    /// Width of the first discriminator stage (doubles per stage).
    pub disc_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
}

impl Default for ScsNetConfig {
    fn default() -> Self {
        Self {
            base_channels: 64,
            deep_channels: 256,
            attn_divisor: 8,
            pyramid_levels: 3,
            sr_blocks: 4,
            cpm_hidden: 128,
            disc_channels: 32,
            input_height: 128,
            input_width: 128,
        }
    }
}

impl ScsNetConfig {
    /// Scaled-down widths for CPU training on 32x32 inputs.
    pub fn desk() -> Self {
        Self {
            base_channels: 16,
            deep_channels: 64,
            attn_divisor: 8,
            pyramid_levels: 2,
            sr_blocks: 2,
            cpm_hidden: 48,
            disc_channels: 16,
            input_height: 32,
            input_width: 32,
        }
    }

    /// Smallest sensible network, for finite-difference checks.
    pub fn tiny() -> Self {
        Self {
            base_channels: 8,
            deep_channels: 8,
            attn_divisor: 8,
            pyramid_levels: 2,
            sr_blocks: 1,
            cpm_hidden: 8,
            disc_channels: 4,
            input_height: 8,
            input_width: 8,
        }
    }

    pub fn attn_channels(&self) -> usize {
        self.deep_channels / self.attn_divisor
    }

    pub fn mid_channels(&self) -> usize {
        self.deep_channels / 2
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(ScsError::Config(m));
        if [
            self.base_channels,
            self.deep_channels,
            self.sr_blocks,
            self.cpm_hidden,
            self.disc_channels,
        ]
        .contains(&0)
        {
            return fail("channel counts and block counts must be positive".into());
        }
        if self.attn_divisor == 0 || !self.deep_channels.is_multiple_of(self.attn_divisor) {
            return fail(format!(
                "deep_channels {} is not divisible by attn_divisor {}",
                self.deep_channels, self.attn_divisor
            ));
        }
        if !self.deep_channels.is_multiple_of(2) {
            return fail(format!("deep_channels {} must be even", self.deep_channels));
        }
        if self.pyramid_levels == 0 {
            return fail("pyramid_levels must be >= 1".into());
        }
        self.check_input(self.input_height, self.input_width)
    }

    /// Checks that an `h x w` source survives the /4 encoders and the pyramid.
    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        if !h.is_multiple_of(4) || !w.is_multiple_of(4) || h == 0 || w == 0 {
            return Err(ScsError::Config(format!(
                "input {h}x{w} must be a positive multiple of 4"
            )));
        }
        let shrink = 1usize << (self.pyramid_levels - 1);
        if (h / 4) / shrink == 0 || (w / 4) / shrink == 0 {
            return Err(ScsError::Config(format!(
                "{} pyramid levels leave no pixels at {}x{} feature resolution",
                self.pyramid_levels,
                h / 4,
                w / 4
            )));
        }
        Ok(())
    }
}

/// Colorization path: source only, or guided by a reference image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Auto,
    Ref,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Auto => "auto",
            Mode::Ref => "ref",
        })
    }
}

impl FromStr for Mode {
    type Err = ScsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Mode::Auto),
            "ref" => Ok(Mode::Ref),
            other => Err(ScsError::Argument(format!(
                "unknown mode `{other}` (expected auto|ref)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        ScsNetConfig::default().validate().unwrap();
        ScsNetConfig::desk().validate().unwrap();
        ScsNetConfig::tiny().validate().unwrap();
    }

    #[test]
    fn default_widths() {
        let c = ScsNetConfig::default();
        assert_eq!(
            (
                c.base_channels,
                c.mid_channels(),
                c.deep_channels,
                c.attn_channels()
            ),
            (64, 128, 256, 32)
        );
    }

    #[test]
    fn indivisible_input_rejected() {
        let c = ScsNetConfig::desk();
        assert!(matches!(c.check_input(30, 32), Err(ScsError::Config(_))));
    }

    #[test]
    fn too_deep_pyramid_rejected() {
        let c = ScsNetConfig {
            pyramid_levels: 4,
            ..ScsNetConfig::desk()
        };
        // 32 / 4 = 8 -> 4 -> 2 -> 1 still fits; 5 levels does not
        c.validate().unwrap();
        let c = ScsNetConfig {
            pyramid_levels: 5,
            ..c
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn mode_parses() {
        assert_eq!("ref".parse::<Mode>().unwrap(), Mode::Ref);
        assert!("both".parse::<Mode>().is_err());
    }
}
