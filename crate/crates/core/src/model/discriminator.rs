use scs_tensor::{Element, Var};

use crate::error::{Result, ScsError};
use crate::model::params::{conv_spec, linear_spec, Ctx, Init, ParamSet, ParamSpec};

const STAGES: usize = 4;

/// Four stride-2 convolutions, global average pooling and a linear logit.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    channels: usize,
}

impl Discriminator {
    /// `channels` is the width of the first stage; each stage doubles it.
    pub fn new(channels: usize) -> Self {
        Self { channels }
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut s = Vec::new();
        let mut cin = 3;
        for i in 0..STAGES {
            let cout = self.channels << i;
            conv_spec(
                &mut s,
                &format!("disc.conv{i}"),
                cin,
                cout,
                3,
                Init::Kaiming { fan_in: 0 },
            );
            cin = cout;
        }
        linear_spec(&mut s, "disc.fc", cin, 1);
        s
    }

    pub fn init_params<T: Element>(&self, seed: u64) -> Result<ParamSet<T>> {
        ParamSet::from_specs(&self.param_specs(), seed)
    }

    /// `[B,3,H,W] -> [B,1]` raw logits.
    pub fn forward<T: Element>(&self, cx: &mut Ctx<'_, '_, T>, img: Var) -> Result<Var> {
        let dims = cx.g.shape(img).to_vec();
        if dims.len() != 4 || dims[1] != 3 {
            return Err(ScsError::Argument(format!(
                "discriminator input must be [B,3,H,W], got {dims:?}"
            )));
        }
        let mut x = img;
        for i in 0..STAGES {
            x = cx.conv(&format!("disc.conv{i}"), x, 2, 1)?;
            x = cx.act(x)?;
        }
        let s = cx.g.shape(x).to_vec();
        let x = cx.g.reshape(x, &[s[0], s[1], s[2] * s[3]])?;
        let x = cx.g.mean_axis(x, 2)?;
        cx.linear("disc.fc", x)
    }
}
