//! Content, perceptual and relativistic adversarial losses.

use scs_tensor::{Element, Graph, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScsError};
use crate::model::params::{conv_spec, Ctx, Init, ParamSet, ParamSpec};
use crate::model::LEAKY_SLOPE;

pub const PERCEPTUAL_LAYERS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_c: f64,
    pub lambda_p: f64,
    pub lambda_adv: f64,
    pub perceptual: [f64; PERCEPTUAL_LAYERS],
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_c: 10.0,
            lambda_p: 5.0,
            lambda_adv: 1.0,
            perceptual: [1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0, 1.0],
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_c, self.lambda_p, self.lambda_adv];
        if all
            .iter()
            .chain(&self.perceptual)
            .any(|w| !(w.is_finite() && *w > 0.0))
        {
            return Err(ScsError::Config(
                "loss weights must be positive and finite".into(),
            ));
        }
        Ok(())
    }
}

/// Mean absolute error.
pub fn content_loss<T: Element>(g: &mut Graph<T>, pred: Var, target: Var) -> Result<Var> {
    let d = g.sub(pred, target)?;
    Ok(g.abs_mean(d)?)
}

/// Frozen multi-scale feature extractor: five stride-2 convolutions with
/// orthogonal weights, `3 -> 16 -> 32 -> 64 -> 128 -> 128` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateNet<T> {
    params: ParamSet<T>,
}

pub const SURROGATE_WIDTHS: [usize; PERCEPTUAL_LAYERS + 1] = [3, 16, 32, 64, 128, 128];

impl<T: Element> SurrogateNet<T> {
    pub fn param_specs() -> Vec<ParamSpec> {
        let mut s = Vec::new();
        for l in 0..PERCEPTUAL_LAYERS {
            let name = format!("surrogate.conv{l}");
            conv_spec(
                &mut s,
                &name,
                SURROGATE_WIDTHS[l],
                SURROGATE_WIDTHS[l + 1],
                3,
                Init::Orthogonal,
            );
        }
        s
    }

    pub fn new(seed: u64) -> Result<Self> {
        Ok(Self {
            params: ParamSet::from_specs(&Self::param_specs(), seed)?,
        })
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn cast<U: Element>(&self) -> SurrogateNet<U> {
        SurrogateNet {
            params: self.params.cast(),
        }
    }

    /// Activations after each of the five stages.
    pub fn features(&self, g: &mut Graph<T>, x: Var) -> Result<Vec<Var>> {
        let mut cx = Ctx::new(g, &self.params, false);
        let mut out = Vec::with_capacity(PERCEPTUAL_LAYERS);
        let mut h = x;
        for l in 0..PERCEPTUAL_LAYERS {
            h = cx.conv(&format!("surrogate.conv{l}"), h, 2, 1)?;
            h = cx.g.leaky_relu(h, LEAKY_SLOPE)?;
            out.push(h);
        }
        Ok(out)
    }

    /// Feature values of a constant image, for reuse across graphs.
    pub fn feature_values(&self, x: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let mut g = Graph::new();
        let v = g.constant(x.clone());
        let f = self.features(&mut g, v)?;
        Ok(f.into_iter().map(|v| g.value(v).clone()).collect())
    }
}

/// Perceptual loss and its unweighted per-layer terms
/// `mean |phi_l(pred) - phi_l(target)|`.
pub fn perceptual_loss<T: Element>(
    g: &mut Graph<T>,
    net: &SurrogateNet<T>,
    pred: Var,
    target: Var,
    weights: &[f64; PERCEPTUAL_LAYERS],
) -> Result<(Var, Vec<Var>)> {
    let fp = net.features(g, pred)?;
    let ft = net.features(g, target)?;
    let mut layers = Vec::with_capacity(PERCEPTUAL_LAYERS);
    let mut total: Option<Var> = None;
    for l in 0..PERCEPTUAL_LAYERS {
        let d = g.sub(fp[l], ft[l])?;
        let term = g.abs_mean(d)?;
        layers.push(term);
        let weighted = g.mul_scalar(term, weights[l])?;
        total = Some(match total {
            Some(t) => g.add(t, weighted)?,
            None => weighted,
        });
    }
    Ok((total.expect("at least one layer"), layers))
}

fn check_logits(g: &Graph<impl Element>, real: Var, fake: Var) -> Result<()> {
    if g.shape(real) != g.shape(fake) {
        return Err(ScsError::Argument(format!(
            "real logits {:?} and fake logits {:?} differ",
            g.shape(real),
            g.shape(fake)
        )));
    }
    Ok(())
}

/// `mean((a - mean(b) + offset)^2)`.
fn relativistic_term<T: Element>(g: &mut Graph<T>, a: Var, b: Var, offset: f64) -> Result<Var> {
    let mb = g.reduce_mean(b)?;
    let d = g.sub(a, mb)?;
    let d = if offset == 0.0 {
        d
    } else {
        g.add_scalar(d, offset)?
    };
    let sq = g.square(d)?;
    Ok(g.reduce_mean(sq)?)
}

/// Generator side:
/// `mean((D(x) - mean D(x~) - 1)^2) + mean((D(x~) - mean D(x))^2)`.
pub fn generator_adversarial_loss<T: Element>(
    g: &mut Graph<T>,
    real: Var,
    fake: Var,
) -> Result<Var> {
    check_logits(g, real, fake)?;
    let a = relativistic_term(g, real, fake, -1.0)?;
    let b = relativistic_term(g, fake, real, 0.0)?;
    Ok(g.add(a, b)?)
}

/// Discriminator side. The default is the single term
/// `mean((D(x~) - mean D(x) - 1)^2)`; `symmetric` instead uses the two-sided
/// least-squares relativistic form
/// `mean((D(x) - mean D(x~) - 1)^2) + mean((D(x~) - mean D(x) + 1)^2)`.
pub fn discriminator_adversarial_loss<T: Element>(
    g: &mut Graph<T>,
    real: Var,
    fake: Var,
    symmetric: bool,
) -> Result<Var> {
    check_logits(g, real, fake)?;
    if symmetric {
        let a = relativistic_term(g, real, fake, -1.0)?;
        let b = relativistic_term(g, fake, real, 1.0)?;
        Ok(g.add(a, b)?)
    } else {
        relativistic_term(g, fake, real, -1.0)
    }
}

/// `(L_G, L_D)` evaluated on one pair of logit batches.
pub fn adversarial_losses<T: Element>(
    g: &mut Graph<T>,
    real: Var,
    fake: Var,
    symmetric: bool,
) -> Result<(Var, Var)> {
    let lg = generator_adversarial_loss(g, real, fake)?;
    let ld = discriminator_adversarial_loss(g, real, fake, symmetric)?;
    Ok((lg, ld))
}

/// `lambda_c L_C + lambda_p L_P + lambda_adv L_adv`.
pub fn total_loss<T: Element>(
    g: &mut Graph<T>,
    content: Var,
    perceptual: Var,
    adversarial: Var,
    w: &LossWeights,
) -> Result<Var> {
    let c = g.mul_scalar(content, w.lambda_c)?;
    let p = g.mul_scalar(perceptual, w.lambda_p)?;
    let a = g.mul_scalar(adversarial, w.lambda_adv)?;
    let cp = g.add(c, p)?;
    Ok(g.add(cp, a)?)
}

/// Scalar loss values of one generator step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub content: f64,
    pub perceptual: f64,
    pub adv_g: f64,
    pub adv_d: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Weighted contributions `(content, perceptual, adversarial)` to `total`.
    pub fn contributions(&self, w: &LossWeights) -> [f64; 3] {
        [
            w.lambda_c * self.content,
            w.lambda_p * self.perceptual,
            w.lambda_adv * self.adv_g,
        ]
    }
}
