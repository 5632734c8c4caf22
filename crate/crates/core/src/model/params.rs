//! Named parameter storage and binding of parameters onto a graph.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scs_tensor::init::{kaiming_uniform, leaky_relu_gain, orthogonal};
use scs_tensor::{Element, Graph, Tensor, Var};

use crate::error::{Result, ScsError};
use crate::model::config::LEAKY_SLOPE;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Kaiming-uniform for the leaky rectifier, given the fan-in.
    Kaiming {
        fan_in: usize,
    },
    Orthogonal,
    Zeros,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

/// Declares `{name}.weight` / `{name}.bias` of a `k x k` convolution.
pub fn conv_spec(
    specs: &mut Vec<ParamSpec>,
    name: &str,
    cin: usize,
    cout: usize,
    k: usize,
    init: Init,
) {
    let init = match init {
        Init::Kaiming { .. } => Init::Kaiming {
            fan_in: cin * k * k,
        },
        other => other,
    };
    specs.push(ParamSpec {
        name: format!("{name}.weight"),
        shape: vec![cout, cin, k, k],
        init,
    });
    specs.push(ParamSpec {
        name: format!("{name}.bias"),
        shape: vec![cout],
        init: Init::Zeros,
    });
}

pub fn linear_spec(specs: &mut Vec<ParamSpec>, name: &str, din: usize, dout: usize) {
    specs.push(ParamSpec {
        name: format!("{name}.weight"),
        shape: vec![dout, din],
        init: Init::Kaiming { fan_in: din },
    });
    specs.push(ParamSpec {
        name: format!("{name}.bias"),
        shape: vec![dout],
        init: Init::Zeros,
    });
}

/// Flat, ordered map from parameter name to tensor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet<T> {
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Element> ParamSet<T> {
    /// Initializes every spec in declaration order from one seeded stream.
    pub fn from_specs(specs: &[ParamSpec], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gain = leaky_relu_gain(LEAKY_SLOPE);
        let mut tensors = BTreeMap::new();
        for spec in specs {
            let t = match spec.init {
                Init::Kaiming { fan_in } => kaiming_uniform(&spec.shape, fan_in, gain, &mut rng),
                Init::Orthogonal => orthogonal(&spec.shape, gain, &mut rng),
                Init::Zeros => Tensor::zeros(spec.shape.clone()),
            };
            if tensors.insert(spec.name.clone(), t).is_some() {
                return Err(ScsError::Config(format!(
                    "parameter `{}` declared twice",
                    spec.name
                )));
            }
        }
        Ok(Self { tensors })
    }

    pub fn from_map(tensors: BTreeMap<String, Tensor<T>>) -> Self {
        Self { tensors }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) -> Option<Tensor<T>> {
        self.tensors.insert(name.into(), t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.tensors.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar count.
    pub fn param_count(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Scalar count of parameters whose name starts with `prefix`.
    pub fn param_count_with_prefix(&self, prefix: &str) -> usize {
        self.tensors
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, t)| t.numel())
            .sum()
    }

    pub fn cast<U: Element>(&self) -> ParamSet<U> {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }

    /// Checks names and shapes against the declared specs.
    pub fn matches_specs(&self, specs: &[ParamSpec]) -> Result<()> {
        if specs.len() != self.tensors.len() {
            return Err(ScsError::Checkpoint(format!(
                "expected {} parameters, found {}",
                specs.len(),
                self.tensors.len()
            )));
        }
        for spec in specs {
            match self.tensors.get(&spec.name) {
                Some(t) if t.shape() == spec.shape.as_slice() => {}
                Some(t) => {
                    return Err(ScsError::Checkpoint(format!(
                        "parameter `{}` has shape {:?}, model expects {:?}",
                        spec.name,
                        t.shape(),
                        spec.shape
                    )))
                }
                None => {
                    return Err(ScsError::Checkpoint(format!(
                        "parameter `{}` missing",
                        spec.name
                    )))
                }
            }
        }
        Ok(())
    }
}

/// A graph together with one parameter set whose tensors are bound lazily,
/// each at most once, as leaves (trainable) or constants (frozen).
pub struct Ctx<'g, 'p, T: Element> {
    pub g: &'g mut Graph<T>,
    params: &'p ParamSet<T>,
    trainable: bool,
    bound: BTreeMap<String, Var>,
}

impl<'g, 'p, T: Element> Ctx<'g, 'p, T> {
    pub fn new(g: &'g mut Graph<T>, params: &'p ParamSet<T>, trainable: bool) -> Self {
        Self {
            g,
            params,
            trainable,
            bound: BTreeMap::new(),
        }
    }

    /// Starts from parameters already placed on the graph by the caller.
    pub fn with_bound(
        g: &'g mut Graph<T>,
        params: &'p ParamSet<T>,
        bound: BTreeMap<String, Var>,
    ) -> Self {
        Self {
            g,
            params,
            trainable: false,
            bound,
        }
    }

    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let t = self
            .params
            .get(name)
            .ok_or_else(|| ScsError::Config(format!("unknown parameter `{name}`")))?
            .clone();
        let v = if self.trainable {
            self.g.leaf(t)
        } else {
            self.g.constant(t)
        };
        self.bound.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn conv(&mut self, name: &str, x: Var, stride: usize, padding: usize) -> Result<Var> {
        let w = self.param(&format!("{name}.weight"))?;
        let b = self.param(&format!("{name}.bias"))?;
        Ok(self.g.conv2d(x, w, b, stride, padding)?)
    }

    /// Same-size `k x k` convolution (`k` odd).
    pub fn conv_same(&mut self, name: &str, x: Var) -> Result<Var> {
        let k = self
            .params
            .get(&format!("{name}.weight"))
            .map(|t| t.shape()[2])
            .ok_or_else(|| ScsError::Config(format!("unknown parameter `{name}.weight`")))?;
        self.conv(name, x, 1, k / 2)
    }

    pub fn linear(&mut self, name: &str, x: Var) -> Result<Var> {
        let w = self.param(&format!("{name}.weight"))?;
        let b = self.param(&format!("{name}.bias"))?;
        Ok(self.g.linear(x, w, b)?)
    }

    pub fn act(&mut self, x: Var) -> Result<Var> {
        Ok(self.g.leaky_relu(x, LEAKY_SLOPE)?)
    }

    pub fn bound(&self) -> &BTreeMap<String, Var> {
        &self.bound
    }

    pub fn into_bound(self) -> BTreeMap<String, Var> {
        self.bound
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut specs = Vec::new();
        conv_spec(&mut specs, "a", 1, 2, 3, Init::Kaiming { fan_in: 0 });
        conv_spec(&mut specs, "a", 1, 2, 3, Init::Kaiming { fan_in: 0 });
        assert!(ParamSet::<f32>::from_specs(&specs, 0).is_err());
    }

    #[test]
    fn params_bind_once() {
        let mut specs = Vec::new();
        linear_spec(&mut specs, "fc", 3, 2);
        let params = ParamSet::<f32>::from_specs(&specs, 1).unwrap();
        let mut g = Graph::new();
        let mut cx = Ctx::new(&mut g, &params, true);
        let a = cx.param("fc.weight").unwrap();
        let b = cx.param("fc.weight").unwrap();
        assert_eq!(a, b);
        assert!(cx.g.requires_grad(a));
        assert_eq!(cx.bound().len(), 1);
    }

    #[test]
    fn same_seed_same_values() {
        let mut specs = Vec::new();
        conv_spec(&mut specs, "c", 2, 3, 3, Init::Kaiming { fan_in: 0 });
        let a = ParamSet::<f32>::from_specs(&specs, 9).unwrap();
        let b = ParamSet::<f32>::from_specs(&specs, 9).unwrap();
        let c = ParamSet::<f32>::from_specs(&specs, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
