//! Minimal deterministic tensor engine with reverse-mode automatic
//! differentiation.
//!
//! A [`Graph`] records every operation eagerly. Parameters and inputs enter
//! as leaves ([`Graph::leaf`]) or constants ([`Graph::constant`]); calling
//! [`Graph::backward`] on a scalar yields the gradient of every leaf.
//!
//! ```
//! use scs_tensor::{Graph, Tensor};
//!
//! let mut g = Graph::<f64>::new();
//! let x = g.leaf(Tensor::new([3], vec![1.0, 2.0, 3.0]).unwrap());
//! let sq = g.square(x).unwrap();
//! let loss = g.reduce_mean(sq).unwrap();
//! let grads = g.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[2.0 / 3.0, 4.0 / 3.0, 2.0]);
//! ```
//!
//! Everything runs on one thread; given the same inputs, results are
//! bit-identical from run to run.

pub mod check;
mod element;
mod error;
mod graph;
pub mod init;
mod ops;
mod tensor;

pub use element::Element;
pub use error::{Result, TensorError};
pub use graph::{Gradients, Graph, Var};
pub use ops::corner_aligned_source;
pub use tensor::{numel, strides_of, Tensor};
