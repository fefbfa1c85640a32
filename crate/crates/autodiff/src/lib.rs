//! Dense `f64` tensors with tape-based reverse-mode differentiation.
//!
//! The op set is deliberately small: what recurrent encoders, bilinear
//! attention, pointer-style copy distributions and their losses need.
//! Values are computed eagerly as operations are recorded on a [`Graph`];
//! [`Graph::backward`] then sweeps the tape once in reverse.
//!
//! ```
//! use kpgen_autodiff::{Graph, ParamStore, Tensor};
//!
//! let mut params = ParamStore::new();
//! let w = params.insert("w", Tensor::vector(vec![0.5, -1.0])).unwrap();
//! let mut g = Graph::new(&params);
//! let x = g.constant(Tensor::vector(vec![2.0, 3.0]));
//! let wv = g.param(w);
//! let y = g.dot(wv, x).unwrap();
//! let grads = g.backward(y).unwrap();
//! assert_eq!(grads.param(w).unwrap().data(), &[2.0, 3.0]);
//! ```

mod checkpoint;
mod error;
pub mod gradcheck;
mod graph;
pub mod nn;
mod optim;
mod params;
mod tensor;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use error::{AutodiffError, Result};
pub use graph::{Gradients, Graph, Var};
pub use optim::{clip_global_norm, Adam};
pub use params::{ParamId, ParamStore};
pub use tensor::Tensor;
