//! Dense fp64 tensors, a reverse-mode differentiation tape, parameter
//! storage with SGD/Adam, and a binary checkpoint format.
//!
//! ```
//! use pdgvd_autodiff::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let w = tape.leaf(Tensor::vector(vec![1.0, 2.0]).with_requires_grad(true));
//! let sq = tape.mul(w, w).unwrap();
//! let loss = tape.sum(sq);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(w).unwrap().data(), &[2.0, 4.0]);
//! ```

pub mod checkpoint;
mod error;
pub mod gradcheck;
mod params;
pub mod rng;
mod tape;
mod tensor;

pub use error::{Result, TensorError};
pub use params::{Bound, Param, ParamStore, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use rng::{seeded, Rng};
pub use tape::{sigmoid, Gradients, Tape, Var};
pub use tensor::Tensor;
