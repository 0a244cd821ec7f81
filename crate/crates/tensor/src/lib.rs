//! Dense `f64` tensors with a tape-based reverse-mode differentiator.
//!
//! Every value lives in a [`Graph`]: leaves are registered up front, each
//! operation appends a node to the tape, and [`Graph::backward`] walks the
//! tape in reverse, accumulating gradients additively across fan-out.
//!
//! ```
//! use bid2x_tensor::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let a = g.leaf(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap(), true);
//! let b = g.leaf(Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap(), false);
//! let c = g.matmul(a, b).unwrap();
//! let loss = g.sum(c);
//! let grads = g.backward(loss).unwrap();
//! assert_eq!(grads.get(a).unwrap().data(), &[3.0, 4.0]);
//! ```

mod error;
pub mod gradcheck;
mod graph;
mod kernels;
mod tensor;

pub use error::TensorError;
pub use graph::{Gradients, Graph, Var, MASK_NEG};
pub use tensor::Tensor;

pub type Result<T> = std::result::Result<T, TensorError>;
