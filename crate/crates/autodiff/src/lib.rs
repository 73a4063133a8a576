//! Reverse-mode automatic differentiation over dense row-major arrays.
//!
//! A [`Graph`] records every operation as it executes (a dynamic tape) and
//! [`Graph::backward`] replays the tape in reverse. Only the operations the
//! density model needs are provided, each with a hand-written backward rule.
//!
//! ```
//! use trade_autodiff::Graph;
//!
//! let mut g = Graph::<f64>::new();
//! let x = g.variable(vec![], vec![3.0]).unwrap();
//! let y = g.square(x);
//! g.backward(y).unwrap();
//! assert_eq!(g.grad(x).unwrap(), &[6.0]);
//! ```

mod element;
mod error;
pub mod gradcheck;
mod graph;
mod ops;
mod shape;
mod tensor;

pub use element::Element;
pub use error::{AutodiffError, Result};
pub use graph::{Graph, Var};
pub use tensor::Tensor;
