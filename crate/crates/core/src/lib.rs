//! Symbolic regression by univariate skeleton selection and skeleton merging.

// `!(x >= 0.0)` style checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod data;
pub mod equiv;
pub mod error;
pub mod evolve;
pub mod expr;
pub mod ga;
pub mod merge;
pub mod pipeline;
pub mod provider;
pub mod rng;
pub mod runner;
pub mod scalar;

pub use error::{Error, ParseError, Result};
pub use scalar::Scalar;

/// Double-precision aliases used by the pipeline and the CLI.
pub type Expr = expr::Expression<f64>;
pub type Skel = expr::Skeleton<f64>;
pub type Mat = data::Matrix<f64>;
