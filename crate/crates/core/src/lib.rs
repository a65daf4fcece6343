//! One-class multiple-instance learning from positive bags.

pub mod cli;
pub mod data;
pub mod eval;
pub mod error;
pub mod kernel;
pub mod pmi;
pub mod qp;
pub mod synth;

pub use error::{PmiError, Result};
