#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ablation;
pub mod affinity;
pub mod dataset;
pub mod error;
pub mod gmm;
pub mod selection;
pub mod semiloop;
pub mod theory;

pub use error::{Error, Result};
