// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod error;
pub mod excursion;
pub mod fixed_point;
pub mod randomness;
pub mod smoothing;
pub mod suites;
pub mod tree;

pub use error::{Error, Result};

/// Library version embedded in experiment reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
