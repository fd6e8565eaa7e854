// `!(x > 0.0)` deliberately rejects NaN; index loops mirror the formulas
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
pub mod config;
pub mod error;
pub mod harness;
pub mod io;
pub mod kernel;
pub mod kinetic;
pub mod limit;
pub mod maier_saupe;
pub mod quadrature;
pub mod sphere;
pub mod tensor;

pub use error::{Error, Result};
