// Negated comparisons below are deliberate: NaN must fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bridge;
pub mod catalog;
pub mod ehmm;
pub mod entropy;
pub mod error;
pub mod io;
pub mod linalg;
pub mod mps;
pub mod rng;
pub mod selftest;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
