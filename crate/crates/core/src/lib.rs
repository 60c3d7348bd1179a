#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod boundary;
pub mod cgo;
pub mod conductivity;
pub mod dn;
pub mod error;
pub mod experiment;
pub mod forward;
pub mod grid;
pub mod krylov;
pub mod probe;
pub mod reconstruct;
pub mod scalar;
pub mod spectral;

pub use error::{Error, Result};
