//! Numerical laboratory for one-dimensional quasiperiodic Schrödinger
//! operators `(Hu)(n) = u(n+1) + u(n-1) + f(x + nα) u(n)`.

// `!(x < y)` is used deliberately so that NaN falls into the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arithmetic;
pub mod cli;
pub mod dimension;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod spectral;
pub mod tridiag;
pub mod verify;

pub use error::{Error, ErrorClass, Result};
