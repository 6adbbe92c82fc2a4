//! Prescribed Chern scalar curvature on flat periodic grids.

// `!(x > 0.0)` is used on purpose so that NaN lands on the failure branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod hermitian;
pub mod io;
mod krylov;
pub mod linear;
pub mod mms;
pub mod obstructions;
pub mod solve_negative;
pub mod solve_positive;
pub mod solve_zero;

pub use error::{Error, Result};
