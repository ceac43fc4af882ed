#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Solvers and verifiers for mean-field games of optimal stopping on
//! finite-difference grids.

pub mod config;
pub mod control;
pub mod cost;
pub mod density;
pub mod error;
pub mod evolutive;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod obstacle;
pub mod runner;
pub mod scenarios;
pub mod stationary;

pub use error::{Error, Result};
