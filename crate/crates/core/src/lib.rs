//! Reduced-order modelling toolkit: POD bases from snapshots, Galerkin
//! operators, exact closure extraction by ROM projection, and unconstrained
//! or physically constrained data-driven closure calibration.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod closure;
pub mod config;
pub mod error;
pub mod fom;
pub mod galerkin;
pub mod grid;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod par;
pub mod pod;
pub mod regression;
pub mod rom;

pub use error::{Result, RomError};
