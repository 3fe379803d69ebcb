//! Numerical laboratory for one-dimensional BSDEs whose driver is only
//! continuous in `z`.
//!
//! The crate regularizes drivers by sup/inf-convolution, solves the
//! approximating BSDEs exactly on binomial lattices, and checks the
//! resulting monotone sequences, solution bounds, comparison identity and
//! localization step numerically.

pub mod error;
pub mod experiments;
pub mod generators;

pub use error::{Error, Result};
pub mod regularization;
pub mod solver;
pub mod terminal;
