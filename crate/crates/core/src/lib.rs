//! Numerical homogenization of viscoelastic fluid-solid composites.
//!
//! The crate solves the fine-scale coupled solid/fluid system on periodically
//! perforated domains, solves the associated unit-cell corrector problems,
//! assembles the effective (homogenized) medium, time-steps the equivalent
//! macroscopic equation, and measures how fast the fine-scale solution
//! approaches the homogenized one as the microstructure shrinks.

// indexed loops mirror the stencil arithmetic throughout the assembly code;
// `!(x > 0)` comparisons deliberately reject NaN inputs
#![allow(clippy::needless_range_loop)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ap;
pub mod coeffs;
pub mod error;
pub mod fem;
pub mod fine;
pub mod geometry;
pub mod homogenize;
pub mod macroscale;
pub mod memory;
pub mod props;
pub mod study;

pub use error::{Error, Result};
