//! Numerical study of parabolic germs `f(x) = x + x^M (a·x + ...)` in
//! several complex variables: petal domains, orbit invariants, Fatou
//! coordinates and the experiment harness built on them.

// Negated comparisons keep NaN out of every domain; index loops follow the
// matrix formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod domains;
pub mod error;
pub mod fatou;
pub mod germ;
pub mod harness;
pub mod invariants;
pub mod lattice;
pub mod numeric;
pub mod poly;
pub mod precision;
pub mod sampling;
pub mod series;
#[cfg(test)]
mod testkit;

pub use error::{Error, Result};
