//! Thermodynamic formalism for piecewise-monotone interval maps.
//!
//! The crate is `no_std` with `alloc`. Floating point functions come from `libm`.

#![cfg_attr(not(test), no_std)]
// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod examples;
pub mod fmath;
pub mod gibbs;
pub mod hofbauer;
pub mod inducing;
pub mod interval_map;
pub mod numeric;
pub mod potential;
pub mod pressure;
pub mod rome;

pub use error::Error;
