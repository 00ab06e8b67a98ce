//! Numerical core for planning safe, maximally informative trajectories of
//! dynamical systems with uncertain parameters.
//!
//! The crate is `no_std` (with `alloc`) unless the `std` feature is enabled.
//! The `parallel` feature evaluates independent trajectories on a rayon pool;
//! all reductions keep a fixed order, so results do not depend on thread count.

#![cfg_attr(not(any(feature = "std", test)), no_std)]
// Index loops mirror the math; negated float comparisons deliberately route NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod cubature;
pub mod eig;
pub mod error;
pub mod geometry;
pub mod planner;
pub mod probability;
pub mod rng;
pub mod safety;
pub mod simulate;
pub mod systems;

mod par;

pub use error::{Error, Result};
