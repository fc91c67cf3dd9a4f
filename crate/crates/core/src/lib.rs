//! Branching random walks whose associated random walk has a regularly
//! varying right tail.
//!
//! The crate is `no_std` (it needs `alloc`). Randomness is always supplied
//! by the caller; [`rng::replicate_rng`] derives independent per-replicate
//! streams from a master seed so that results never depend on scheduling.

#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod assocrw;
pub mod brw;
pub mod error;
pub mod exact;
pub mod harness;
pub mod models;
pub mod numeric;
pub mod regvar;
pub mod rng;
pub mod spine;
pub mod stats;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
