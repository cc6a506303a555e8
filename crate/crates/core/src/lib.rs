//! Model-based chance-constrained policy optimization.
//!
//! The crate trains a deterministic neural policy on a known stochastic
//! model subject to a joint chance constraint
//! `Pr{ h(s_t) < 0 for all t = 1..N } >= 1 - delta`. The balancing weight
//! between reward and safety is produced by a feedback controller on the
//! constraint violation (penalty, Lagrangian, PI and separated-PI laws),
//! and the gradient of the safe probability is taken through a smooth
//! product surrogate differentiated through the model rollout.
//!
//! Everything here is `no_std` + `alloc`. File formats, configuration and
//! the command line live in the companion `spil` crate.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(a < b)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod autodiff;
pub mod chance;
pub mod envmodels;
mod error;
pub mod multiplier;
pub mod trainer;

pub use error::{Error, Result};

/// Random number generator used for every stochastic draw in the crate.
pub type SimRng = rand_chacha::ChaCha8Rng;
