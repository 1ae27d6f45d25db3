//! Online learning and adaptive control with checkable guarantees.
//!
//! * regret-bounded projected gradient descent with vanishing learning
//!   rates ([`learners`], [`metrics`]);
//! * Lyapunov-stable streaming regression with feature-normalized rates and
//!   the σ-modification ([`arena`], [`learners`], [`metrics`]);
//! * certainty-equivalence adaptive LQR with vanishing exploration ([`oac`]).
//!
//! [`cli`] wires these into reproducible experiments that emit CSV traces
//! and pass/fail summaries.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arena;
pub mod cli;
pub mod error;
pub mod learners;
pub mod losses;
pub mod metrics;
pub mod numerics;
pub mod oac;

pub use error::{Result, RvlError};
