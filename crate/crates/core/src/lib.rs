//! Simulation, control and learning stack for a single-legged hopper whose
//! leg is driven by six antagonistic wire actuators.

// `!(x > 0.0)` is used on purpose in validators so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod config;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod kinematics;
pub mod kv;
pub mod ppo;
pub mod rewards;
pub mod tension;
pub mod wire;

pub use error::{Error, Result};
