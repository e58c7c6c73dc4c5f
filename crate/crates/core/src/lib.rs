//! Simulation and analysis of impact oscillators with Newtonian restitution:
//! event-driven integration, Zeno (chattering) detection, sampled checks of
//! the chattering conditions, truncated approximations and delayed feedback.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod delay;
pub mod engine;
pub mod error;
pub mod expr;
pub mod integrator;
pub mod model;
pub mod models;
pub mod report;
pub mod theorem;
pub mod zeno;

pub use error::{Error, FieldError, Result};
