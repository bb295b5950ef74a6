//! Bayesian joint models of multiple longitudinal risk factors and a
//! time-to-event outcome, with spike-and-slab selection over trajectory
//! features.

pub mod adapt;
pub mod data;
pub mod error;
pub mod harness;
pub mod longitudinal;
pub mod mcmc;
pub mod numeric;
pub mod prior_calculus;
pub mod selection;
pub mod simgen;
pub mod spec;
pub mod survival;

pub use error::{Error, Result};
