//! Posterior sampling for the joint model.

pub mod chain_file;
pub mod diagnostics;
mod output;
mod sampler;
mod structure;

pub use output::{
    alpha_column, derive_seed, group_column, inclusion_column, run_chain, uses_two_stage, ChainOutput, BUILD_ID,
};
pub use sampler::{invert_cumulative_hazard, ChainState, JointSampler};
pub use structure::{Prelim, Structure};
