pub mod baselines;
pub mod cascade;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod featurize;
pub mod fusion;
pub mod gnn;
pub mod nn;
pub mod pipeline;
pub mod synth;
pub mod textenc;

pub use error::{Error, Result};
