//! Gaussian Process stance classification for rumour tweets.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod experiments;
pub mod inference;
pub mod kernels;
pub mod multiclass;
pub mod seeds;
pub mod synthetic;
pub mod text;

pub use error::{Error, Result};
pub use multiclass::StanceLabel;
