//! Paired recurrent autoencoders for translating between motion sequences
//! and textual descriptions, trained in two stages: unpaired reconstruction
//! pre-training, then margin-based latent binding on a small paired subset.

pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod training;
pub mod nn;

pub use error::{Error, Result};
