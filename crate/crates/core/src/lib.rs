//! Multi-horizon successor representations over token sequences.
//!
//! The crate learns, for every token, the discounted distribution of tokens
//! that follow it, either exactly ([`sr`]) or with a residual network
//! ([`neural`]), and then studies the geometry of those distributions
//! ([`analysis`]): PCA, consensus clustering, agreement with part-of-speech
//! labels and cluster-level transition networks.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod matfile;
pub mod neural;
pub mod rng;
pub mod sr;
pub mod synth;

pub use error::{Error, Result};
