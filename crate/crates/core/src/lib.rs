//! Gated linear networks: layers of gated geometric mixing neurons trained
//! online, each neuron minimizing its own log loss.

pub mod base_models;
pub mod context;
pub mod data;
pub mod error;
pub mod math;
pub mod mixer;
pub mod network;
pub mod oracle;
pub mod rng;
pub mod switching;
pub mod tasks;

pub use error::{Error, Result};
pub use network::{GatedLinearNetwork, NetworkSpec};
pub use rng::RandomSource;

/// Library version, recorded in run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
