//! Multi-path one-shot architecture search with shadow batch normalization.

pub mod config;
pub mod cost;
pub mod data;
pub mod error;
pub mod oracle;
pub mod ranking;
pub mod rng;
pub mod search;
pub mod space;
pub mod supernet;
pub mod tensor;

pub use error::{Error, Result};
