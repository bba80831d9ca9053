//! Scheduled-dropout building blocks: a small CPU tensor engine, retain
//! probability schedules, dropout layers, exact analysis of the induced
//! corruption distribution, and dataset loaders.

pub mod data;
pub mod dropout;
pub mod error;
pub mod nn;
pub mod rng;
pub mod schedule;
pub mod tensor;
pub mod theory;

pub use error::{Error, Result};
pub use tensor::Tensor;
