//! Bayesian optimization with Gaussian-process surrogates, including a
//! spatially varying kernel that blends a smooth global Matérn component with
//! sharp local components focused on a learned region.

pub mod error;
mod linalg;

pub mod acquisition;
pub mod benchmarks;
pub mod design;
pub mod driver;
pub mod experiment;
pub mod inference;
pub mod kernels;
pub mod optim;
pub mod surrogate;

pub use error::{Error, Result};
