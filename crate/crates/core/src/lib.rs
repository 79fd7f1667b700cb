//! Data fission and data thinning.
//!
//! A single random draw `X` is split into a training fold and a test fold
//! whose marginal and conditional laws are known up to the unknown
//! parameter. The crate provides:
//!
//! - [`dist`]: the distribution families the splitting rules operate on,
//!   with samplers, log-mass functions and Fisher information (closed form
//!   and a numerical oracle).
//! - [`fission`]: the splitting rules themselves and the laws they declare.
//! - [`info`]: Fisher-information accounting across folds.
//! - [`glm`]: logistic lasso with cross-validation, and IRLS with offsets,
//!   model-based and sandwich covariance.
//! - [`selective`]: the select-then-infer pipelines for logistic regression.
//! - [`sim`]: the seeded, parallel simulation study harness.

pub mod dist;
pub mod error;
pub mod fission;
pub mod glm;
pub mod info;
pub mod rng;
pub mod selective;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
