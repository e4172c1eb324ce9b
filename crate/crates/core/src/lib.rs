//! Identification of recurrent sequence models cast as a linear
//! time-invariant system in feedback with a sector-bounded tanh, where a
//! definiteness constraint on the parameters certifies a chosen finite
//! (incremental) l2 gain. Includes unconstrained baselines, a log-det
//! barrier trainer with backtracking line search, and adversarial
//! worst-case gain estimation.
//!
//! The numeric core is generic over the scalar type (any [`scalar::Scalar`],
//! i.e. `f32` or `f64`); the aliases below fix `f64`, which is what the CLI
//! and the shipped pipeline use — the barrier is poorly conditioned near
//! the constraint boundary in single precision.

pub mod checkpoint;
pub mod constraints;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numkit;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};

/// Working scalar used by the shipped pipeline.
pub type Scalar64 = f64;

pub type Mat = numkit::Matrix<Scalar64>;
pub type SymMat = numkit::SymmetricMatrix<Scalar64>;
pub type Tilde = model::TildeParams<Scalar64>;
pub type Explicit = model::ExplicitParams<Scalar64>;
pub type Model64 = model::Model<Scalar64>;
pub type Dataset = data::SequenceDataset<Scalar64>;
pub type Splits = data::DataSplits<Scalar64>;
