//! EEG preprocessing, contrastive pre-training of a dual-branch transformer
//! encoder, unified fine-tuning and subject-level majority voting.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the element type for the common cases.

pub mod augment;
pub mod autodiff;
pub mod batching;
pub mod corpus;
pub mod error;
pub mod model;
pub mod objective;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod signal;
pub mod train_eval;

pub use error::{ErrorCategory, LeadError, Result};
pub use scalar::Scalar;

pub type ModelF32 = model::Model<f32>;
pub type ModelF64 = model::Model<f64>;
pub type ParamsF32 = model::ParameterSet<f32>;
pub type ParamsF64 = model::ParameterSet<f64>;
pub type AdamWF32 = optim::AdamW<f32>;
