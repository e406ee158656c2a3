//! Softmax and logistic classification objectives with focus on hard
//! negative classes, together with a small MLP trainer, synthetic datasets,
//! evaluation metrics and training diagnostics.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision for the common cases.

pub mod cli;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod losses;
pub mod math;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Logits64 = math::Logits<f64>;
pub type Logits32 = math::Logits<f32>;
pub type ProbVector64 = math::ProbVector<f64>;
pub type LossOutput64 = losses::LossOutput<f64>;
pub type LossOutput32 = losses::LossOutput<f32>;
pub type Matrix64 = matrix::Matrix<f64>;
pub type Matrix32 = matrix::Matrix<f32>;
pub type Mlp64 = model::Mlp<f64>;
pub type Mlp32 = model::Mlp<f32>;
