//! Differentiable alignment–attention–fusion operators for few-shot
//! feature conditioning.
//!
//! The crate provides a small dense-tensor engine with a reverse-mode
//! gradient tape, the three operator families (spatial alignment, channel
//! attention, fusion) over `[positions, channels]` feature maps, a
//! configurable pipeline composing them per class and per pyramid level,
//! and a line-oriented text format for pipeline configurations.
//!
//! Everything numeric is generic over the scalar type through [`Scalar`]
//! (`f32` or `f64`); the `*64`/`*32` aliases below pin common choices.

pub mod config;
pub mod error;
pub mod gradcheck;
pub mod ops;
pub mod params;
pub mod pipeline;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use error::AafError;
pub use scalar::Scalar;

/// Double-precision tensor, the default throughout the training harness.
pub type Tensor64 = tensor::Tensor<f64>;
/// Single-precision tensor.
pub type Tensor32 = tensor::Tensor<f32>;
/// Double-precision gradient tape.
pub type GradTape64 = tape::GradTape<f64>;
/// Single-precision gradient tape.
pub type GradTape32 = tape::GradTape<f32>;
/// Double-precision parameter store.
pub type ParamSet64 = params::ParamSet<f64>;
/// Single-precision parameter store.
pub type ParamSet32 = params::ParamSet<f32>;
