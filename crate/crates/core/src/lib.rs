//! Multiview attention fusion for multilabel bodily behavior recognition.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the bottom fix it to `f64`, the precision used for training
//! and gradient checks.

mod binio;

pub mod autodiff;
pub mod checkpoint;
pub mod dataio;
pub mod dct;
pub mod error;
pub mod kv;
pub mod metrics;
pub mod models;
pub mod params;
pub mod scalar;
pub mod tensor;
pub mod training;

pub use autodiff::{grad_check, GradCheckReport, Tape, Var};
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor64 = Tensor<f64>;
pub type Tape64 = Tape<f64>;
pub type ParamSet64 = params::ParamSet<f64>;
pub type FusionNet64 = models::FusionNet<f64>;
pub type TransformerNet64 = models::TransformerNet<f64>;
pub type Network64 = models::Network<f64>;
