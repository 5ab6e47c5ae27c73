//! Structure-aware visual tracking: a small CNN whose pooled feature maps are
//! fused with four-directional lattice DAG-RNNs, trained with multi-domain
//! learning and hard negative mining, and run inside a particle-sampling
//! tracker with threshold-gated online updates and box regression.
//!
//! All numerical code is generic over [`Scalar`] (`f32` for production,
//! `f64` for gradient checks); the aliases below name the common instances.

pub mod dagrnn;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gradcheck;
pub mod init;
pub mod io;
pub mod layers;
pub mod model;
pub mod scalar;
pub mod tensor;
pub mod tracker;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{Shape, Tensor};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type DagRnnParams32 = dagrnn::DagRnnParams<f32>;
pub type DagRnnParams64 = dagrnn::DagRnnParams<f64>;
pub type Sanet32 = model::Sanet<f32>;
pub type Sanet64 = model::Sanet<f64>;
pub type Tracker32 = tracker::Tracker<f32>;
pub type Tracker64 = tracker::Tracker<f64>;
