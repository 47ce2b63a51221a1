//! Knowledge distillation for coordinate-regression landmark detection.
//!
//! The crate provides:
//!
//! - [`shape_model`]: a PCA point-distribution model that turns ground-truth landmarks
//!   into smoother Soft-landmarks;
//! - [`kd_loss`]: the two-teacher assistive loss and the main piecewise L1/L2 loss, with
//!   analytic gradients;
//! - [`regressor`]: a small fully-connected network with backpropagation and Adam;
//! - [`pipeline`]: the teacher/student training protocol, ablations and evaluation;
//! - [`metrics`]: NME, failure rate, CED and AUC;
//! - [`io`]: `.pts` parsing, dataset/checkpoint JSON and CSV/SVG exports.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`). The aliases below fix
//! the common double-precision instantiations used by the pipeline and the CLI.

// Validation is written as `!(x > 0)` on purpose: the negated form also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod io;
pub mod kd_loss;
pub mod metrics;
pub mod pipeline;
pub mod regressor;
pub mod scalar;
pub mod shape;
pub mod shape_model;

pub use error::{Error, ErrorKind, Result};
pub use kd_loss::{AssistTerms, LossConfig, ReferenceLoss, RegionTag, ScalarTriple};
pub use metrics::{EvalReport, NormPair};
pub use regressor::{Activation, AdamConfig, MlpSpec};
pub use scalar::Scalar;
pub use shape::{BoundingBox, Shape};
pub use shape_model::ShapeModel;

pub type Shape64 = Shape<f64>;
pub type Shape32 = Shape<f32>;
pub type ShapeModel64 = ShapeModel<f64>;
pub type ShapeModel32 = ShapeModel<f32>;
pub type LossConfig64 = LossConfig<f64>;
pub type LossConfig32 = LossConfig<f32>;
pub type Regressor64 = regressor::Regressor<f64>;
pub type Regressor32 = regressor::Regressor<f32>;
