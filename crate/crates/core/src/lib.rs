//! Goal-oriented a-posteriori error estimation between a coarse and a fine
//! PDE model, and Bayesian calibration of the fine-model parameters that uses
//! the estimated QoI error as its likelihood.
//!
//! The numerical core is generic over the scalar type ([`Real`], implemented
//! for `f32` and `f64`); the aliases below fix it to `f64`.

pub mod bayes;
pub mod elliptic;
pub mod error;
pub mod fem;
pub mod goal;
pub mod scalar;
pub mod tumor;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Mesh = fem::StructuredMesh<f64>;
pub type Field64 = fem::Field<f64>;
pub type CsrMatrix64 = fem::CsrMatrix<f64>;
pub type EllipticPair = elliptic::EllipticModelPair<f64>;
pub type TumorPair = tumor::TumorModelPair<f64>;
pub type Trajectory64 = tumor::Trajectory<f64>;
