//! Multilinear biased discriminant analysis for image-sequence tensors.
//!
//! The crate covers dense tensor algebra ([`tensor`]), symmetric and
//! generalized eigensolvers ([`eigen`]), biased and Fisher-style
//! discriminant subspaces ([`discriminant`]), Gabor appearance features
//! ([`gabor`]), landmark displacement features ([`geometric`]) and the
//! Gaussian-kernel SVM detectors with their evaluation metrics
//! ([`classify`]).

pub mod classify;
pub mod discriminant;
pub mod eigen;
pub mod error;
pub mod gabor;
pub mod geometric;
pub mod matrix;
pub mod tensor;

pub use discriminant::{fit_bda, fit_mbda, fit_mda, project, MbdaConfig, Subspace};
pub use eigen::{EigenConfig, EigenResult, Regularizer};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use tensor::Tensor;
