#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Positive-unlabeled survival analysis.
//!
//! Likelihood-based estimation of survival-time and censoring-time
//! regression parameters when only some events are labeled, with the
//! simulation harness used to study the estimators.

pub mod config;
pub mod distributions;
pub mod dp_mixture;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod io;
pub mod likelihood;
pub mod ml_losses;
pub mod model;
pub mod numeric;
pub mod optimize;
pub mod quadrature;
mod random;
pub mod simulation;
pub mod special;

pub use error::{Error, Result};
pub use model::{CensoringMode, Dataset, Estimator, ModelVariant, ParamVector, SubjectRecord};
