//! Information drift of a Brownian martingale under enlarged filtrations.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod drift;
pub mod error;
pub mod expand;
pub mod experiment;
pub mod gauss;
pub mod gridpath;
pub mod linalg;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod value;

pub use error::{Error, Result};
pub use scalar::{Field, Scalar};

/// `f64` instantiations of the generic types.
pub type Grid = gridpath::TimeGrid<f64>;
pub type Path = gridpath::SamplePath<f64>;
pub type Ensemble = gridpath::PathEnsemble<f64>;
pub type Spec = expand::ExpansionSpec<f64>;
pub type Features = expand::FeatureStream<f64>;
pub type Drift = drift::DriftEstimate<f64>;
pub type Convergence = drift::ConvergenceReport<f64>;
pub type Audit = audit::AuditReport<f64>;
pub type Valuation = value::ValuationReport<f64>;
