//! Drift estimates, compensation and convergence diagnostics.

mod closed_form;
mod compensate;
mod convergence;
mod estimate;
mod exact;
mod ladder;
mod regression;

pub use closed_form::{closed_form_drift, closed_form_estimate, ClosedForm};
pub use compensate::{compensate, compensate_ensemble, compensate_with, CompensationRule};
pub use convergence::{convergence_report, ConvergenceReport, Level, PairDiagnostic, Thresholds, Verdict};
pub use estimate::{DriftEstimate, DriftMethod, DriftSummary, PerTime};
pub use exact::gaussian_drift;
pub use ladder::ladder_drift;
pub use regression::{fit_at, ols, regression_drift, LinearFit};
