//! Exact Gaussian conditioning and the two exact drift formulas.

mod assemble;
mod drift;
mod system;

pub use assemble::assemble;
pub use drift::{drift_weights, jacod_drift, projection_drift, DriftWeights, Observation, Route, FD_STEP, FD_TOL};
pub use system::{ConditionalRepr, GaussianSystem, Var};
