//! Expansion specifications and the conditioning features they generate.

mod features;
mod ladder;
mod spec;
mod timechange;

pub use features::{feature_stream, FeatureStream};
pub use ladder::{bessel_ladder_drift, LadderState, SINGULAR_GAP};
pub use spec::{ExpansionSpec, LinearFunctional, NoiseModel, SignalProcess};
pub use timechange::{
    anticipation_tau, tau_representation, time_change_conditional, time_change_drift, TimeChangeDrift, TimeDensity,
    DENSITY_FD_STEP, QUADRATURE_REL_TOL,
};
