//! Time grids, simulated paths and seeded ensembles.

mod ensemble;
mod grid;
mod path;

pub use ensemble::{channel, fbm_cov, simulate, Channel, Law, Model, PathEnsemble, MAX_FBM_GRID};
pub use grid::{build_refining_grids, GridFunction, TimeGrid};
pub(crate) use path::realized_bracket;
pub use path::{quadratic_variation, step_discretize, PathKind, SamplePath};
