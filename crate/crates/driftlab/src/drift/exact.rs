use rayon::prelude::*;

use super::estimate::{DriftEstimate, DriftMethod};
use crate::error::{invalid, Result};
use crate::expand::{ExpansionSpec, FeatureStream};
use crate::gauss::{drift_weights, Route, Var};
use crate::gridpath::{channel, PathEnsemble};
use crate::scalar::Scalar;

/// Exact Gaussian drift of `spec` along every path of `ens` on `[0, horizon]`.
///
/// Brownian anchors are read from the `w` channel at their grid index and
/// signal variables from `features`, which must come from the same spec.
pub fn gaussian_drift<T: Scalar>(
    spec: &ExpansionSpec<T>,
    ens: &PathEnsemble<T>,
    features: &FeatureStream<T>,
    route: Route,
    horizon: Option<T>,
) -> Result<DriftEstimate<T>> {
    if features.grid() != ens.grid() || features.n_paths() != ens.n_paths() {
        return Err(invalid("features and ensemble do not share grid and paths"));
    }
    let ens = match horizon {
        Some(h) => ens.truncated(h)?,
        None => ens.clone(),
    };
    let grid = ens.grid().clone();
    let n = grid.len();
    let np = ens.n_paths();
    let w = ens.channel(channel::W)?;
    let tol = T::lit(1e-9) * T::one().max(grid.horizon());

    let columns: Vec<(Vec<T>, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = grid.times()[i];
            let dw = drift_weights(spec, s, route)?;
            enum Src {
                W(usize),
                F(usize),
            }
            let srcs = dw
                .observed
                .iter()
                .map(|v| match v {
                    Var::W(r) => grid
                        .index_near(T::lit(*r), tol)
                        .map(Src::W)
                        .ok_or_else(|| invalid(format!("anchor W({r}) is not a grid point"))),
                    Var::Signal(j) if *j < features.dim_at(i) => Ok(Src::F(*j)),
                    other => Err(invalid(format!("{other} is not observable at s = {s}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            let col = (0..np)
                .map(|p| {
                    let f = features.features(i, p);
                    srcs.iter()
                        .zip(&dw.weights)
                        .map(|(src, c)| {
                            *c * match *src {
                                Src::W(k) => w.at(p, k),
                                Src::F(j) => f[j],
                            }
                        })
                        .sum()
                })
                .collect();
            Ok((col, dw.ridge.is_some()))
        })
        .collect::<Result<_>>()?;

    let mut values = vec![T::zero(); np * n];
    for (i, (col, _)) in columns.iter().enumerate() {
        for (p, v) in col.iter().enumerate() {
            values[p * n + i] = *v;
        }
    }
    let ridge = columns.iter().any(|c| c.1);
    let method = match route {
        Route::Projection => DriftMethod::Projection,
        Route::Jacod => DriftMethod::Jacod,
    };
    Ok(DriftEstimate::new(grid, method, values, ens.channel(channel::QV)?.clone())?.with_ridge(ridge))
}
