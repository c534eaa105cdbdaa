use rayon::prelude::*;

use super::estimate::{DriftEstimate, DriftMethod};
use crate::error::{invalid, Error, Result};
use crate::expand::bessel_ladder_drift;
use crate::gridpath::{channel, PathEnsemble};
use crate::scalar::Scalar;

/// Ladder drift along a Bessel-3 ensemble with future-infimum channel.
///
/// Samples where the drift is undefined (`Z = 0`, in particular `s = 0`) or
/// singular are stored as NaN and counted as exclusions.
pub fn ladder_drift<T: Scalar>(ens: &PathEnsemble<T>, eps: T, horizon: Option<T>) -> Result<DriftEstimate<T>> {
    if !(eps > T::zero()) {
        return Err(invalid("ladder spacing must be positive"));
    }
    let ens = match horizon {
        Some(h) => ens.truncated(h)?,
        None => ens.clone(),
    };
    let grid = ens.grid().clone();
    let n = grid.len();
    let z = ens.channel(channel::BESSEL)?;
    let x = ens.channel(channel::FUTURE_INF)?;
    let mut values = vec![T::zero(); ens.n_paths() * n];
    values.par_chunks_mut(n).enumerate().try_for_each(|(p, row)| {
        for (i, v) in row.iter_mut().enumerate() {
            let zi = z.at(p, i);
            *v = if zi > T::zero() {
                match bessel_ladder_drift(zi, x.at(p, i), eps) {
                    Ok(a) => a,
                    Err(Error::Singularity { .. }) => T::nan(),
                    Err(e) => return Err(e),
                }
            } else {
                T::nan()
            };
        }
        Ok(())
    })?;
    DriftEstimate::new(grid, DriftMethod::Ladder, values, ens.channel(channel::QV)?.clone())
}
