use rayon::prelude::*;
use serde::Serialize;

use super::estimate::{DriftEstimate, DriftMethod};
use crate::error::{invalid, Result};
use crate::expand::FeatureStream;
use crate::gridpath::{channel, PathEnsemble};
use crate::linalg::SymSolver;
use crate::scalar::Scalar;

/// Ordinary least squares fit with intercept.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinearFit<T> {
    /// `["intercept", feature labels...]`.
    pub labels: Vec<String>,
    pub coefficients: Vec<T>,
    pub standard_errors: Vec<T>,
    pub residual_var: T,
    pub n: usize,
    /// Ridge added to the normal equations when they were singular.
    pub ridge: Option<T>,
}

impl<T: Scalar> LinearFit<T> {
    pub fn predict(&self, x: &[T]) -> T {
        self.coefficients[0] + self.coefficients[1..].iter().zip(x).map(|(b, v)| *b * *v).sum::<T>()
    }

    /// z-score of coefficient `k` against `expected`.
    pub fn z(&self, k: usize, expected: T) -> T {
        crate::stats::z_score(self.coefficients[k] - expected, self.standard_errors[k])
    }
}

/// Regression of `y` on the rows of `x` (each of length `d`) plus intercept.
pub fn ols<T: Scalar>(x: &[Vec<T>], y: &[T], labels: &[String]) -> Result<LinearFit<T>> {
    let n = y.len();
    if x.len() != n {
        return Err(invalid("design and response lengths differ"));
    }
    let d = labels.len();
    let k = d + 1;
    if n <= k {
        return Err(invalid(format!("{n} observations cannot fit {k} coefficients")));
    }
    let mut xtx = vec![T::zero(); k * k];
    let mut xty = vec![T::zero(); k];
    let mut row = vec![T::one(); k];
    for (xi, &yi) in x.iter().zip(y) {
        if xi.len() != d {
            return Err(invalid("design row has the wrong width"));
        }
        row[1..].copy_from_slice(xi);
        for a in 0..k {
            xty[a] = xty[a] + row[a] * yi;
            for b in 0..=a {
                xtx[a * k + b] = xtx[a * k + b] + row[a] * row[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            xtx[b * k + a] = xtx[a * k + b];
        }
    }
    let solver = SymSolver::new(&xtx, k)?;
    let coefficients = solver.solve(&xty);
    let mut rss = T::zero();
    for (xi, &yi) in x.iter().zip(y) {
        let r = yi - coefficients[0] - coefficients[1..].iter().zip(xi).map(|(b, v)| *b * *v).sum::<T>();
        rss = rss + r * r;
    }
    let residual_var = rss / T::from_usize_exact(n - k);
    let standard_errors = (0..k)
        .map(|a| {
            let mut e = vec![T::zero(); k];
            e[a] = T::one();
            (solver.solve(&e)[a] * residual_var).max(T::zero()).sqrt()
        })
        .collect();
    let labels = std::iter::once("intercept".to_string()).chain(labels.iter().cloned()).collect();
    Ok(LinearFit { labels, coefficients, standard_errors, residual_var, n, ridge: solver.ridge() })
}

/// Design rows, responses and feature labels.
type Design<T> = (Vec<Vec<T>>, Vec<T>, Vec<String>);

fn design<T: Scalar>(
    ens: &PathEnsemble<T>,
    m: &str,
    features: &FeatureStream<T>,
    i: usize,
    include_state: bool,
) -> Result<Design<T>> {
    let grid = ens.grid();
    if i + 1 >= grid.len() {
        return Err(invalid("no forward step after the last grid time"));
    }
    let ch = ens.channel(m)?;
    let h = grid.dt(i);
    let mut labels = features.labels_at(i).to_vec();
    if include_state {
        labels.push(m.to_string());
    }
    let x = (0..ens.n_paths())
        .map(|p| {
            let mut r = features.features(i, p).to_vec();
            if include_state {
                r.push(ch.at(p, i));
            }
            r
        })
        .collect();
    let y = (0..ens.n_paths()).map(|p| (ch.at(p, i + 1) - ch.at(p, i)) / h).collect();
    Ok((x, y, labels))
}

/// Regression of the one-step difference quotient of channel `m` at grid
/// index `i` on the time-`t_i` features (and optionally `M_{t_i}`).
pub fn fit_at<T: Scalar>(
    ens: &PathEnsemble<T>,
    m: &str,
    features: &FeatureStream<T>,
    i: usize,
    include_state: bool,
) -> Result<LinearFit<T>> {
    check_shapes(ens, features)?;
    let (x, y, labels) = design(ens, m, features, i, include_state)?;
    ols(&x, &y, &labels)
}

fn check_shapes<T: Scalar>(ens: &PathEnsemble<T>, features: &FeatureStream<T>) -> Result<()> {
    if features.grid() != ens.grid() || features.n_paths() != ens.n_paths() {
        return Err(invalid("features and ensemble do not share grid and paths"));
    }
    Ok(())
}

/// Fitted drift of channel `m` at every grid time but the last.
///
/// Needs at least ten paths per regressor at every time. Singular designs
/// are ridged and flagged on the estimate.
pub fn regression_drift<T: Scalar>(
    ens: &PathEnsemble<T>,
    m: &str,
    features: &FeatureStream<T>,
    include_state: bool,
) -> Result<DriftEstimate<T>> {
    check_shapes(ens, features)?;
    let grid = ens.grid().clone();
    let n = grid.len();
    let np = ens.n_paths();
    let widest = (0..n).map(|i| features.dim_at(i)).max().unwrap_or(0) + 1 + usize::from(include_state);
    if np < 10 * widest {
        return Err(invalid(format!("{np} paths are too few for {widest} regressors")));
    }
    let cols: Vec<(Vec<T>, bool)> = (0..n - 1)
        .into_par_iter()
        .map(|i| {
            let (x, y, labels) = design(ens, m, features, i, include_state)?;
            let fit = ols(&x, &y, &labels)?;
            Ok((x.iter().map(|r| fit.predict(r)).collect(), fit.ridge.is_some()))
        })
        .collect::<Result<_>>()?;
    let mut values = vec![T::nan(); np * n];
    for (i, (col, _)) in cols.iter().enumerate() {
        for (p, v) in col.iter().enumerate() {
            values[p * n + i] = *v;
        }
    }
    let ridge = cols.iter().any(|c| c.1);
    Ok(DriftEstimate::new(grid, DriftMethod::Regression, values, ens.channel(channel::QV)?.clone())?.with_ridge(ridge))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn recovers_linear_model() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x: Vec<Vec<f64>> = (0..400).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let y: Vec<f64> =
            x.iter().map(|r| 1.0 + 2.0 * r[0] - 3.0 * r[1] + 0.01 * (rng.random::<f64>() - 0.5)).collect();
        let fit = ols(&x, &y, &["a".into(), "b".into()]).unwrap();
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-2);
        assert!((fit.coefficients[2] + 3.0).abs() < 1e-2);
        assert!(fit.standard_errors.iter().all(|s| *s > 0.0));
        assert!(fit.ridge.is_none());
    }

    #[test]
    fn collinear_design_is_ridged() {
        let x: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let fit = ols(&x, &y, &["a".into(), "b".into()]).unwrap();
        assert!(fit.ridge.is_some());
    }
}
