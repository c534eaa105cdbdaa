use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gridpath::{Channel, PathKind, TimeGrid};
use crate::scalar::Scalar;
use crate::stats::{variance, Estimate};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftMethod {
    ClosedForm,
    Projection,
    Jacod,
    Regression,
    Ladder,
}

/// Per-path drift values on a grid with their H1 / H2 norms.
///
/// Values are stored at every grid time; undefined or excluded samples are
/// NaN. Norms integrate left-point values against the qv increments.
#[derive(Clone, Debug)]
pub struct DriftEstimate<T> {
    grid: Arc<TimeGrid<T>>,
    method: DriftMethod,
    n_paths: usize,
    values: Vec<T>,
    qv: Channel<T>,
    h1_norm: Estimate<T>,
    h2_norm_sq: Estimate<T>,
    exclusions: usize,
    ridge: bool,
    level: Option<usize>,
}

/// One row of the per-time CSV export.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PerTime<T> {
    pub s: T,
    pub alpha_mean: T,
    pub alpha_var: T,
    pub h2_cum: T,
}

/// Serializable summary of a drift estimate (per-path values omitted).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriftSummary<T> {
    pub method: DriftMethod,
    pub level: Option<usize>,
    pub n_paths: usize,
    pub grid_points: usize,
    pub horizon: T,
    pub h1_norm: Estimate<T>,
    pub h2_norm_sq: Estimate<T>,
    pub exclusions: usize,
    pub exclusion_fraction: f64,
    pub ridge_regularized: bool,
    pub per_time: Vec<PerTime<T>>,
}

impl<T: Scalar> DriftEstimate<T> {
    /// `values` laid out `[path][time]`.
    pub fn new(grid: Arc<TimeGrid<T>>, method: DriftMethod, values: Vec<T>, qv: Channel<T>) -> Result<Self> {
        let n = grid.len();
        if qv.row_len() != n || qv.kind() != PathKind::Qv {
            return Err(invalid("qv channel must be a bracket on the drift grid"));
        }
        if values.is_empty() || values.len() % n != 0 {
            return Err(invalid("drift values are not a whole number of paths"));
        }
        let n_paths = values.len() / n;
        if !qv.is_shared() && qv.stored_rows() != n_paths {
            return Err(invalid("qv channel does not match the path count"));
        }
        let mut est = Self {
            grid,
            method,
            n_paths,
            values,
            qv,
            h1_norm: Estimate::zero(),
            h2_norm_sq: Estimate::zero(),
            exclusions: 0,
            ridge: false,
            level: None,
        };
        est.refresh();
        Ok(est)
    }

    fn refresh(&mut self) {
        let (h1, h2) = self.recompute_norms();
        self.h1_norm = h1;
        self.h2_norm_sq = h2;
        let n = self.grid.len();
        self.exclusions = (0..self.n_paths).map(|p| self.row(p)[..n - 1].iter().filter(|a| a.is_nan()).count()).sum();
    }

    pub(crate) fn with_ridge(mut self, ridge: bool) -> Self {
        self.ridge = ridge;
        self
    }

    /// Tags the estimate with the size of the observation grid it came from.
    pub fn with_level(mut self, level: usize) -> Self {
        self.level = Some(level);
        self
    }

    pub fn grid(&self) -> &Arc<TimeGrid<T>> {
        &self.grid
    }

    pub fn method(&self) -> DriftMethod {
        self.method
    }

    pub fn level(&self) -> Option<usize> {
        self.level
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn qv(&self) -> &Channel<T> {
        &self.qv
    }

    pub fn h1_norm(&self) -> Estimate<T> {
        self.h1_norm
    }

    pub fn h2_norm_sq(&self) -> Estimate<T> {
        self.h2_norm_sq
    }

    pub fn exclusions(&self) -> usize {
        self.exclusions
    }

    pub fn exclusion_fraction(&self) -> f64 {
        self.exclusions as f64 / (self.n_paths * (self.grid.len() - 1)) as f64
    }

    pub fn ridge_regularized(&self) -> bool {
        self.ridge
    }

    pub fn row(&self, p: usize) -> &[T] {
        let n = self.grid.len();
        &self.values[p * n..(p + 1) * n]
    }

    pub fn value(&self, p: usize, i: usize) -> T {
        self.row(p)[i]
    }

    /// Qv increment over `[t_i, t_{i+1}]` on path `p`.
    pub fn dqv(&self, p: usize, i: usize) -> T {
        let q = self.qv.row(p);
        q[i + 1] - q[i]
    }

    /// Per-path `(int |alpha| d[M,M], int alpha^2 d[M,M])`, left-point.
    pub fn path_norms(&self, p: usize) -> (T, T) {
        let a = self.row(p);
        let mut h1 = T::zero();
        let mut h2 = T::zero();
        for (i, &ai) in a[..a.len() - 1].iter().enumerate() {
            if ai.is_nan() {
                continue;
            }
            let d = self.dqv(p, i);
            h1 = h1 + ai.abs() * d;
            h2 = h2 + ai * ai * d;
        }
        (h1, h2)
    }

    /// Norms recomputed from the stored values.
    pub fn recompute_norms(&self) -> (Estimate<T>, Estimate<T>) {
        let norms: Vec<(T, T)> = (0..self.n_paths).map(|p| self.path_norms(p)).collect();
        (Estimate::of_samples(norms.iter().map(|x| x.0)), Estimate::of_samples(norms.iter().map(|x| x.1)))
    }

    /// Restriction to `[0, horizon]`.
    pub fn truncated(&self, horizon: T) -> Result<Self> {
        let grid = Arc::new(self.grid.truncate(horizon)?);
        let len = grid.len();
        let n = self.grid.len();
        let values = self.values.chunks(n).flat_map(|r| r[..len].iter().copied()).collect();
        let mut e = Self::new(grid, self.method, values, self.qv.truncated(len))?;
        e.ridge = self.ridge;
        e.level = self.level;
        Ok(e)
    }

    pub fn per_time(&self) -> Vec<PerTime<T>> {
        let n = self.grid.len();
        let np = T::from_usize_exact(self.n_paths);
        let mut cum = T::zero();
        (0..n)
            .map(|i| {
                let col: Vec<T> = (0..self.n_paths).map(|p| self.value(p, i)).collect();
                let row = PerTime {
                    s: self.grid.times()[i],
                    alpha_mean: Estimate::of_samples(col.iter().copied()).value,
                    alpha_var: variance(col.iter().copied()),
                    h2_cum: cum,
                };
                if i + 1 < n {
                    let inc: T = (0..self.n_paths)
                        .map(|p| {
                            let a = col[p];
                            if a.is_nan() {
                                T::zero()
                            } else {
                                a * a * self.dqv(p, i)
                            }
                        })
                        .sum();
                    cum = cum + inc / np;
                }
                row
            })
            .collect()
    }

    pub fn summary(&self) -> DriftSummary<T> {
        DriftSummary {
            method: self.method,
            level: self.level,
            n_paths: self.n_paths,
            grid_points: self.grid.len(),
            horizon: self.grid.horizon(),
            h1_norm: self.h1_norm,
            h2_norm_sq: self.h2_norm_sq,
            exclusions: self.exclusions,
            exclusion_fraction: self.exclusion_fraction(),
            ridge_regularized: self.ridge,
            per_time: self.per_time(),
        }
    }

    /// `s,alpha_mean,alpha_var,h2_cum`.
    pub fn write_per_time_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "s,alpha_mean,alpha_var,h2_cum")?;
        for r in self.per_time() {
            writeln!(w, "{},{},{},{}", r.s, r.alpha_mean, r.alpha_var, r.h2_cum)?;
        }
        Ok(())
    }

    /// Hash of the raw values, used to tie derived objects to this estimate.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.n_paths.hash(&mut h);
        for v in &self.values {
            v.to_f64_lossy().to_bits().hash(&mut h);
        }
        h.finish()
    }

    /// Same grid and path count.
    pub fn compatible(&self, other: &Self) -> bool {
        self.n_paths == other.n_paths && self.grid == other.grid
    }
}
