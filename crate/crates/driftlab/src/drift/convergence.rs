use serde::{Deserialize, Serialize};

use super::estimate::{DriftEstimate, DriftMethod};
use crate::error::{invalid, Result};
use crate::scalar::Scalar;
use crate::stats::Estimate;

/// Verdict gates, all in h2-norm units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Largest last adjacent Cauchy gap counted as converged.
    pub tol_c: f64,
    /// Largest last norm increment counted as converged.
    pub tol_n: f64,
    /// Smallest norm increment, over the last two pairs, counted as diverging.
    pub div_floor: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { tol_c: 1e-3, tol_n: 1e-3, div_floor: 1e-2 }
    }
}

impl Thresholds {
    /// Gates for drifts computed by exact Gaussian linear algebra.
    pub fn gaussian_exact() -> Self {
        Self { tol_c: 1e-8, tol_n: 1e-8, div_floor: 1e-2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Converged,
    Diverging,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Level<T> {
    pub grid_size: usize,
    pub method: DriftMethod,
    pub h2_norm_sq: Estimate<T>,
    pub exclusions: usize,
}

/// Diagnostics of a coarse/fine pair `m <= n` (indices into `levels`).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairDiagnostic<T> {
    pub coarse: usize,
    pub fine: usize,
    /// `E int (alpha^n - alpha^m)^2 d[M,M]`.
    pub cauchy_gap: Estimate<T>,
    /// `|alpha^n|^2 - |alpha^m|^2 - |alpha^n - alpha^m|^2`.
    pub pythagoras_residual: Estimate<T>,
    /// `E int (alpha^n - alpha^m) alpha^m d[M,M]`.
    pub projection_residual: Estimate<T>,
    /// Paired `|alpha^n|^2 - |alpha^m|^2`.
    pub norm_increment: Estimate<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport<T> {
    pub levels: Vec<Level<T>>,
    /// Every pair `m < n`, ordered by `(coarse, fine)`.
    pub pairs: Vec<PairDiagnostic<T>>,
    /// `E int (alpha^n - alpha_ref)^2 d[M,M]` per level.
    pub reference_gaps: Option<Vec<Estimate<T>>>,
    pub verdict: Verdict,
    pub thresholds: Thresholds,
}

impl<T: Scalar> ConvergenceReport<T> {
    /// Pairs of consecutive levels.
    pub fn adjacent(&self) -> impl Iterator<Item = &PairDiagnostic<T>> {
        self.pairs.iter().filter(|p| p.fine == p.coarse + 1)
    }

    pub fn pair(&self, coarse: usize, fine: usize) -> Option<&PairDiagnostic<T>> {
        self.pairs.iter().find(|p| p.coarse == coarse && p.fine == fine)
    }

    pub fn pythagoras_residuals(&self) -> Vec<Estimate<T>> {
        self.adjacent().map(|p| p.pythagoras_residual).collect()
    }

    pub fn norm_increments(&self) -> Vec<Estimate<T>> {
        self.adjacent().map(|p| p.norm_increment).collect()
    }

    /// Cauchy gaps as a dense upper-triangular matrix (NaN on and below the
    /// diagonal).
    pub fn cauchy_matrix(&self) -> Vec<Vec<T>> {
        let l = self.levels.len();
        let mut m = vec![vec![T::nan(); l]; l];
        for p in &self.pairs {
            m[p.coarse][p.fine] = p.cauchy_gap.value;
        }
        m
    }
}

/// Per-path `(int (b - a)^2, int b^2 - int a^2 - int (b - a)^2, int (b - a) a, int b^2 - int a^2)`
/// over cells where both drifts are defined.
fn pair_samples<T: Scalar>(a: &DriftEstimate<T>, b: &DriftEstimate<T>) -> Vec<[T; 4]> {
    let n = a.grid().len();
    (0..a.n_paths())
        .map(|p| {
            let (ra, rb) = (a.row(p), b.row(p));
            let mut acc = [T::zero(); 4];
            for i in 0..n - 1 {
                if ra[i].is_nan() || rb[i].is_nan() {
                    continue;
                }
                let dq = a.dqv(p, i);
                let d = rb[i] - ra[i];
                acc[0] = acc[0] + d * d * dq;
                acc[1] = acc[1] + (rb[i] * rb[i] - ra[i] * ra[i] - d * d) * dq;
                acc[2] = acc[2] + d * ra[i] * dq;
                acc[3] = acc[3] + (rb[i] * rb[i] - ra[i] * ra[i]) * dq;
            }
            acc
        })
        .collect()
}

fn column<T: Scalar>(xs: &[[T; 4]], k: usize) -> Estimate<T> {
    Estimate::of_samples(xs.iter().map(|x| x[k]))
}

/// Norm sequence, pair diagnostics and verdict for drifts over refining
/// observation grids, computed on common paths.
pub fn convergence_report<T: Scalar>(
    estimates: &[DriftEstimate<T>],
    reference: Option<&DriftEstimate<T>>,
    thresholds: Thresholds,
) -> Result<ConvergenceReport<T>> {
    let first = estimates.first().ok_or_else(|| invalid("convergence report needs at least one estimate"))?;
    if estimates.iter().chain(reference).any(|e| !e.compatible(first)) {
        return Err(invalid("estimates do not share grid and paths"));
    }
    let levels = estimates
        .iter()
        .enumerate()
        .map(|(k, e)| Level {
            grid_size: e.level().unwrap_or(k),
            method: e.method(),
            h2_norm_sq: e.h2_norm_sq(),
            exclusions: e.exclusions(),
        })
        .collect::<Vec<_>>();
    let mut pairs = Vec::new();
    for m in 0..estimates.len() {
        for n in m + 1..estimates.len() {
            let xs = pair_samples(&estimates[m], &estimates[n]);
            pairs.push(PairDiagnostic {
                coarse: m,
                fine: n,
                cauchy_gap: column(&xs, 0),
                pythagoras_residual: column(&xs, 1),
                projection_residual: column(&xs, 2),
                norm_increment: column(&xs, 3),
            });
        }
    }
    let reference_gaps = reference.map(|r| estimates.iter().map(|e| column(&pair_samples(r, e), 0)).collect());

    let adjacent: Vec<&PairDiagnostic<T>> = pairs.iter().filter(|p| p.fine == p.coarse + 1).collect();
    let tol_c = T::lit(thresholds.tol_c);
    let tol_n = T::lit(thresholds.tol_n);
    let floor = T::lit(thresholds.div_floor);
    let verdict = match adjacent.as_slice() {
        [.., last] if last.cauchy_gap.value <= tol_c && last.norm_increment.value.abs() <= tol_n => Verdict::Converged,
        [.., a, b] if a.norm_increment.value >= floor && b.norm_increment.value >= floor => Verdict::Diverging,
        _ => Verdict::Inconclusive,
    };
    Ok(ConvergenceReport { levels, pairs, reference_gaps, verdict, thresholds })
}
