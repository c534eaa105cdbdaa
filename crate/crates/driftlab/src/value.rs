//! Insider strategy backtest and value-of-information identities.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::audit::{AuditEntry, AuditMetadata, AuditReport};
use crate::drift::DriftEstimate;
use crate::error::{invalid, Result};
use crate::gridpath::PathEnsemble;
use crate::scalar::Scalar;
use crate::stats::{variance, Estimate};

/// Outcome of trading `H = scale * alpha / (2 lambda)` on every path.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValuationReport<T> {
    pub lambda: T,
    pub x: T,
    pub strategy_scale: T,
    pub realized_mean: Estimate<T>,
    pub realized_variance: T,
    /// `E int alpha^2 / (2 lambda) d[M,M]`, accumulated per path.
    pub theoretical_value: Estimate<T>,
    /// Same quantity from the drift estimate's h2 norm.
    pub theoretical_from_norm: T,
    /// `E int alpha^2 / (4 lambda) d[M,M]`.
    pub risk_adjusted_gap: Estimate<T>,
    /// Sample mean of `x + H.M - lambda int H^2 d[M,M]`.
    pub realized_objective: Estimate<T>,
    /// Paired per-path `P&L - int alpha^2 / (2 lambda) d[M,M]`.
    pub mean_residual: Estimate<T>,
    /// Paired per-path `objective - x - int alpha^2 / (4 lambda) d[M,M]`.
    pub risk_adjusted_residual: Estimate<T>,
    /// Fraction of paths on which `x + H.M` goes negative on the grid.
    pub constraint_violation_fraction: f64,
    pub metadata: AuditMetadata<T>,
    #[serde(skip)]
    pnl: Vec<T>,
}

impl<T: Scalar> ValuationReport<T> {
    pub fn pnl(&self) -> &[T] {
        &self.pnl
    }

    /// `path_id,pnl`.
    pub fn write_pnl_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "path_id,pnl")?;
        for (p, v) in self.pnl.iter().enumerate() {
            writeln!(w, "{p},{v}")?;
        }
        Ok(())
    }
}

struct PathOutcome<T> {
    pnl: T,
    objective: T,
    h2: T,
    violated: bool,
}

fn trade<T: Scalar>(
    ens: &PathEnsemble<T>,
    m: &str,
    alpha: &DriftEstimate<T>,
    lambda: T,
    x: T,
    scale: T,
) -> Result<Vec<PathOutcome<T>>> {
    if !(lambda > T::zero()) {
        return Err(invalid(format!("risk aversion must be positive, got {lambda}")));
    }
    if !alpha.grid().is_prefix_of(ens.grid()) || alpha.n_paths() != ens.n_paths() {
        return Err(invalid("drift estimate does not live on the ensemble grid"));
    }
    let n = alpha.grid().len();
    if (0..alpha.n_paths()).any(|p| alpha.row(p)[..n - 1].iter().any(|a| !a.is_finite())) {
        return Err(invalid("strategy needs a finite drift at every left point"));
    }
    let ch = ens.channel(m)?;
    let two_l = lambda + lambda;
    Ok((0..ens.n_paths())
        .into_par_iter()
        .map(|p| {
            let (a, mv) = (alpha.row(p), ch.row(p));
            let mut out = PathOutcome { pnl: T::zero(), objective: x, h2: T::zero(), violated: x < T::zero() };
            for i in 0..n - 1 {
                let dq = alpha.dqv(p, i);
                let h = scale * a[i] / two_l;
                let gain = h * (mv[i + 1] - mv[i]);
                out.pnl = out.pnl + gain;
                out.objective = out.objective + gain - lambda * h * h * dq;
                out.h2 = out.h2 + a[i] * a[i] * dq;
                out.violated |= x + out.pnl < T::zero();
            }
            out
        })
        .collect())
}

/// Realized P&L of the optimal strategy `alpha / (2 lambda)` (times
/// `scale`) against the value-of-information identities.
pub fn backtest<T: Scalar>(
    ens: &PathEnsemble<T>,
    m: &str,
    alpha: &DriftEstimate<T>,
    lambda: T,
    x: T,
    scale: T,
) -> Result<ValuationReport<T>> {
    let outcomes = trade(ens, m, alpha, lambda, x, scale)?;
    let two_l = lambda + lambda;
    let four_l = two_l + two_l;
    let pnl: Vec<T> = outcomes.iter().map(|o| o.pnl).collect();
    let violations = outcomes.iter().filter(|o| o.violated).count();
    let truncated = ens.truncated(alpha.grid().horizon())?;
    Ok(ValuationReport {
        lambda,
        x,
        strategy_scale: scale,
        realized_mean: Estimate::of_samples(pnl.iter().copied()),
        realized_variance: variance(pnl.iter().copied()),
        theoretical_value: Estimate::of_samples(outcomes.iter().map(|o| o.h2 / two_l)),
        theoretical_from_norm: alpha.h2_norm_sq().value / two_l,
        risk_adjusted_gap: Estimate::of_samples(outcomes.iter().map(|o| o.h2 / four_l)),
        realized_objective: Estimate::of_samples(outcomes.iter().map(|o| o.objective)),
        mean_residual: Estimate::of_samples(outcomes.iter().map(|o| o.pnl - o.h2 / two_l)),
        risk_adjusted_residual: Estimate::of_samples(outcomes.iter().map(|o| o.objective - x - o.h2 / four_l)),
        constraint_violation_fraction: violations as f64 / outcomes.len() as f64,
        metadata: AuditMetadata::of(&truncated),
        pnl,
    })
}

/// Sample mean of `x + H.M - lambda int H^2 d[M,M]` for `H = scale * alpha / (2 lambda)`.
pub fn sample_objective<T: Scalar>(
    ens: &PathEnsemble<T>,
    m: &str,
    alpha: &DriftEstimate<T>,
    lambda: T,
    x: T,
    scale: T,
) -> Result<T> {
    let o = trade(ens, m, alpha, lambda, x, scale)?;
    Ok(o.iter().map(|o| o.objective).sum::<T>() / T::from_usize_exact(o.len()))
}

/// z-scores of the mean-return and risk-adjusted residuals.
pub fn value_identity_check<T: Scalar>(report: &ValuationReport<T>) -> AuditReport<T> {
    AuditReport::new(
        report.metadata.clone(),
        vec![
            AuditEntry::from_estimate("value/mean_residual", report.mean_residual, T::zero()),
            AuditEntry::from_estimate("value/risk_adjusted_residual", report.risk_adjusted_residual, T::zero()),
        ],
    )
}
