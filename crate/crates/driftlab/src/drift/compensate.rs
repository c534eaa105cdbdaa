use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::estimate::DriftEstimate;
use crate::error::{invalid, Result};
use crate::gridpath::{Channel, PathEnsemble, PathKind, SamplePath};
use crate::scalar::{Field, Scalar};

/// Quadrature rule for the compensator `int alpha d[M,M]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompensationRule {
    /// `alpha_{t_i} (Q_{t_{i+1}} - Q_{t_i})`: predictable integrand.
    #[default]
    LeftPoint,
    /// `(alpha_{t_i} + alpha_{t_{i+1}}) / 2 (Q_{t_{i+1}} - Q_{t_i})`.
    Trapezoid,
}

/// `M~_t = M_t - sum_{u < t} alpha_u Delta[M,M]_u` (left-point rule).
pub fn compensate<T: Field>(m: &SamplePath<T>, alpha: &[T], qv: &SamplePath<T>) -> Result<SamplePath<T>> {
    compensate_with(m, alpha, qv, CompensationRule::LeftPoint)
}

pub fn compensate_with<T: Field>(
    m: &SamplePath<T>,
    alpha: &[T],
    qv: &SamplePath<T>,
    rule: CompensationRule,
) -> Result<SamplePath<T>> {
    if qv.kind() != PathKind::Qv {
        return Err(invalid("compensation needs a qv path"));
    }
    if m.grid() != qv.grid() || alpha.len() != m.values().len() {
        return Err(invalid(format!(
            "compensation lengths differ: {} drift values for a path of {}",
            alpha.len(),
            m.values().len()
        )));
    }
    let mut out = Vec::with_capacity(alpha.len());
    compensate_row(m.values(), alpha, qv.values(), rule, &mut out);
    SamplePath::new(m.grid().clone(), out, PathKind::Custom)
}

fn compensate_row<T: Field>(m: &[T], alpha: &[T], q: &[T], rule: CompensationRule, out: &mut Vec<T>) {
    let two = T::one() + T::one();
    let mut a = T::zero();
    out.push(m[0]);
    for i in 0..m.len() - 1 {
        let rate = match rule {
            CompensationRule::LeftPoint => alpha[i],
            CompensationRule::Trapezoid => (alpha[i] + alpha[i + 1]) / two,
        };
        a = a + rate * (q[i + 1] - q[i]);
        out.push(m[i + 1] - a);
    }
}

/// Compensated version of channel `m` of `ens`, on the grid of `alpha`
/// (a prefix of the ensemble grid).
pub fn compensate_ensemble<T: Scalar>(
    ens: &PathEnsemble<T>,
    m: &str,
    alpha: &DriftEstimate<T>,
    rule: CompensationRule,
) -> Result<Channel<T>> {
    let grid = alpha.grid();
    if !grid.is_prefix_of(ens.grid()) || alpha.n_paths() != ens.n_paths() {
        return Err(invalid("drift estimate does not live on the ensemble grid"));
    }
    let n = grid.len();
    let used = match rule {
        CompensationRule::LeftPoint => n - 1,
        CompensationRule::Trapezoid => n,
    };
    if (0..alpha.n_paths()).any(|p| alpha.row(p)[..used].iter().any(|a| !a.is_finite())) {
        return Err(invalid("drift has undefined values where the compensator needs them"));
    }
    let ch = ens.channel(m)?;
    let mut data = vec![T::zero(); n * alpha.n_paths()];
    data.par_chunks_mut(n).enumerate().for_each(|(p, row)| {
        let mut out = Vec::with_capacity(n);
        compensate_row(&ch.row(p)[..n], alpha.row(p), &alpha.qv().row(p)[..n], rule, &mut out);
        row.copy_from_slice(&out);
    });
    Channel::per_path(PathKind::Custom, n, data)
}
