use super::report::{AuditEntry, AuditMetadata, AuditReport};
use crate::error::{invalid, Result};
use crate::gridpath::{channel, PathEnsemble};
use crate::scalar::Scalar;

/// Checks `P(X_s > p eps | Z_s) = (1 - p eps / Z_s)_+` within `bins`
/// equal-count bins of `Z_s`, one entry per (level, bin).
///
/// The standard error is the binomial one under the null,
/// `sqrt(sum pi (1 - pi)) / n_bin`.
pub fn ladder_identity_test<T: Scalar>(
    ens: &PathEnsemble<T>,
    eps: T,
    s: T,
    levels: &[usize],
    bins: usize,
) -> Result<AuditReport<T>> {
    if !(eps > T::zero()) || bins == 0 || ens.n_paths() < bins {
        return Err(invalid("ladder identity test needs eps > 0 and at least one path per bin"));
    }
    let tol = T::lit(1e-9) * T::one().max(ens.grid().horizon());
    let i = ens.grid().index_near(s, tol).ok_or_else(|| invalid(format!("time {s} is not on the grid")))?;
    let z = ens.channel(channel::BESSEL)?;
    let x = ens.channel(channel::FUTURE_INF)?;
    let mut cells: Vec<(T, T)> = (0..ens.n_paths()).map(|p| (z.at(p, i), x.at(p, i))).collect();
    cells.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite Bessel values"));
    let np = cells.len();
    let mut entries = Vec::new();
    for b in 0..bins {
        let chunk = &cells[b * np / bins..(b + 1) * np / bins];
        let nb = T::from_usize_exact(chunk.len());
        for &p in levels {
            let level = T::from_usize_exact(p) * eps;
            let (mut hits, mut mean, mut var) = (T::zero(), T::zero(), T::zero());
            for &(zv, xv) in chunk {
                let pi = (T::one() - level / zv).max(T::zero());
                mean = mean + pi;
                var = var + pi * (T::one() - pi);
                if xv > level {
                    hits = hits + T::one();
                }
            }
            entries.push(AuditEntry::new(format!("ladder[p={p}]/bin{b:02}"), hits / nb, mean / nb, var.sqrt() / nb));
        }
    }
    Ok(AuditReport::new(AuditMetadata::of(ens), entries))
}
