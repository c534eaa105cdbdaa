use super::report::{AuditEntry, AuditMetadata, AuditReport};
use crate::error::{invalid, Result};
use crate::expand::FeatureStream;
use crate::gridpath::{realized_bracket, PathEnsemble};
use crate::scalar::Scalar;
use crate::stats::{variance, Estimate};

fn locate<T: Scalar>(ens: &PathEnsemble<T>, t: T) -> Result<usize> {
    let tol = T::lit(1e-9) * T::one().max(ens.grid().horizon());
    ens.grid().index_near(t, tol).ok_or_else(|| invalid(format!("time {t} is not on the ensemble grid")))
}

/// Martingale test of channel `m` over `(s, t)` pairs: `E[(M_t - M_s) xi] = 0`
/// for `xi` the constant, each time-`s` feature and its clipped version.
pub fn increment_test<T: Scalar>(
    ens: &PathEnsemble<T>,
    m: &str,
    features: &FeatureStream<T>,
    pairs: &[(T, T)],
) -> Result<AuditReport<T>> {
    if pairs.is_empty() {
        return Err(invalid("increment test needs at least one (s, t) pair"));
    }
    if !ens.grid().is_prefix_of(features.grid()) || features.n_paths() != ens.n_paths() {
        return Err(invalid("features do not cover the ensemble grid and paths"));
    }
    let ch = ens.channel(m)?;
    let np = ens.n_paths();
    let mut entries = Vec::new();
    for &(s, t) in pairs {
        let (i, j) = (locate(ens, s)?, locate(ens, t)?);
        if i >= j {
            return Err(invalid(format!("increment pair needs s < t, got ({s}, {t})")));
        }
        let tag = format!("[s={:.6},t={:.6}]", s.to_f64_lossy(), t.to_f64_lossy());
        let dm: Vec<T> = (0..np).map(|p| ch.at(p, j) - ch.at(p, i)).collect();
        entries.push(AuditEntry::from_estimate(
            format!("{tag}/const"),
            Estimate::of_samples(dm.iter().copied()),
            T::zero(),
        ));
        for (k, label) in features.labels_at(i).iter().enumerate() {
            let xi: Vec<T> = (0..np).map(|p| features.features(i, p)[k]).collect();
            let raw = Estimate::of_samples(dm.iter().zip(&xi).map(|(d, x)| *d * *x));
            entries.push(AuditEntry::from_estimate(format!("{tag}/raw:{label}"), raw, T::zero()));
            let centre = Estimate::of_samples(xi.iter().copied()).value;
            let band = T::lit(3.0) * variance(xi.iter().copied()).sqrt();
            let clipped =
                Estimate::of_samples(dm.iter().zip(&xi).map(|(d, x)| *d * x.max(centre - band).min(centre + band)));
            entries.push(AuditEntry::from_estimate(format!("{tag}/clip:{label}"), clipped, T::zero()));
        }
    }
    Ok(AuditReport::new(AuditMetadata::of(ens), entries))
}

/// Mean realized bracket of channel `m` against `t` at each checkpoint.
/// A zero standard error (deterministic path) marks the entry degenerate.
pub fn qv_check<T: Scalar>(ens: &PathEnsemble<T>, m: &str, checkpoints: &[T]) -> Result<AuditReport<T>> {
    if ens.grid().len() < 2 {
        return Err(invalid("qv check needs at least two grid points"));
    }
    let ch = ens.channel(m)?;
    let idx = checkpoints.iter().map(|&t| locate(ens, t)).collect::<Result<Vec<_>>>()?;
    let mut per_path = vec![Vec::with_capacity(ens.n_paths()); idx.len()];
    let mut buf = Vec::new();
    for p in 0..ens.n_paths() {
        realized_bracket(ch.row(p), &mut buf);
        for (k, &i) in idx.iter().enumerate() {
            per_path[k].push(buf[i]);
        }
    }
    let entries = checkpoints
        .iter()
        .zip(per_path)
        .map(|(&t, xs)| {
            AuditEntry::from_estimate(format!("qv[t={:.6}]", t.to_f64_lossy()), Estimate::of_samples(xs), t)
        })
        .collect();
    Ok(AuditReport::new(AuditMetadata::of(ens), entries))
}
