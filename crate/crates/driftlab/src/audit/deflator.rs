use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::increment::increment_test;
use super::report::{AuditEntry, AuditMetadata, AuditReport};
use crate::drift::{DriftEstimate, DriftMethod};
use crate::error::{invalid, Result};
use crate::expand::FeatureStream;
use crate::gridpath::{Channel, PathEnsemble, PathKind, SamplePath, TimeGrid};
use crate::scalar::Scalar;
use crate::stats::Estimate;

/// Where a deflator came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DeflatorLog {
    pub alpha_method: DriftMethod,
    pub alpha_fingerprint: u64,
    pub m_tilde: String,
    pub scheme: &'static str,
}

/// Per-path stochastic exponential `Z = E(alpha . M~)`, log scheme.
#[derive(Clone, Debug)]
pub struct DeflatorPath<T> {
    grid: Arc<TimeGrid<T>>,
    n_paths: usize,
    values: Vec<T>,
    log: DeflatorLog,
}

impl<T: Scalar> DeflatorPath<T> {
    pub fn grid(&self) -> &Arc<TimeGrid<T>> {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn log(&self) -> &DeflatorLog {
        &self.log
    }

    pub fn row(&self, p: usize) -> &[T] {
        let n = self.grid.len();
        &self.values[p * n..(p + 1) * n]
    }

    pub fn terminal(&self) -> Estimate<T> {
        let n = self.grid.len();
        Estimate::of_samples((0..self.n_paths).map(|p| self.values[p * n + n - 1]))
    }

    /// Number of stored values that are not strictly positive and finite.
    pub fn nonpositive(&self) -> usize {
        self.values.iter().filter(|z| !(**z > T::zero() && z.is_finite())).count()
    }
}

fn log_scheme<T: Scalar>(alpha: &[T], mt: &[T], q: &[T], out: &mut [T]) {
    let mut lz = T::zero();
    out[0] = T::one();
    for i in 0..out.len() - 1 {
        let a = alpha[i];
        lz = lz + a * (mt[i + 1] - mt[i]) - T::half() * a * a * (q[i + 1] - q[i]);
        out[i + 1] = lz.exp();
    }
}

/// Single-path deflator: `log Z_t = sum_{u<t} (alpha_u dM~_u - alpha_u^2 d[M,M]_u / 2)`.
pub fn deflator_path<T: Scalar>(alpha: &[T], m_tilde: &SamplePath<T>, qv: &SamplePath<T>) -> Result<SamplePath<T>> {
    let n = m_tilde.values().len();
    if qv.kind() != PathKind::Qv || m_tilde.grid() != qv.grid() || alpha.len() != n {
        return Err(invalid("deflator inputs do not share a grid"));
    }
    let mut out = vec![T::zero(); n];
    log_scheme(alpha, m_tilde.values(), qv.values(), &mut out);
    SamplePath::new(m_tilde.grid().clone(), out, PathKind::Custom)
}

/// Deflator of every path from a drift estimate and the compensated channel
/// `m_tilde` of `ens`.
pub fn deflator<T: Scalar>(alpha: &DriftEstimate<T>, ens: &PathEnsemble<T>, m_tilde: &str) -> Result<DeflatorPath<T>> {
    let grid = alpha.grid().clone();
    if !grid.is_prefix_of(ens.grid()) || alpha.n_paths() != ens.n_paths() {
        return Err(invalid("drift estimate does not live on the ensemble grid"));
    }
    let n = grid.len();
    if (0..alpha.n_paths()).any(|p| alpha.row(p)[..n - 1].iter().any(|a| !a.is_finite())) {
        return Err(invalid("deflator needs a finite drift at every left point"));
    }
    let ch = ens.channel(m_tilde)?;
    let mut values = vec![T::zero(); n * alpha.n_paths()];
    values.par_chunks_mut(n).enumerate().for_each(|(p, row)| {
        log_scheme(alpha.row(p), &ch.row(p)[..n], &alpha.qv().row(p)[..n], row);
    });
    let log = DeflatorLog {
        alpha_method: alpha.method(),
        alpha_fingerprint: alpha.fingerprint(),
        m_tilde: m_tilde.to_string(),
        scheme: "log",
    };
    Ok(DeflatorPath { grid, n_paths: alpha.n_paths(), values, log })
}

/// Three identity groups for a deflator built from `alpha`:
/// `zm/...` martingale tests of `Z M`, `bracket/slope` regression of
/// `dZ dM` on `Z alpha d[M,M]` (slope 1), `positivity/nonpositive` census.
pub fn deflator_audit<T: Scalar>(
    z: &DeflatorPath<T>,
    ens: &PathEnsemble<T>,
    m: &str,
    alpha: &DriftEstimate<T>,
    features: &FeatureStream<T>,
    pairs: &[(T, T)],
) -> Result<AuditReport<T>> {
    if z.log.alpha_fingerprint != alpha.fingerprint() || z.grid != *alpha.grid() {
        return Err(invalid("deflator was built from a different drift"));
    }
    let n = z.grid.len();
    let ens = ens.truncated(z.grid.horizon())?;
    let ch = ens.channel(m)?;
    let np = z.n_paths;

    let zm: Vec<T> = (0..np).flat_map(|p| z.row(p).iter().zip(ch.row(p)).map(|(a, b)| *a * *b)).collect();
    let zm_ens = ens.clone().with_channel("zm", Channel::per_path(PathKind::Custom, n, zm)?)?;
    let features = if features.grid().len() == n { features.clone() } else { features.truncated(z.grid.clone())? };
    let group1 = increment_test(&zm_ens, "zm", &features, pairs)?;

    // Pooled through-origin slope with a path-clustered standard error.
    let cells = |p: usize| {
        let (zr, mr, ar) = (z.row(p), ch.row(p), alpha.row(p));
        (0..n - 1).map(move |i| {
            let x = zr[i] * ar[i] * alpha.dqv(p, i);
            let y = (zr[i + 1] - zr[i]) * (mr[i + 1] - mr[i]);
            (x, y)
        })
    };
    let (sxx, sxy) = (0..np).flat_map(cells).fold((T::zero(), T::zero()), |(a, b), (x, y)| (a + x * x, b + x * y));
    let slope = sxy / sxx;
    let meat: T = (0..np)
        .map(|p| {
            let g: T = cells(p).map(|(x, y)| x * (y - slope * x)).sum();
            g * g
        })
        .sum();
    let slope_se = meat.sqrt() / sxx;

    let bad = T::from_usize_exact(z.nonpositive());
    let entries = vec![
        AuditEntry::new("bracket/slope", slope, T::one(), slope_se),
        AuditEntry::new("positivity/nonpositive", bad, T::zero(), T::zero()),
        AuditEntry::from_estimate("terminal/mean", z.terminal(), T::one()),
    ];
    Ok(AuditReport::new(AuditMetadata::of(&ens), entries).merged("zm", group1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridpath::{channel, simulate, Law, Model};

    fn setup(alpha_value: f64) -> (PathEnsemble<f64>, DriftEstimate<f64>) {
        let g = TimeGrid::uniform(1.0, 32).unwrap();
        let e = simulate(&Law::from(Model::Brownian), &g, 200, 8).unwrap();
        let a = DriftEstimate::new(
            e.grid().clone(),
            DriftMethod::ClosedForm,
            vec![alpha_value; 200 * 33],
            e.channel(channel::QV).unwrap().clone(),
        )
        .unwrap();
        (e, a)
    }

    #[test]
    fn zero_drift_gives_unit_deflator() {
        let (e, a) = setup(0.0);
        let z = deflator(&a, &e, channel::W).unwrap();
        assert!((0..200).all(|p| z.row(p).iter().all(|v| *v == 1.0)));
        assert_eq!(z.nonpositive(), 0);
    }

    #[test]
    fn constant_drift_is_exponential() {
        let (e, a) = setup(0.7);
        let z = deflator(&a, &e, channel::W).unwrap();
        let w = e.channel(channel::W).unwrap();
        for (i, t) in e.grid().times().iter().enumerate() {
            let exact = (0.7 * w.at(5, i) - 0.49 * t / 2.0).exp();
            assert!((z.row(5)[i] - exact).abs() < 1e-12 * exact);
        }
    }

    #[test]
    fn audit_rejects_foreign_drift() {
        let (e, a) = setup(0.7);
        let (_, b) = setup(0.3);
        let z = deflator(&a, &e, channel::W).unwrap();
        let w = e.channel(channel::W).unwrap().clone();
        let f = FeatureStream::dynamic(e.grid().clone(), 200, vec!["w".into()], move |i, p, o| o[0] = w.at(p, i));
        assert!(deflator_audit(&z, &e, channel::W, &b, &f, &[(0.5, 0.75)]).is_err());
        let r = deflator_audit(&z, &e, channel::W, &a, &f, &[(0.5, 0.75)]).unwrap();
        assert_eq!(r.entry("positivity/nonpositive").unwrap().statistic, 0.0);
        assert!(r.entry("positivity/nonpositive").unwrap().pass);
        assert!(r.group("zm/").count() > 0);
    }
}
