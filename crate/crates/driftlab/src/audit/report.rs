use serde::Serialize;

use crate::gridpath::PathEnsemble;
use crate::scalar::Scalar;
use crate::stats::{z_score, Estimate};

/// Pass threshold on `|z|`.
pub const Z_LEVEL: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditEntry<T> {
    pub name: String,
    pub statistic: T,
    pub expected: T,
    pub se: T,
    pub z: T,
    pub pass: bool,
    /// Set when the standard error is zero and the z-score is a formality.
    pub degenerate: bool,
}

impl<T: Scalar> AuditEntry<T> {
    pub fn new(name: impl Into<String>, statistic: T, expected: T, se: T) -> Self {
        let z = z_score(statistic - expected, se);
        Self {
            name: name.into(),
            statistic,
            expected,
            se,
            z,
            pass: z.abs() <= T::lit(Z_LEVEL),
            degenerate: !(se > T::zero()),
        }
    }

    pub fn from_estimate(name: impl Into<String>, est: Estimate<T>, expected: T) -> Self {
        Self::new(name, est.value, expected, est.se)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditMetadata<T> {
    pub n_paths: usize,
    pub seed: u64,
    pub grid_points: usize,
    pub horizon: T,
}

impl<T: Scalar> AuditMetadata<T> {
    pub fn of(ens: &PathEnsemble<T>) -> Self {
        Self { n_paths: ens.n_paths(), seed: ens.seed(), grid_points: ens.grid().len(), horizon: ens.grid().horizon() }
    }
}

/// Entries sorted by name with the `|z| <= 3` convention.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport<T> {
    entries: Vec<AuditEntry<T>>,
    level: f64,
    metadata: AuditMetadata<T>,
}

impl<T: Scalar> AuditReport<T> {
    pub fn new(metadata: AuditMetadata<T>, mut entries: Vec<AuditEntry<T>>) -> Self {
        entries.sort_by(|a, b| a.name.cmp(&b.name));
        Self { entries, level: Z_LEVEL, metadata }
    }

    pub fn entries(&self) -> &[AuditEntry<T>] {
        &self.entries
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn metadata(&self) -> &AuditMetadata<T> {
        &self.metadata
    }

    pub fn entry(&self, name: &str) -> Option<&AuditEntry<T>> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Entries whose name starts with `prefix`.
    pub fn group<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a AuditEntry<T>> + 'a {
        self.entries.iter().filter(move |e| e.name.starts_with(prefix))
    }

    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AuditEntry<T>> {
        self.entries.iter().filter(|e| !e.pass)
    }

    /// Union of two reports on the same ensemble, `prefix/` prepended to the
    /// names of `other`.
    pub fn merged(mut self, prefix: &str, other: AuditReport<T>) -> Self {
        self.entries.extend(other.entries.into_iter().map(|mut e| {
            e.name = format!("{prefix}/{}", e.name);
            e
        }));
        self.entries.sort_by(|a, b| a.name.cmp(&b.name));
        self
    }
}
