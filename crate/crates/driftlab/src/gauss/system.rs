use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{is_psd, SymSolver};
use crate::scalar::Scalar;

/// Identifier of a variable in a Gaussian system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Var {
    /// Brownian value at a time.
    W(f64),
    /// Signal feature by position in the feature vector.
    Signal(usize),
    Named(String),
}

impl Var {
    pub fn w<T: Scalar>(t: T) -> Self {
        Var::W(t.to_f64_lossy())
    }

    /// Equality with a 1e-12 tolerance on Brownian times.
    pub fn matches(&self, other: &Var) -> bool {
        match (self, other) {
            (Var::W(a), Var::W(b)) => (a - b).abs() <= 1e-12 * a.abs().max(1.0),
            _ => self == other,
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::W(t) => write!(f, "W({t})"),
            Var::Signal(j) => write!(f, "signal[{j}]"),
            Var::Named(s) => f.write_str(s),
        }
    }
}

/// Finite joint Gaussian law.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSystem<T> {
    labels: Vec<Var>,
    mean: Vec<T>,
    cov: Vec<T>,
}

/// Weights representing `E[target | observed]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionalRepr<T> {
    pub target: Var,
    pub observed: Vec<Var>,
    pub weights: Vec<T>,
    pub intercept: T,
    pub residual_var: T,
    /// Conditional mean at the supplied observation values.
    pub value: T,
    /// Ridge added to the observed block, if it was near-singular.
    pub ridge: Option<T>,
}

impl<T: Scalar> ConditionalRepr<T> {
    pub fn evaluate(&self, values: &[T]) -> T {
        self.intercept + self.weights.iter().zip(values).map(|(w, v)| *w * *v).sum::<T>()
    }
}

impl<T: Scalar> GaussianSystem<T> {
    pub fn new(labels: Vec<Var>, mean: Vec<T>, cov: Vec<T>) -> Result<Self> {
        let n = labels.len();
        if mean.len() != n || cov.len() != n * n {
            return Err(invalid("labels, mean and covariance dimensions disagree"));
        }
        for i in 0..n {
            if labels[..i].iter().any(|l| l.matches(&labels[i])) {
                return Err(invalid(format!("duplicate label {}", labels[i])));
            }
        }
        if !is_psd(&cov, n, T::lit(1e-12), T::lit(1e-10)) {
            return Err(invalid("covariance is not symmetric positive semidefinite"));
        }
        Ok(Self { labels, mean, cov })
    }

    /// Brownian values at distinct positive times.
    pub fn brownian(times: &[T]) -> Result<Self> {
        let n = times.len();
        let mut cov = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                cov[i * n + j] = times[i].min(times[j]);
            }
        }
        Self::new(times.iter().map(|t| Var::w(*t)).collect(), vec![T::zero(); n], cov)
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[Var] {
        &self.labels
    }

    pub fn position(&self, v: &Var) -> Option<usize> {
        self.labels.iter().position(|l| l.matches(v))
    }

    pub fn mean_of(&self, v: &Var) -> Option<T> {
        self.position(v).map(|i| self.mean[i])
    }

    pub fn cov_of(&self, a: &Var, b: &Var) -> Option<T> {
        Some(self.cov[self.position(a)? * self.dim() + self.position(b)?])
    }

    fn idx(&self, v: &Var) -> Result<usize> {
        self.position(v).ok_or_else(|| invalid(format!("label {v} not in the system")))
    }

    /// Conditional mean of `target` given `observed = values`.
    pub fn condition(&self, target: &Var, observed: &[Var], values: &[T]) -> Result<ConditionalRepr<T>> {
        if observed.len() != values.len() {
            return Err(invalid("one value per observed label is required"));
        }
        let n = self.dim();
        let ti = self.idx(target)?;
        let oi: Vec<usize> = observed.iter().map(|v| self.idx(v)).collect::<Result<_>>()?;
        // Zero-variance observations are constants and carry no information.
        let live: Vec<usize> = (0..oi.len()).filter(|&k| self.cov[oi[k] * n + oi[k]] > T::zero()).collect();
        let m = live.len();
        let mut block = vec![T::zero(); m * m];
        let mut rhs = vec![T::zero(); m];
        for (a, &ka) in live.iter().enumerate() {
            for (b, &kb) in live.iter().enumerate() {
                block[a * m + b] = self.cov[oi[ka] * n + oi[kb]];
            }
            rhs[a] = self.cov[oi[ka] * n + ti];
        }
        let solver = SymSolver::new(&block, m)?;
        let w_live = solver.solve(&rhs);
        let mut weights = vec![T::zero(); oi.len()];
        for (a, &k) in live.iter().enumerate() {
            weights[k] = w_live[a];
        }
        let intercept = self.mean[ti] - weights.iter().zip(&oi).map(|(w, &k)| *w * self.mean[k]).sum::<T>();
        let explained: T = w_live.iter().zip(&rhs).map(|(w, r)| *w * *r).sum();
        let residual_var = (self.cov[ti * n + ti] - explained).max(T::zero());
        let mut repr = ConditionalRepr {
            target: target.clone(),
            observed: observed.to_vec(),
            weights,
            intercept,
            residual_var,
            value: T::zero(),
            ridge: solver.ridge(),
        };
        repr.value = repr.evaluate(values);
        Ok(repr)
    }
}
