//! Small Monte Carlo summaries shared by the estimators and audits.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// A Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate<T> {
    pub value: T,
    pub se: T,
}

impl<T: Scalar> Estimate<T> {
    pub fn zero() -> Self {
        Self { value: T::zero(), se: T::zero() }
    }

    /// Sample mean and standard error of the mean, skipping NaN entries.
    pub fn of_samples(xs: impl IntoIterator<Item = T>) -> Self {
        let xs: Vec<T> = xs.into_iter().filter(|x| !x.is_nan()).collect();
        if xs.is_empty() {
            return Self { value: T::nan(), se: T::nan() };
        }
        let n = T::from_usize_exact(xs.len());
        let mean = xs.iter().copied().sum::<T>() / n;
        Self { value: mean, se: (variance(xs) / n).sqrt() }
    }

    /// z-score of the estimate against `expected`; zero SE gives 0 on an exact
    /// match and an infinite score otherwise.
    pub fn z_against(&self, expected: T) -> T {
        z_score(self.value - expected, self.se)
    }
}

pub fn z_score<T: Scalar>(diff: T, se: T) -> T {
    if se > T::zero() {
        diff / se
    } else if diff == T::zero() {
        T::zero()
    } else {
        diff.signum() * T::infinity()
    }
}

/// Sample variance (n - 1 denominator), skipping NaN entries.
pub fn variance<T: Scalar>(xs: impl IntoIterator<Item = T>) -> T {
    let (mut n, mut mean, mut m2) = (0usize, T::zero(), T::zero());
    for x in xs.into_iter().filter(|x| !x.is_nan()) {
        n += 1;
        let d = x - mean;
        mean = mean + d / T::from_usize_exact(n);
        m2 = m2 + d * (x - mean);
    }
    if n > 1 {
        m2 / T::from_usize_exact(n - 1)
    } else {
        T::zero()
    }
}
