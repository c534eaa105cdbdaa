use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gridpath::{fbm_cov, GridFunction, TimeGrid};
use crate::scalar::Scalar;

/// `sum_k c_k W(r_k)`, stored as `(r_k, c_k)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFunctional<T> {
    pub terms: Vec<(T, T)>,
}

impl<T: Scalar> LinearFunctional<T> {
    pub fn point(t: T) -> Self {
        Self { terms: vec![(t, T::one())] }
    }

    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    /// `cov(W_a, L)`.
    pub fn cov_w(&self, a: T) -> T {
        self.terms.iter().map(|&(r, c)| c * a.min(r)).sum()
    }

    /// Right derivative of `a -> cov(W_a, L)` at `a = s`.
    pub fn dcov_w(&self, s: T) -> T {
        self.terms.iter().filter(|(r, _)| *r > s).map(|&(_, c)| c).sum()
    }

    pub fn cov(&self, other: &Self) -> T {
        self.terms.iter().map(|&(r, c)| c * other.cov_w(r)).sum()
    }

    pub fn times(&self) -> impl Iterator<Item = T> + '_ {
        self.terms.iter().map(|(r, _)| *r)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalProcess<T> {
    /// `X_t = W_{t+delta} + noise`.
    Anticipation { delta: T },
    /// `X_t = W_1 + eps * B^H_{1-t} + noise` with an independent fBm `B^H`.
    FbmBridge { eps: T, hurst: T },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel<T> {
    None,
    White { sigma: T },
    Ou { theta: T, sigma: T },
}

impl<T: Scalar> NoiseModel<T> {
    pub fn cov(&self, s: T, t: T) -> T {
        match *self {
            NoiseModel::None => T::zero(),
            NoiseModel::White { sigma } => {
                if s == t {
                    sigma * sigma
                } else {
                    T::zero()
                }
            }
            NoiseModel::Ou { theta, sigma } => sigma * sigma / (theta + theta) * (-theta * (t - s).abs()).exp(),
        }
    }
}

/// Declarative description of an enlarged filtration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ExpansionSpec<T> {
    /// The signal `L + nu` with `nu ~ N(0, noise_var)` is known from time 0.
    InitialSignal { signal: LinearFunctional<T>, noise_var: T },
    /// The signal process is revealed at each observation time.
    DiscretizedProcess { signal: SignalProcess<T>, noise: NoiseModel<T>, obs: TimeGrid<T> },
    /// Future-infimum ladder of a Bessel-3 process with width `eps`.
    Bessel3Ladder { eps: T },
    /// `W` is revealed on `[0, max(s, phi(s))]` at time `s`.
    TimeChange { phi: GridFunction<T> },
}

impl<T: Scalar> ExpansionSpec<T> {
    pub fn initial_point(signal_time: T, noise_var: T) -> Self {
        ExpansionSpec::InitialSignal { signal: LinearFunctional::point(signal_time), noise_var }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ExpansionSpec::InitialSignal { signal, noise_var } => {
                if !(*noise_var >= T::zero()) {
                    return Err(invalid("signal noise variance must be non-negative"));
                }
                if signal.times().any(|r| !(r >= T::zero())) {
                    return Err(invalid("signal times must be non-negative"));
                }
            }
            ExpansionSpec::DiscretizedProcess { signal, noise, obs } => {
                match *signal {
                    SignalProcess::Anticipation { delta } if !(delta >= T::zero()) => {
                        return Err(invalid("anticipation delta must be non-negative"));
                    }
                    SignalProcess::FbmBridge { eps, hurst } => {
                        if !(eps >= T::zero()) || !(hurst > T::zero() && hurst < T::one()) {
                            return Err(invalid("fbm-bridge signal needs eps >= 0 and H in (0,1)"));
                        }
                        if obs.horizon() > T::one() {
                            return Err(invalid("fbm-bridge observations must lie in [0,1]"));
                        }
                    }
                    _ => {}
                }
                match *noise {
                    NoiseModel::White { sigma } if !(sigma >= T::zero()) => {
                        return Err(invalid("white noise sigma must be non-negative"));
                    }
                    NoiseModel::Ou { theta, sigma } if !(theta > T::zero() && sigma > T::zero()) => {
                        return Err(invalid("ou noise needs theta > 0 and sigma > 0"));
                    }
                    _ => {}
                }
            }
            ExpansionSpec::Bessel3Ladder { eps } => {
                if !(*eps > T::zero()) {
                    return Err(invalid("ladder width must be positive"));
                }
            }
            ExpansionSpec::TimeChange { .. } => {}
        }
        Ok(())
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, ExpansionSpec::InitialSignal { .. } | ExpansionSpec::DiscretizedProcess { .. })
    }

    /// Number of Gaussian signal variables revealed by time `s`.
    pub fn revealed_count(&self, s: T) -> usize {
        match self {
            ExpansionSpec::InitialSignal { .. } => 1,
            ExpansionSpec::DiscretizedProcess { obs, .. } => obs.times().partition_point(|t| *t <= s),
            _ => 0,
        }
    }

    /// Brownian part of signal level `j` (before differencing).
    pub(crate) fn level_functional(&self, j: usize) -> LinearFunctional<T> {
        match self {
            ExpansionSpec::InitialSignal { signal, .. } => signal.clone(),
            ExpansionSpec::DiscretizedProcess { signal, obs, .. } => match *signal {
                SignalProcess::Anticipation { delta } => LinearFunctional::point(obs.times()[j] + delta),
                SignalProcess::FbmBridge { .. } => LinearFunctional::point(T::one()),
            },
            _ => LinearFunctional::zero(),
        }
    }

    /// Covariance of the non-Brownian parts of signal levels `i` and `j`.
    pub(crate) fn level_noise_cov(&self, i: usize, j: usize) -> T {
        match self {
            ExpansionSpec::InitialSignal { noise_var, .. } => *noise_var,
            ExpansionSpec::DiscretizedProcess { signal, noise, obs } => {
                let (ti, tj) = (obs.times()[i], obs.times()[j]);
                let bridge = match *signal {
                    SignalProcess::FbmBridge { eps, hurst } => eps * eps * fbm_cov(T::one() - ti, T::one() - tj, hurst),
                    SignalProcess::Anticipation { .. } => T::zero(),
                };
                bridge + noise.cov(ti, tj)
            }
            _ => T::zero(),
        }
    }

    /// Whether signal features are increments of levels (discretized
    /// processes) rather than the levels themselves.
    pub(crate) fn differenced(&self) -> bool {
        matches!(self, ExpansionSpec::DiscretizedProcess { .. })
    }
}
