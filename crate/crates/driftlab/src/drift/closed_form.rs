use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::estimate::{DriftEstimate, DriftMethod};
use crate::error::{invalid, Error, Result};
use crate::gridpath::{channel, PathEnsemble};
use crate::quadrature::adaptive_simpson;
use crate::scalar::Scalar;

/// Catalogue of drifts known in closed form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "example", rename_all = "snake_case")]
pub enum ClosedForm {
    /// Initial enlargement by `W_1`: `(W_1 - W_s) / (1 - s)`.
    Ito,
    /// `W_1` blurred by `eps * B^H_{1-s}`, an independent fBm run backwards
    /// from the signal time.
    FbmNoise { eps: f64, hurst: f64 },
}

impl ClosedForm {
    pub fn parse(label: &str, eps: f64, hurst: f64) -> Result<Self> {
        match label {
            "ito" => Ok(Self::Ito),
            "fbm_noise" => Ok(Self::FbmNoise { eps, hurst }),
            other => Err(invalid(format!("unknown closed-form example '{other}'"))),
        }
    }

    fn eval<T: Scalar>(self, s: T, gap: T, fbm: T) -> T {
        let one_s = T::one() - s;
        match self {
            Self::Ito => gap / one_s,
            Self::FbmNoise { eps, hurst } => {
                let eps = T::lit(eps);
                let blur = eps * eps * one_s.powf(T::lit(2.0 * hurst));
                (gap + eps * fbm) / (one_s + blur)
            }
        }
    }

    /// `E[alpha_s^2]` under the model, finite for `s < 1`.
    pub fn second_moment<T: Scalar>(self, s: T) -> T {
        self.second_moment_at_gap(T::one() - s)
    }

    fn second_moment_at_gap<T: Scalar>(self, one_s: T) -> T {
        match self {
            Self::Ito => T::one() / one_s,
            Self::FbmNoise { eps, hurst } => {
                let eps = T::lit(eps);
                T::one() / (one_s + eps * eps * one_s.powf(T::lit(2.0 * hurst)))
            }
        }
    }

    /// `int_0^upper E[alpha_s^2] ds` by adaptive quadrature in `v = -ln(1 - s)`,
    /// where the integrand is bounded.
    pub fn integrated_second_moment<T: Scalar>(self, upper: T) -> Result<T> {
        if !(upper >= T::zero() && upper < T::one()) {
            return Err(Error::Domain(format!("integration bound {upper} outside [0, 1)")));
        }
        let vmax = -(T::one() - upper).ln();
        let g = |v: T| {
            let one_s = (-v).exp();
            one_s * self.second_moment_at_gap(one_s)
        };
        Ok(adaptive_simpson(&g, T::zero(), vmax, T::lit(1e-13)))
    }
}

fn field<T: Copy>(state: &[(&str, T)], name: &str) -> Result<T> {
    state
        .iter()
        .find(|(k, _)| *k == name)
        .map(|(_, v)| *v)
        .ok_or_else(|| invalid(format!("missing state field '{name}'")))
}

/// Closed-form drift of `example` at a named state.
///
/// Fields: `s`, `w_s`, `w_1` for both examples; `fbm` (the blurring fBm at
/// lag `1 - s`), `eps` and `hurst` for `fbm_noise`.
pub fn closed_form_drift<T: Scalar>(example: &str, state: &[(&str, T)]) -> Result<T> {
    let s = field(state, "s")?;
    let gap = field(state, "w_1")? - field(state, "w_s")?;
    let (form, fbm) = match example {
        "ito" => (ClosedForm::Ito, T::zero()),
        "fbm_noise" => {
            let eps = field(state, "eps")?.to_f64_lossy();
            let hurst = field(state, "hurst")?.to_f64_lossy();
            (ClosedForm::FbmNoise { eps, hurst }, field(state, "fbm")?)
        }
        other => return Err(invalid(format!("unknown closed-form example '{other}'"))),
    };
    if !(s < T::one()) {
        return Err(Error::Domain(format!("closed-form drift is defined for s < 1, got {s}")));
    }
    Ok(form.eval(s, gap, fbm))
}

/// Closed-form drift on every path of `ens` at every grid time `s < 1`.
///
/// Needs `1` on the grid; times `s >= 1` hold NaN. The fBm example reads the
/// `fbm` channel at lag `1 - s`, which must also be a grid point.
pub fn closed_form_estimate<T: Scalar>(form: ClosedForm, ens: &PathEnsemble<T>) -> Result<DriftEstimate<T>> {
    let grid = ens.grid().clone();
    let tol = T::lit(1e-9) * T::one().max(grid.horizon());
    let one =
        grid.index_near(T::one(), tol).ok_or_else(|| invalid("the signal time 1 is not on the simulation grid"))?;
    let w = ens.channel(channel::W)?;
    let times = grid.times();
    let fbm = match form {
        ClosedForm::Ito => None,
        ClosedForm::FbmNoise { .. } => {
            let lags = times
                .iter()
                .map(|&s| if s < T::one() { grid.index_near(T::one() - s, tol) } else { Some(0) })
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| invalid("fbm lags 1 - s are not on the simulation grid"))?;
            Some((ens.channel(channel::FBM)?, lags))
        }
    };
    let n = grid.len();
    let mut values = vec![T::nan(); ens.n_paths() * n];
    for (p, row) in values.chunks_mut(n).enumerate() {
        let w1 = w.at(p, one);
        for (i, &s) in times.iter().enumerate().take_while(|(_, s)| **s < T::one()) {
            let b = fbm.as_ref().map_or(T::zero(), |(c, lags)| c.at(p, lags[i]));
            row[i] = form.eval(s, w1 - w.at(p, i), b);
        }
    }
    DriftEstimate::new(Arc::clone(&grid), DriftMethod::ClosedForm, values, ens.channel(channel::QV)?.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridpath::{simulate, Law, Model, TimeGrid};
    use approx::assert_relative_eq;

    #[test]
    fn catalogue_values() {
        let v = closed_form_drift("ito", &[("s", 0.5), ("w_s", 0.2), ("w_1", 0.7)]).unwrap();
        assert_relative_eq!(v, 1.0, epsilon = 1e-15);
        let st = [("s", 0.5), ("w_s", 0.0), ("w_1", 0.3), ("fbm", 0.1), ("eps", 1.0), ("hurst", 0.25)];
        let v = closed_form_drift("fbm_noise", &st).unwrap();
        assert_relative_eq!(v, 0.4 / (0.5 + 0.5f64.sqrt()), epsilon = 1e-15);
        assert_relative_eq!(v, 0.331371, epsilon = 1e-6);
    }

    #[test]
    fn zero_blur_is_ito() {
        let st = [("s", 0.3), ("w_s", -0.4), ("w_1", 0.9), ("fbm", 2.0), ("eps", 0.0), ("hurst", 0.7)];
        let a = closed_form_drift("fbm_noise", &st).unwrap();
        let b = closed_form_drift("ito", &st).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn errors() {
        assert!(matches!(closed_form_drift("ito", &[("s", 1.0), ("w_s", 0.0), ("w_1", 0.0)]), Err(Error::Domain(_))));
        assert!(matches!(closed_form_drift("ito", &[("s", 0.2), ("w_1", 0.0)]), Err(Error::InvalidArgument(_))));
        assert!(closed_form_drift("bessel", &[("s", 0.2)]).is_err());
    }

    #[test]
    fn ito_integral_is_minus_log() {
        let v: f64 = ClosedForm::Ito.integrated_second_moment(0.9).unwrap();
        assert_relative_eq!(v, -(0.1f64.ln()), epsilon = 1e-10);
    }

    #[test]
    fn ensemble_values_match_catalogue() {
        let g = TimeGrid::uniform(1.0, 8).unwrap();
        let e = simulate(&Law::new(vec![Model::Brownian, Model::Fbm { hurst: 0.3 }]), &g, 3, 4).unwrap();
        let form = ClosedForm::FbmNoise { eps: 0.5, hurst: 0.3 };
        let est: DriftEstimate<f64> = closed_form_estimate(form, &e).unwrap();
        let w = e.channel(channel::W).unwrap();
        let f = e.channel(channel::FBM).unwrap();
        let st =
            [("s", 0.25), ("w_s", w.at(1, 2)), ("w_1", w.at(1, 8)), ("fbm", f.at(1, 6)), ("eps", 0.5), ("hurst", 0.3)];
        assert_relative_eq!(est.value(1, 2), closed_form_drift("fbm_noise", &st).unwrap(), epsilon = 1e-14);
        assert!(est.value(0, 8).is_nan());
    }
}
