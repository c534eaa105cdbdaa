use serde::{Deserialize, Serialize};

use crate::error::{degenerate, invalid, Result};
use crate::expand::ExpansionSpec;
use crate::linalg::SymSolver;
use crate::scalar::Scalar;

use super::assemble::ObservedLaw;
use super::system::Var;

/// Step of the finite-difference cross-check of the analytic derivative.
pub const FD_STEP: f64 = 1e-6;
/// Relative agreement required between analytic and finite-difference drifts.
pub const FD_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Right derivative in `t` of `E[W_t | G_s]` at `t = s`.
    Projection,
    /// Sensitivity of the Gaussian log conditional density of the signals
    /// to the current Brownian value.
    Jacod,
}

/// `alpha_s = weights . observed` for a Gaussian spec at time `s`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriftWeights<T> {
    pub s: T,
    pub observed: Vec<Var>,
    pub weights: Vec<T>,
    pub ridge: Option<T>,
}

impl<T: Scalar> DriftWeights<T> {
    pub fn evaluate(&self, obs: &Observation<T>) -> Result<T> {
        let mut acc = T::zero();
        for (v, w) in self.observed.iter().zip(&self.weights) {
            let x = obs.get(v).ok_or_else(|| invalid(format!("no observed value for {v}")))?;
            acc = acc + *w * x;
        }
        Ok(acc)
    }
}

/// Observed values keyed by variable.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Observation<T> {
    entries: Vec<(Var, T)>,
}

impl<T: Scalar> Observation<T> {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn with(mut self, v: Var, x: T) -> Self {
        self.entries.push((v, x));
        self
    }

    pub fn with_w(self, t: T, x: T) -> Self {
        self.with(Var::w(t), x)
    }

    pub fn with_signal(self, j: usize, x: T) -> Self {
        self.with(Var::Signal(j), x)
    }

    pub fn get(&self, v: &Var) -> Option<T> {
        self.entries.iter().find(|(k, _)| k.matches(v)).map(|(_, x)| *x)
    }
}

pub fn drift_weights<T: Scalar>(spec: &ExpansionSpec<T>, s: T, route: Route) -> Result<DriftWeights<T>> {
    let law = ObservedLaw::build(spec, s)?;
    match route {
        Route::Projection => projection_weights(&law, s),
        Route::Jacod => jacod_weights(&law, s),
    }
}

fn projection_weights<T: Scalar>(law: &ObservedLaw<T>, s: T) -> Result<DriftWeights<T>> {
    let n = law.dim();
    let solver = SymSolver::new(&law.cov, n)?;
    let weights = solver.solve(&law.dcross_w(s));

    let mut h = T::lit(FD_STEP);
    if let Some(k) = law.next_kink(s) {
        h = h.min((k - s) / T::lit(4.0));
    }
    let (c0, c1) = (law.cross_w(s), law.cross_w(s + h + h));
    let fd: Vec<T> = c1.iter().zip(&c0).map(|(a, b)| (*a - *b) / (h + h)).collect();
    let fd_weights = solver.solve(&fd);
    let scale = weights.iter().fold(T::one(), |m, w| m.max(w.abs()));
    let gap = weights.iter().zip(&fd_weights).fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
    if gap > T::lit(FD_TOL) * scale {
        return Err(degenerate(format!("analytic and finite-difference drift weights disagree by {gap:e} at s = {s}")));
    }
    Ok(DriftWeights { s, observed: law.vars(), weights, ridge: solver.ridge() })
}

fn jacod_weights<T: Scalar>(law: &ObservedLaw<T>, s: T) -> Result<DriftWeights<T>> {
    let na = law.anchors.len();
    let ny = law.signals.len();
    let n = na + ny;
    let mut weights = vec![T::zero(); n];
    if ny == 0 {
        return Ok(DriftWeights { s, observed: law.vars(), weights, ridge: None });
    }
    let c = |i: usize, j: usize| law.cov[i * n + j];
    let mut ridge = None;
    // Regression of signals on anchors: X = Sigma_AA^{-1} Sigma_AY (na x ny).
    let mut x = vec![T::zero(); na * ny];
    let b: Vec<T>;
    if na > 0 {
        let saa: Vec<T> = (0..na).flat_map(|i| (0..na).map(move |j| (i, j))).map(|(i, j)| c(i, j)).collect();
        let sa = SymSolver::new(&saa, na)?;
        ridge = sa.ridge();
        for y in 0..ny {
            let col: Vec<T> = (0..na).map(|i| c(i, na + y)).collect();
            for (i, v) in sa.solve(&col).into_iter().enumerate() {
                x[i * ny + y] = v;
            }
        }
        let is = law
            .anchors
            .iter()
            .position(|a| *a == s)
            .ok_or_else(|| degenerate("current Brownian value missing from anchors"))?;
        b = (0..ny).map(|y| x[is * ny + y]).collect();
    } else {
        // s = 0: the conditional mean of the signals moves with W at rate
        // d/dr cov(Y, W_r) at r = 0+.
        b = law.dcross_w(s)[na..].to_vec();
    }
    // Conditional covariance of the signals given the anchors.
    let mut cyy = vec![T::zero(); ny * ny];
    for a in 0..ny {
        for bb in 0..ny {
            let explained: T = (0..na).map(|i| c(na + a, i) * x[i * ny + bb]).sum();
            cyy[a * ny + bb] = c(na + a, na + bb) - explained;
        }
    }
    let sc = SymSolver::new(&cyy, ny).map_err(|e| degenerate(format!("conditional signal covariance: {e}")))?;
    ridge = ridge.or(sc.ridge());
    let u = sc.solve(&b);
    weights[na..na + ny].copy_from_slice(&u[..ny]);
    for i in 0..na {
        weights[i] = -(0..ny).map(|y| x[i * ny + y] * u[y]).sum::<T>();
    }
    Ok(DriftWeights { s, observed: law.vars(), weights, ridge })
}

/// Information drift at `s` from the derivative of the conditional mean.
pub fn projection_drift<T: Scalar>(spec: &ExpansionSpec<T>, s: T, obs: &Observation<T>) -> Result<T> {
    drift_weights(spec, s, Route::Projection)?.evaluate(obs)
}

/// Information drift at `s` from the Gaussian log conditional density.
pub fn jacod_drift<T: Scalar>(spec: &ExpansionSpec<T>, s: T, obs: &Observation<T>) -> Result<T> {
    drift_weights(spec, s, Route::Jacod)?.evaluate(obs)
}
