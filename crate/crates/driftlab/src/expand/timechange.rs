use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::gauss::{ConditionalRepr, GaussianSystem, Var};
use crate::gridpath::{GridFunction, SamplePath, TimeGrid};
use crate::scalar::Scalar;

/// Finite-difference step for the time derivative of a density.
pub const DENSITY_FD_STEP: f64 = 1e-6;
/// Relative agreement required between two quadrature refinements.
pub const QUADRATURE_REL_TOL: f64 = 1e-4;

/// `tau(s, t)`: `phi^{-1}(t)` when `t <= phi(s)`, else `max(s, phi^{-1}(s))`.
///
/// The second branch can exceed `s`; it is returned as written. A level never
/// reached by `phi` yields `+inf`.
pub fn anticipation_tau<T: Scalar>(phi: &GridFunction<T>, s: T, t: T) -> Result<T> {
    if s > t {
        return Err(invalid("anticipation_tau needs s <= t"));
    }
    let phi_s = phi.eval(s).ok_or_else(|| invalid("s outside the time-change domain"))?;
    if t <= phi_s {
        Ok(phi.pseudo_inverse(t))
    } else {
        Ok(s.max(phi.pseudo_inverse(s)))
    }
}

/// `W` read at `phi(tau(s, t))` by linear interpolation on the path grid.
pub fn tau_representation<T: Scalar>(phi: &GridFunction<T>, s: T, t: T, w: &SamplePath<T>) -> Result<T> {
    let tau = anticipation_tau(phi, s, t)?;
    if !tau.is_finite() {
        return Err(invalid("tau is out of range of the time change"));
    }
    let u = phi.eval(tau).ok_or_else(|| invalid("tau outside the time-change domain"))?;
    interpolate(w, u)
}

fn interpolate<T: Scalar>(w: &SamplePath<T>, u: T) -> Result<T> {
    let g = w.grid();
    if u < T::zero() || u > g.horizon() {
        return Err(invalid("time outside the path grid"));
    }
    let i = g.floor_index(u).min(g.len() - 2);
    let (t0, t1) = (g.times()[i], g.times()[i + 1]);
    let (v0, v1) = (w.values()[i], w.values()[i + 1]);
    Ok(v0 + (v1 - v0) * (u - t0) / (t1 - t0))
}

/// Exact `E[W_t | W_r, r in grid, r <= max(s, phi(s))]` for Brownian `W`.
pub fn time_change_conditional<T: Scalar>(
    phi: &GridFunction<T>,
    s: T,
    t: T,
    grid: &TimeGrid<T>,
) -> Result<ConditionalRepr<T>> {
    let phi_s = phi.eval(s).ok_or_else(|| invalid("s outside the time-change domain"))?;
    let horizon = s.max(phi_s);
    let tol = T::lit(1e-12) * T::one().max(grid.horizon());
    let observed: Vec<T> = grid.times().iter().copied().filter(|r| *r > T::zero() && *r <= horizon + tol).collect();
    let mut times = observed.clone();
    if !observed.iter().any(|r| (*r - t).abs() <= tol) {
        times.push(t);
    }
    let sys = GaussianSystem::brownian(&times)?;
    let labels: Vec<Var> = observed.iter().map(|r| Var::w(*r)).collect();
    sys.condition(&Var::w(t), &labels, &vec![T::zero(); labels.len()])
}

/// A density `f(u; s, t)` on `[0, s]` and optionally its analytic
/// right derivative in `t` at `t = s`.
pub struct TimeDensity<'a, T> {
    pub f: &'a dyn Fn(T, T, T) -> T,
    pub dt: Option<&'a dyn Fn(T, T) -> T>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimeChangeDrift<T> {
    pub value: T,
    /// Same quadrature on half the nodes.
    pub coarse: T,
    pub warning: Option<String>,
}

/// `int_0^s W(phi(u)) d/dt f(u; s, t)|_{t=s} du` by the composite trapezoid
/// rule on `nodes` intervals, checked against `nodes / 2`.
pub fn time_change_drift<T: Scalar>(
    phi: &GridFunction<T>,
    density: &TimeDensity<'_, T>,
    w: impl Fn(T) -> T,
    s: T,
    nodes: usize,
) -> Result<TimeChangeDrift<T>> {
    if !(s > T::zero()) {
        return Err(invalid("time-change drift needs s > 0"));
    }
    let nodes = nodes.max(2) & !1;
    let h = T::lit(DENSITY_FD_STEP);
    let d = |u: T| match density.dt {
        Some(dt) => dt(u, s),
        None => ((density.f)(u, s, s + h + h) - (density.f)(u, s, s)) / (h + h),
    };
    let step = s / T::from_usize_exact(nodes);
    let us: Vec<T> = (0..=nodes).map(|k| step * T::from_usize_exact(k)).collect();
    let mut mass = T::zero();
    let mut fine = T::zero();
    let mut coarse = T::zero();
    for (k, &u) in us.iter().enumerate() {
        let fv = (density.f)(u, s, s);
        if fv < -T::lit(1e-9) {
            return Err(Error::InvalidDensity(format!("negative density {fv} at u = {u}")));
        }
        let wu = phi.eval(u).map(&w).ok_or_else(|| invalid("u outside the time-change domain"))?;
        let g = wu * d(u);
        let end = k == 0 || k == nodes;
        let wt = if end { T::half() } else { T::one() };
        mass = mass + wt * fv * step;
        fine = fine + wt * g * step;
        if k % 2 == 0 {
            coarse = coarse + wt * g * (step + step);
        }
    }
    if (mass - T::one()).abs() > T::lit(1e-6) {
        return Err(Error::InvalidDensity(format!("density integrates to {mass}, not 1")));
    }
    let warning = if (fine - coarse).abs() > T::lit(QUADRATURE_REL_TOL) * fine.abs().max(T::lit(1e-12)) {
        Some(format!("quadrature refinements disagree: {fine} vs {coarse}"))
    } else {
        None
    };
    Ok(TimeChangeDrift { value: fine, coarse, warning })
}
