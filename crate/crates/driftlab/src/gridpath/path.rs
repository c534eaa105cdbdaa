use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::grid::TimeGrid;
use crate::error::{invalid, Result};
use crate::scalar::Field;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Brownian,
    Fbm,
    Bessel3,
    FutureInf,
    Noise,
    Qv,
    Drift,
    Custom,
}

impl PathKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PathKind::Brownian => "brownian",
            PathKind::Fbm => "fbm",
            PathKind::Bessel3 => "bessel3",
            PathKind::FutureInf => "future_inf",
            PathKind::Noise => "noise",
            PathKind::Qv => "qv",
            PathKind::Drift => "drift",
            PathKind::Custom => "custom",
        }
    }
}

/// Values of one trajectory on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePath<T> {
    grid: Arc<TimeGrid<T>>,
    values: Vec<T>,
    kind: PathKind,
}

pub(crate) fn check_kind<T: Field>(kind: PathKind, values: &[T]) -> Result<()> {
    match kind {
        PathKind::Qv => {
            if values[0] != T::zero() {
                return Err(invalid("a qv path must start at 0"));
            }
            if values.windows(2).any(|w| w[1] < w[0]) {
                return Err(invalid("a qv path must be non-decreasing"));
            }
        }
        PathKind::Bessel3 | PathKind::FutureInf if values.iter().any(|v| *v < T::zero()) => {
            return Err(invalid(format!("{} values must be non-negative", kind.as_str())));
        }
        _ => {}
    }
    Ok(())
}

impl<T: Field> SamplePath<T> {
    pub fn new(grid: Arc<TimeGrid<T>>, values: Vec<T>, kind: PathKind) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(format!("path has {} values for a grid of {} points", values.len(), grid.len())));
        }
        check_kind(kind, &values)?;
        Ok(Self { grid, values, kind })
    }

    pub fn from_fn(grid: Arc<TimeGrid<T>>, kind: PathKind, f: impl Fn(T) -> T) -> Result<Self> {
        let values = grid.times().iter().map(|&t| f(t)).collect();
        Self::new(grid, values, kind)
    }

    pub fn grid(&self) -> &Arc<TimeGrid<T>> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn kind(&self) -> PathKind {
        self.kind
    }

    pub fn value_at(&self, t: T) -> Option<T> {
        self.grid.index_of(t).map(|i| self.values[i])
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }
}

/// Realized bracket: cumulative sum of squared increments.
pub fn quadratic_variation<T: Field>(path: &SamplePath<T>) -> Result<SamplePath<T>> {
    let v = path.values();
    let mut out = Vec::with_capacity(v.len());
    realized_bracket(v, &mut out);
    SamplePath::new(path.grid.clone(), out, PathKind::Qv)
}

pub(crate) fn realized_bracket<T: Field>(v: &[T], out: &mut Vec<T>) {
    out.clear();
    let mut acc = T::zero();
    out.push(acc);
    for w in v.windows(2) {
        let d = w[1] - w[0];
        acc = acc + d * d;
        out.push(acc);
    }
}

/// Left-hold sampling of `path` on the observation grid `obs`.
pub fn step_discretize<T: Field>(path: &SamplePath<T>, obs: &TimeGrid<T>) -> Result<SamplePath<T>> {
    let grid = path.grid();
    let idx: Vec<usize> = obs
        .times()
        .iter()
        .map(|t| grid.index_of(*t).ok_or_else(|| invalid(format!("observation time {t:?} is not a path grid time"))))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(grid.len());
    let mut k = 0;
    for i in 0..grid.len() {
        while k + 1 < idx.len() && idx[k + 1] <= i {
            k += 1;
        }
        out.push(path.values[idx[k]]);
    }
    let kind = if path.kind == PathKind::Qv { PathKind::Custom } else { path.kind };
    SamplePath::new(grid.clone(), out, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use proptest::prelude::*;

    fn grid(n: usize) -> Arc<TimeGrid<f64>> {
        Arc::new(TimeGrid::uniform(1.0, n).unwrap())
    }

    #[test]
    fn constant_path_has_zero_bracket() {
        let p = SamplePath::from_fn(grid(8), PathKind::Custom, |_| 3.0).unwrap();
        assert!(quadratic_variation(&p).unwrap().values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_path_bracket_shrinks_with_mesh() {
        let a = Ratio::new(3i64, 2);
        let qs: Vec<_> = [4usize, 8, 16]
            .iter()
            .map(|&n| {
                let g = Arc::new(TimeGrid::uniform(Ratio::from_integer(1i64), n).unwrap());
                let p = SamplePath::from_fn(g, PathKind::Custom, |t| a * t).unwrap();
                *quadratic_variation(&p).unwrap().values().last().unwrap()
            })
            .collect();
        assert_eq!(qs[0], a * a / Ratio::from_integer(4));
        assert_eq!(qs[1] * Ratio::from_integer(2), qs[0]);
        assert_eq!(qs[2] * Ratio::from_integer(2), qs[1]);
    }

    #[test]
    fn single_observation_holds_initial_value() {
        let p = SamplePath::from_fn(grid(8), PathKind::Custom, |t| 1.0 + t).unwrap();
        let obs = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        let d = step_discretize(&p, &obs).unwrap();
        assert!(d.values()[..8].iter().all(|v| *v == 1.0));
        assert_eq!(d.values()[8], 2.0);
    }

    #[test]
    fn full_grid_is_identity_and_foreign_obs_rejected() {
        let g = grid(8);
        let p = SamplePath::from_fn(g.clone(), PathKind::Custom, |t| t * t).unwrap();
        assert_eq!(step_discretize(&p, &g).unwrap().values(), p.values());
        let obs = TimeGrid::new(vec![0.0, 0.3, 1.0]).unwrap();
        assert!(step_discretize(&p, &obs).is_err());
    }

    #[test]
    fn refining_obs_converges_at_continuity_points() {
        let g = grid(64);
        let p = SamplePath::from_fn(g.clone(), PathKind::Custom, |t| (3.0 * t).sin()).unwrap();
        let i = g.index_of(0.703125).unwrap();
        let errs: Vec<f64> = [2usize, 8, 32, 64]
            .iter()
            .map(|&n| {
                let obs = TimeGrid::uniform(1.0, n).unwrap();
                (step_discretize(&p, &obs).unwrap().values()[i] - p.values()[i]).abs()
            })
            .collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(errs[3], 0.0);
    }

    #[test]
    fn kind_invariants_are_enforced() {
        let g = grid(2);
        assert!(SamplePath::new(g.clone(), vec![0.0, 0.2, 0.1], PathKind::Qv).is_err());
        assert!(SamplePath::new(g.clone(), vec![0.1, 0.2, 0.3], PathKind::Qv).is_err());
        assert!(SamplePath::new(g.clone(), vec![0.0, -0.2, 0.1], PathKind::Bessel3).is_err());
        assert!(SamplePath::new(g, vec![0.0, 0.2], PathKind::Custom).is_err());
    }

    proptest! {
        #[test]
        fn step_discretize_is_idempotent(vals in prop::collection::vec(-5.0f64..5.0, 17), mask in prop::collection::vec(any::<bool>(), 15)) {
            let g = grid(16);
            let mut obs = vec![0.0];
            for (i, keep) in mask.iter().enumerate() {
                if *keep { obs.push(g.times()[i + 1]); }
            }
            obs.push(1.0);
            let obs = TimeGrid::new(obs).unwrap();
            let p = SamplePath::new(g, vals, PathKind::Custom).unwrap();
            let once = step_discretize(&p, &obs).unwrap();
            let twice = step_discretize(&once, &obs).unwrap();
            prop_assert_eq!(once.values(), twice.values());
        }

        #[test]
        fn bracket_is_non_decreasing(vals in prop::collection::vec(-5.0f64..5.0, 9)) {
            let p = SamplePath::new(grid(8), vals, PathKind::Custom).unwrap();
            let q = quadratic_variation(&p).unwrap();
            prop_assert_eq!(q.values()[0], 0.0);
            prop_assert!(q.values().windows(2).all(|w| w[1] >= w[0]));
        }
    }
}
