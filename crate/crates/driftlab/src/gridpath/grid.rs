use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Field;

/// Ordered time points `0 = t_0 < ... < t_n = T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid<T> {
    times: Vec<T>,
}

impl<T: Field> TimeGrid<T> {
    pub fn new(times: Vec<T>) -> Result<Self> {
        if times.len() < 2 {
            return Err(invalid("a time grid needs at least two points"));
        }
        if times[0] != T::zero() {
            return Err(invalid("a time grid must start at 0"));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[0] < w[1])) {
            return Err(invalid(format!("grid times not strictly increasing at index {}", i + 1)));
        }
        Ok(Self { times })
    }

    /// `n` equal steps on `[0, horizon]`.
    pub fn uniform(horizon: T, n: usize) -> Result<Self> {
        if !(horizon > T::zero()) {
            return Err(invalid("horizon must be positive"));
        }
        if n == 0 {
            return Err(invalid("a uniform grid needs at least one step"));
        }
        let nn = T::from_usize_exact(n);
        let mut times: Vec<T> = (0..=n).map(|i| horizon * (T::from_usize_exact(i) / nn)).collect();
        times[n] = horizon;
        Self::new(times)
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn horizon(&self) -> T {
        self.times[self.times.len() - 1]
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn dt(&self, i: usize) -> T {
        self.times[i + 1] - self.times[i]
    }

    pub fn mesh(&self) -> T {
        let mut m = T::zero();
        for w in self.times.windows(2) {
            let d = w[1] - w[0];
            if d > m {
                m = d;
            }
        }
        m
    }

    /// Exact position of `t` in the grid.
    pub fn index_of(&self, t: T) -> Option<usize> {
        self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap_or(std::cmp::Ordering::Less)).ok()
    }

    /// Position of the grid time within `tol` of `t`.
    pub fn index_near(&self, t: T, tol: T) -> Option<usize> {
        let i = self.times.partition_point(|x| *x < t);
        [i.checked_sub(1), Some(i)].into_iter().flatten().filter(|&j| j < self.times.len()).find(|&j| {
            let d = self.times[j] - t;
            d <= tol && t - self.times[j] <= tol
        })
    }

    /// Index of the last grid time `<= t`.
    pub fn floor_index(&self, t: T) -> usize {
        self.times.partition_point(|x| *x <= t).saturating_sub(1)
    }

    /// True when every time of `coarse` occurs in `self`.
    pub fn refines(&self, coarse: &TimeGrid<T>) -> bool {
        coarse.times.iter().all(|t| self.index_of(*t).is_some())
    }

    /// Union with extra points in `[0, T']`, extending the horizon if needed.
    pub fn with_points(&self, points: &[T]) -> Result<Self> {
        let mut times = self.times.clone();
        for &p in points {
            if p < T::zero() {
                return Err(invalid("grid points must be non-negative"));
            }
            if self.index_of(p).is_none() && !times.contains(&p) {
                times.push(p);
            }
        }
        times.sort_by(|a, b| a.partial_cmp(b).expect("comparable grid times"));
        Self::new(times)
    }

    /// Restriction to `[0, horizon]`; `horizon` must be a grid time.
    pub fn truncate(&self, horizon: T) -> Result<Self> {
        let i = self.index_of(horizon).ok_or_else(|| invalid("truncation horizon is not a grid time"))?;
        Self::new(self.times[..=i].to_vec())
    }

    /// True when `self` is an initial segment of `other`.
    pub fn is_prefix_of(&self, other: &TimeGrid<T>) -> bool {
        self.len() <= other.len() && other.times[..self.len()] == self.times[..]
    }
}

/// Dyadic chain of grids on `[0, horizon]` with `n0 * 2^k` steps at level `k`.
pub fn build_refining_grids<T: Field>(horizon: T, n0: usize, levels: usize) -> Result<Vec<TimeGrid<T>>> {
    if !(horizon > T::zero()) {
        return Err(invalid("horizon must be positive"));
    }
    if n0 == 0 {
        return Err(invalid("n0 must be at least 1"));
    }
    if levels == 0 {
        return Err(invalid("levels must be at least 1"));
    }
    (0..levels)
        .map(|k| {
            let n = n0
                .checked_mul(1usize << k.min(63))
                .filter(|_| k < 48)
                .ok_or_else(|| invalid("refinement level too deep"))?;
            TimeGrid::uniform(horizon, n)
        })
        .collect()
}

/// Piecewise-linear non-decreasing function given by knots, used for
/// deterministic time changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction<T> {
    knots: Vec<T>,
    values: Vec<T>,
}

impl<T: crate::scalar::Scalar> GridFunction<T> {
    pub fn new(knots: Vec<T>, values: Vec<T>) -> Result<Self> {
        if knots.len() < 2 || knots.len() != values.len() {
            return Err(invalid("grid function needs matching knots and values (at least two)"));
        }
        if knots[0] != T::zero() {
            return Err(invalid("grid function knots must start at 0"));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("grid function knots must be strictly increasing"));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("time change must be non-decreasing"));
        }
        if values[0] < T::zero() {
            return Err(invalid("time change must satisfy phi(0) >= 0"));
        }
        Ok(Self { knots, values })
    }

    /// Samples `f` on `grid`.
    pub fn sample(grid: &TimeGrid<T>, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(grid.times().to_vec(), grid.times().iter().map(|&t| f(t)).collect())
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn domain_end(&self) -> T {
        self.knots[self.knots.len() - 1]
    }

    /// Linear interpolation; `None` outside `[0, last knot]`.
    pub fn eval(&self, u: T) -> Option<T> {
        if u < T::zero() || u > self.domain_end() {
            return None;
        }
        let i = self.knots.partition_point(|k| *k <= u).clamp(1, self.knots.len() - 1);
        let (k0, k1) = (self.knots[i - 1], self.knots[i]);
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        Some(v0 + (v1 - v0) * (u - k0) / (k1 - k0))
    }

    /// `inf { v >= 0 : phi(v) = level }`, `+inf` when the level is never attained.
    pub fn pseudo_inverse(&self, level: T) -> T {
        let v = &self.values;
        if level < v[0] || level > v[v.len() - 1] {
            return T::infinity();
        }
        if level == v[0] {
            return T::zero();
        }
        let i = v.partition_point(|x| *x < level);
        let (k0, k1) = (self.knots[i - 1], self.knots[i]);
        let (v0, v1) = (v[i - 1], v[i]);
        k0 + (k1 - k0) * (level - v0) / (v1 - v0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    #[test]
    fn dyadic_example() {
        let g = build_refining_grids(1.0f64, 2, 2).unwrap();
        assert_eq!(g[0].times(), &[0.0, 0.5, 1.0]);
        assert_eq!(g[1].times(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(g[1].refines(&g[0]));
        assert!(!g[0].refines(&g[1]));
    }

    #[test]
    fn rational_grids_are_exact() {
        let g = build_refining_grids(Ratio::new(3i64, 1), 3, 4).unwrap();
        for w in g.windows(2) {
            assert!(w[1].refines(&w[0]));
            assert_eq!(w[1].mesh() * Ratio::from_integer(2), w[0].mesh());
        }
    }

    #[test]
    fn errors() {
        assert!(build_refining_grids(0.0f64, 2, 2).is_err());
        assert!(build_refining_grids(1.0f64, 2, 0).is_err());
        assert!(build_refining_grids(1.0f64, 0, 2).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.5, 0.5]).is_err());
        assert!(TimeGrid::new(vec![0.1, 0.5]).is_err());
    }

    #[test]
    fn lookups() {
        let g = TimeGrid::uniform(1.0f64, 10).unwrap();
        assert_eq!(g.index_of(0.5), Some(5));
        assert_eq!(g.index_near(0.3 + 1e-13, 1e-9), Some(3));
        assert_eq!(g.floor_index(0.35), 3);
        assert_eq!(g.floor_index(1.0), 10);
        let h = g.with_points(&[0.55, 1.2]).unwrap();
        assert_eq!(h.len(), 13);
        assert_eq!(h.truncate(0.55).unwrap().horizon(), 0.55);
    }

    #[test]
    fn grid_function_inverse() {
        let g = TimeGrid::uniform(2.0f64, 8).unwrap();
        let phi = GridFunction::sample(&g, |u| 2.0 * u).unwrap();
        assert!((phi.pseudo_inverse(1.5) - 0.75).abs() < 1e-15);
        assert!(phi.pseudo_inverse(5.0).is_infinite());
        let flat = GridFunction::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 1.0]).unwrap();
        assert_eq!(flat.pseudo_inverse(1.0), 1.0);
        assert_eq!(flat.eval(1.5), Some(1.0));
    }
}
