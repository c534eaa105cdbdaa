use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::TimeGrid;
use super::path::{check_kind, PathKind, SamplePath};
use crate::error::{degenerate, invalid, Result};
use crate::linalg::{cholesky, lower_mul};
use crate::rng::{normal, path_stream, uniform_open0};
use crate::scalar::Scalar;

pub mod channel {
    pub const W: &str = "w";
    pub const QV: &str = "qv";
    pub const FBM: &str = "fbm";
    pub const BESSEL: &str = "z";
    pub const FUTURE_INF: &str = "future_inf";
    pub const NOISE: &str = "noise";
    pub const M_TILDE: &str = "m_tilde";
}

/// Largest grid for which the dense fBm covariance is factorized.
pub const MAX_FBM_GRID: usize = 4096;

/// One independent component of a generating law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    Brownian,
    Fbm { hurst: f64 },
    Bessel3,
    Ou { theta: f64, sigma: f64 },
    White { sigma: f64 },
}

impl Model {
    fn validate(&self) -> Result<()> {
        match *self {
            Model::Fbm { hurst } if !(hurst > 0.0 && hurst < 1.0) => {
                Err(invalid(format!("Hurst index {hurst} outside (0,1)")))
            }
            Model::Ou { theta, sigma } if !(theta > 0.0 && sigma > 0.0) => {
                Err(invalid("ou noise needs theta > 0 and sigma > 0"))
            }
            Model::White { sigma } if !(sigma >= 0.0) => Err(invalid("white noise needs sigma >= 0")),
            _ => Ok(()),
        }
    }

    fn channels(&self) -> &'static [&'static str] {
        match self {
            Model::Brownian => &[channel::W],
            Model::Fbm { .. } => &[channel::FBM],
            Model::Bessel3 => &[channel::BESSEL, channel::FUTURE_INF],
            Model::Ou { .. } | Model::White { .. } => &[channel::NOISE],
        }
    }
}

/// Product law of independent components; channel names must not collide.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Law {
    pub components: Vec<Model>,
}

impl Law {
    pub fn new(components: Vec<Model>) -> Self {
        Self { components }
    }

    pub fn has(&self, pred: impl Fn(&Model) -> bool) -> bool {
        self.components.iter().any(pred)
    }
}

impl From<Model> for Law {
    fn from(m: Model) -> Self {
        Law::new(vec![m])
    }
}

/// Per-path values of one named quantity. A shared channel stores a single
/// row used by every path (deterministic brackets).
#[derive(Clone, Debug, PartialEq)]
pub struct Channel<T> {
    kind: PathKind,
    len: usize,
    shared: bool,
    data: Vec<T>,
}

impl<T: Scalar> Channel<T> {
    pub fn per_path(kind: PathKind, len: usize, data: Vec<T>) -> Result<Self> {
        if len == 0 || data.len() % len != 0 {
            return Err(invalid("channel data is not a whole number of rows"));
        }
        for row in data.chunks(len) {
            check_kind(kind, row)?;
        }
        Ok(Self { kind, len, shared: false, data })
    }

    pub fn shared(kind: PathKind, row: Vec<T>) -> Result<Self> {
        check_kind(kind, &row)?;
        Ok(Self { kind, len: row.len(), shared: true, data: row })
    }

    pub fn kind(&self) -> PathKind {
        self.kind
    }

    pub fn is_shared(&self) -> bool {
        self.shared
    }

    pub fn row_len(&self) -> usize {
        self.len
    }

    pub fn stored_rows(&self) -> usize {
        self.data.len() / self.len
    }

    #[inline]
    pub fn row(&self, p: usize) -> &[T] {
        if self.shared {
            &self.data
        } else {
            &self.data[p * self.len..(p + 1) * self.len]
        }
    }

    #[inline]
    pub fn at(&self, p: usize, i: usize) -> T {
        self.row(p)[i]
    }

    /// First `len` grid points of every row.
    pub fn truncated(&self, len: usize) -> Self {
        let data = if self.shared {
            self.data[..len].to_vec()
        } else {
            self.data.chunks(self.len).flat_map(|r| r[..len].iter().copied()).collect()
        };
        Self { kind: self.kind, len, shared: self.shared, data }
    }

    pub fn first_paths(&self, n: usize) -> Self {
        if self.shared {
            return self.clone();
        }
        Self { data: self.data[..n * self.len].to_vec(), ..self.clone() }
    }
}

/// Seeded collection of simulated channels on a common grid.
#[derive(Clone, Debug)]
pub struct PathEnsemble<T> {
    grid: Arc<TimeGrid<T>>,
    n_paths: usize,
    channels: BTreeMap<String, Channel<T>>,
    seed: u64,
    law: Law,
}

impl<T: Scalar> PathEnsemble<T> {
    pub fn grid(&self) -> &Arc<TimeGrid<T>> {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn law(&self) -> &Law {
        &self.law
    }

    pub fn channel_names(&self) -> impl Iterator<Item = &str> {
        self.channels.keys().map(String::as_str)
    }

    pub fn channel(&self, name: &str) -> Result<&Channel<T>> {
        self.channels.get(name).ok_or_else(|| invalid(format!("ensemble has no channel `{name}`")))
    }

    pub fn path(&self, name: &str, p: usize) -> Result<SamplePath<T>> {
        if p >= self.n_paths {
            return Err(invalid(format!("path index {p} out of range")));
        }
        let ch = self.channel(name)?;
        SamplePath::new(self.grid.clone(), ch.row(p).to_vec(), ch.kind)
    }

    /// Adds or replaces a channel after checking its shape.
    pub fn with_channel(mut self, name: &str, ch: Channel<T>) -> Result<Self> {
        if ch.len != self.grid.len() {
            return Err(invalid(format!("channel `{name}` does not match the ensemble grid")));
        }
        if !ch.shared && ch.stored_rows() != self.n_paths {
            return Err(invalid(format!("channel `{name}` does not match the path count")));
        }
        if ch.kind == PathKind::FutureInf {
            let z = self.channel(channel::BESSEL)?;
            for p in 0..self.n_paths {
                if ch.row(p).iter().zip(z.row(p)).any(|(x, z)| x > z) {
                    return Err(invalid("future infimum exceeds its Bessel-3 companion"));
                }
            }
        }
        self.channels.insert(name.to_string(), ch);
        Ok(self)
    }

    /// Restriction of every channel to `[0, horizon]`.
    pub fn truncated(&self, horizon: T) -> Result<Self> {
        let grid = Arc::new(self.grid.truncate(horizon)?);
        let len = grid.len();
        let channels = self.channels.iter().map(|(k, c)| (k.clone(), c.truncated(len))).collect();
        Ok(Self { grid, channels, law: self.law.clone(), ..*self })
    }

    pub fn first_paths(&self, n: usize) -> Self {
        let n = n.min(self.n_paths);
        let channels = self.channels.iter().map(|(k, c)| (k.clone(), c.first_paths(n))).collect();
        Self { grid: self.grid.clone(), n_paths: n, channels, seed: self.seed, law: self.law.clone() }
    }

    /// CSV dump `time,path_id,channel,value`, rows ordered by time, path, channel.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "time,path_id,channel,value")?;
        for (i, t) in self.grid.times().iter().enumerate() {
            for p in 0..self.n_paths {
                for (name, ch) in &self.channels {
                    writeln!(w, "{t},{p},{name},{}", ch.at(p, i))?;
                }
            }
        }
        Ok(())
    }

    pub(crate) fn from_parts(grid: Arc<TimeGrid<T>>, n_paths: usize, seed: u64, law: Law) -> Self {
        Self { grid, n_paths, channels: BTreeMap::new(), seed, law }
    }
}

/// Simulates every component of `law` on `grid` with one RNG stream per
/// (seed, component, path).
pub fn simulate<T: Scalar>(law: &Law, grid: &TimeGrid<T>, n_paths: usize, seed: u64) -> Result<PathEnsemble<T>> {
    if n_paths == 0 {
        return Err(invalid("n_paths must be positive"));
    }
    if law.components.is_empty() {
        return Err(invalid("law has no components"));
    }
    let mut names: Vec<&str> = Vec::new();
    for m in &law.components {
        m.validate()?;
        for c in m.channels() {
            if names.contains(c) {
                return Err(invalid(format!("two law components produce channel `{c}`")));
            }
            names.push(c);
        }
    }
    let grid = Arc::new(grid.clone());
    let mut ens = PathEnsemble::from_parts(grid.clone(), n_paths, seed, law.clone());
    let n = grid.len();
    for (k, m) in law.components.iter().enumerate() {
        let k = k as u64;
        match *m {
            Model::Brownian => {
                let data = per_path(n_paths, n, |p, out| brownian_row(&grid, seed, k, p, out));
                ens = ens.with_channel(channel::W, Channel::per_path(PathKind::Brownian, n, data)?)?;
            }
            Model::Fbm { hurst } => {
                let gen = FbmGenerator::new(&grid, T::lit(hurst))?;
                let data = per_path(n_paths, n, |p, out| gen.row(seed, k, p, out));
                ens = ens.with_channel(channel::FBM, Channel::per_path(PathKind::Fbm, n, data)?)?;
            }
            Model::Bessel3 => {
                let rows: Vec<(Vec<T>, Vec<T>)> =
                    (0..n_paths).into_par_iter().map(|p| bessel3_rows(&grid, seed, k, p)).collect();
                let (mut z, mut x) = (Vec::with_capacity(n * n_paths), Vec::with_capacity(n * n_paths));
                for (zr, xr) in rows {
                    z.extend(zr);
                    x.extend(xr);
                }
                ens = ens.with_channel(channel::BESSEL, Channel::per_path(PathKind::Bessel3, n, z)?)?;
                ens = ens.with_channel(channel::FUTURE_INF, Channel::per_path(PathKind::FutureInf, n, x)?)?;
            }
            Model::Ou { theta, sigma } => {
                let (theta, sigma) = (T::lit(theta), T::lit(sigma));
                let data = per_path(n_paths, n, |p, out| ou_row(&grid, theta, sigma, seed, k, p, out));
                ens = ens.with_channel(channel::NOISE, Channel::per_path(PathKind::Noise, n, data)?)?;
            }
            Model::White { sigma } => {
                let sigma = T::lit(sigma);
                let data = per_path(n_paths, n, |p, out| {
                    let mut rng = path_stream(seed, k, p as u64);
                    for o in out.iter_mut() {
                        *o = sigma * T::lit(normal(&mut rng));
                    }
                });
                ens = ens.with_channel(channel::NOISE, Channel::per_path(PathKind::Noise, n, data)?)?;
            }
        }
    }
    if law.has(|m| matches!(m, Model::Brownian | Model::Bessel3)) {
        ens = ens.with_channel(channel::QV, Channel::shared(PathKind::Qv, grid.times().to_vec())?)?;
    }
    Ok(ens)
}

fn per_path<T: Scalar>(n_paths: usize, n: usize, f: impl Fn(usize, &mut [T]) + Sync) -> Vec<T> {
    let mut data = vec![T::zero(); n_paths * n];
    data.par_chunks_mut(n).enumerate().for_each(|(p, out)| f(p, out));
    data
}

fn brownian_row<T: Scalar>(grid: &TimeGrid<T>, seed: u64, k: u64, p: usize, out: &mut [T]) {
    let mut rng = path_stream(seed, k, p as u64);
    out[0] = T::zero();
    for i in 1..out.len() {
        out[i] = out[i - 1] + grid.dt(i - 1).sqrt() * T::lit(normal(&mut rng));
    }
}

fn ou_row<T: Scalar>(grid: &TimeGrid<T>, theta: T, sigma: T, seed: u64, k: u64, p: usize, out: &mut [T]) {
    let mut rng = path_stream(seed, k, p as u64);
    let stat_var = sigma * sigma / (theta + theta);
    out[0] = stat_var.sqrt() * T::lit(normal(&mut rng));
    for i in 1..out.len() {
        let a = (-theta * grid.dt(i - 1)).exp();
        out[i] = a * out[i - 1] + (stat_var * (T::one() - a * a)).sqrt() * T::lit(normal(&mut rng));
    }
}

/// Components of a Bessel-3 path: the norm `Z` and its future infimum.
fn bessel3_rows<T: Scalar>(grid: &TimeGrid<T>, seed: u64, k: u64, p: usize) -> (Vec<T>, Vec<T>) {
    let n = grid.len();
    let mut rng = path_stream(seed, k, p as u64);
    let mut b = [T::zero(); 3];
    let mut z = Vec::with_capacity(n);
    z.push(T::zero());
    for i in 1..n {
        let sd = grid.dt(i - 1).sqrt();
        for c in b.iter_mut() {
            *c = *c + sd * T::lit(normal(&mut rng));
        }
        z.push((b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt());
    }
    // Future infimum at the horizon is U * Z_T; earlier values take the
    // minimum with the minimum of the Bessel-3 bridge over each later
    // interval, drawn by inverting
    // P(min > m) = (1 - exp(-2(a-m)(c-m)/dt)) / (1 - exp(-2ac/dt)).
    let mut x = vec![T::zero(); n];
    x[n - 1] = T::lit(uniform_open0(&mut rng)) * z[n - 1];
    let two = T::lit(2.0);
    for i in (0..n - 1).rev() {
        let (a, c) = (z[i], z[i + 1]);
        let dt = grid.dt(i);
        let v = T::lit(uniform_open0(&mut rng));
        let survive = -(-two * a * c / dt).exp_m1();
        let l = -(-v * survive).ln_1p();
        let disc = (c - a) * (c - a) + two * dt * l;
        let m = ((a + c - disc.sqrt()) / two).max(T::zero()).min(a.min(c));
        x[i] = x[i + 1].min(m);
    }
    (z, x)
}

struct FbmGenerator<T> {
    n: usize,
    l: Vec<T>,
}

impl<T: Scalar> FbmGenerator<T> {
    fn new(grid: &TimeGrid<T>, hurst: T) -> Result<Self> {
        if !(hurst > T::zero() && hurst < T::one()) {
            return Err(invalid("Hurst index outside (0,1)"));
        }
        if grid.len() > MAX_FBM_GRID {
            return Err(invalid(format!("fbm grid larger than {MAX_FBM_GRID} points")));
        }
        let t = &grid.times()[1..];
        let n = t.len();
        let mut cov = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let c = fbm_cov(t[i], t[j], hurst);
                cov[i * n + j] = c;
                cov[j * n + i] = c;
            }
        }
        let l = cholesky(&cov, n, T::zero()).ok_or_else(|| degenerate("fbm covariance factorization failed"))?;
        Ok(Self { n, l })
    }

    fn row(&self, seed: u64, k: u64, p: usize, out: &mut [T]) {
        let mut rng = path_stream(seed, k, p as u64);
        let z: Vec<T> = (0..self.n).map(|_| T::lit(normal(&mut rng))).collect();
        out[0] = T::zero();
        lower_mul(&self.l, self.n, &z, &mut out[1..]);
    }
}

/// Covariance of fractional Brownian motion.
pub fn fbm_cov<T: Scalar>(s: T, t: T, hurst: T) -> T {
    let h2 = hurst + hurst;
    T::half() * (s.abs().powf(h2) + t.abs().powf(h2) - (t - s).abs().powf(h2))
}
