use std::sync::Arc;

use rayon::prelude::*;

use super::spec::{ExpansionSpec, NoiseModel, SignalProcess};
use crate::error::{invalid, Result};
use crate::gridpath::{channel, Model, PathEnsemble, TimeGrid};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
enum FeatureData<T> {
    /// Fixed per-path values, feature `j` visible from grid index `reveal[j]`
    /// on (non-decreasing in `j`).
    Revealed { reveal: Vec<usize>, values: Vec<T> },
    /// Values recomputed at every grid time, laid out `[time][path][dim]`.
    Dynamic { dim: usize, values: Vec<T> },
}

/// Per-time, per-path conditioning variables generated by an expansion.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStream<T> {
    grid: Arc<TimeGrid<T>>,
    n_paths: usize,
    labels: Vec<String>,
    data: FeatureData<T>,
    spec: Option<ExpansionSpec<T>>,
}

impl<T: Scalar> FeatureStream<T> {
    pub fn revealed(
        grid: Arc<TimeGrid<T>>,
        n_paths: usize,
        labels: Vec<String>,
        reveal: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self> {
        if reveal.len() != labels.len() || values.len() != n_paths * labels.len() {
            return Err(invalid("revealed features have inconsistent shapes"));
        }
        if reveal.windows(2).any(|w| w[1] < w[0]) || reveal.iter().any(|&r| r >= grid.len()) {
            return Err(invalid("reveal indices must be non-decreasing grid indices"));
        }
        Ok(Self { grid, n_paths, labels, data: FeatureData::Revealed { reveal, values }, spec: None })
    }

    /// Features computed by `f(time index, path, out)` at every grid time.
    pub fn dynamic(
        grid: Arc<TimeGrid<T>>,
        n_paths: usize,
        labels: Vec<String>,
        f: impl Fn(usize, usize, &mut [T]) + Sync,
    ) -> Self {
        let dim = labels.len();
        let mut values = vec![T::zero(); grid.len() * n_paths * dim];
        if dim > 0 {
            values.par_chunks_mut(n_paths * dim).enumerate().for_each(|(i, block)| {
                for (p, out) in block.chunks_mut(dim).enumerate() {
                    f(i, p, out);
                }
            });
        }
        Self { grid, n_paths, labels, data: FeatureData::Dynamic { dim, values }, spec: None }
    }

    pub fn with_spec(mut self, spec: ExpansionSpec<T>) -> Self {
        self.spec = Some(spec);
        self
    }

    pub fn grid(&self) -> &Arc<TimeGrid<T>> {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn spec(&self) -> Option<&ExpansionSpec<T>> {
        self.spec.as_ref()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Number of features visible at grid index `i`.
    pub fn dim_at(&self, i: usize) -> usize {
        match &self.data {
            FeatureData::Revealed { reveal, .. } => reveal.partition_point(|&r| r <= i),
            FeatureData::Dynamic { dim, .. } => *dim,
        }
    }

    pub fn labels_at(&self, i: usize) -> &[String] {
        &self.labels[..self.dim_at(i)]
    }

    /// Feature vector of path `p` at grid index `i`.
    pub fn features(&self, i: usize, p: usize) -> &[T] {
        match &self.data {
            FeatureData::Revealed { values, .. } => {
                let d = self.labels.len();
                &values[p * d..p * d + self.dim_at(i)]
            }
            FeatureData::Dynamic { dim, values } => {
                let o = (i * self.n_paths + p) * dim;
                &values[o..o + dim]
            }
        }
    }

    /// Grid index from which feature `j` is visible (revealed streams only).
    pub fn reveal_index(&self, j: usize) -> Option<usize> {
        match &self.data {
            FeatureData::Revealed { reveal, .. } => reveal.get(j).copied(),
            FeatureData::Dynamic { .. } => None,
        }
    }

    /// Restriction to the first `len` grid points.
    pub fn truncated(&self, grid: Arc<TimeGrid<T>>) -> Result<Self> {
        if !grid.is_prefix_of(&self.grid) {
            return Err(invalid("truncation grid is not a prefix of the feature grid"));
        }
        let len = grid.len();
        let data = match &self.data {
            FeatureData::Revealed { reveal, values } => {
                let keep = reveal.partition_point(|&r| r < len);
                let d = self.labels.len();
                let vals = if d == 0 {
                    Vec::new()
                } else {
                    values.chunks(d).flat_map(|row| row[..keep].iter().copied()).collect()
                };
                return Ok(Self {
                    grid,
                    n_paths: self.n_paths,
                    labels: self.labels[..keep].to_vec(),
                    data: FeatureData::Revealed { reveal: reveal[..keep].to_vec(), values: vals },
                    spec: self.spec.clone(),
                });
            }
            FeatureData::Dynamic { dim, values } => {
                FeatureData::Dynamic { dim: *dim, values: values[..len * self.n_paths * dim].to_vec() }
            }
        };
        Ok(Self { grid, n_paths: self.n_paths, labels: self.labels.clone(), data, spec: self.spec.clone() })
    }
}

fn close<T: Scalar>(a: f64, b: T) -> bool {
    (a - b.to_f64_lossy()).abs() <= 1e-12 * a.abs().max(1.0)
}

fn require_model<T: Scalar>(ens: &PathEnsemble<T>, what: &str, ok: impl Fn(&Model) -> bool) -> Result<()> {
    if ens.law().has(ok) {
        Ok(())
    } else {
        Err(invalid(format!("ensemble law has no component matching {what}")))
    }
}

/// Features of `spec` evaluated on the paths of `ens`.
pub fn feature_stream<T: Scalar>(spec: &ExpansionSpec<T>, ens: &PathEnsemble<T>) -> Result<FeatureStream<T>> {
    spec.validate()?;
    let grid = ens.grid().clone();
    let n_paths = ens.n_paths();
    let tol = T::lit(1e-9) * T::one().max(grid.horizon());
    let locate = |t: T, what: &str| {
        grid.index_near(t, tol).ok_or_else(|| invalid(format!("{what} time {t} is not on the simulation grid")))
    };
    let stream = match spec {
        ExpansionSpec::InitialSignal { signal, noise_var } => {
            let w = ens.channel(channel::W)?;
            let idx: Vec<(usize, T)> =
                signal.terms.iter().map(|&(r, c)| Ok((locate(r, "signal")?, c))).collect::<Result<_>>()?;
            let noise = if *noise_var > T::zero() {
                let sd = noise_var.sqrt();
                require_model(
                    ens,
                    "white noise with the signal noise variance",
                    |m| matches!(m, Model::White { sigma } if close(*sigma, sd)),
                )?;
                Some(ens.channel(channel::NOISE)?)
            } else {
                None
            };
            let values = (0..n_paths)
                .map(|p| {
                    let l: T = idx.iter().map(|&(i, c)| c * w.at(p, i)).sum();
                    l + noise.map_or(T::zero(), |n| n.at(p, 0))
                })
                .collect();
            FeatureStream::revealed(grid.clone(), n_paths, vec!["L".into()], vec![0], values)?
        }
        ExpansionSpec::DiscretizedProcess { signal, noise, obs } => {
            let w = ens.channel(channel::W)?;
            let reveal: Vec<usize> = obs.times().iter().map(|&t| locate(t, "observation")).collect::<Result<_>>()?;
            let (w_idx, fbm_idx, eps) = match *signal {
                SignalProcess::Anticipation { delta } => {
                    let wi =
                        obs.times().iter().map(|&t| locate(t + delta, "anticipated")).collect::<Result<Vec<_>>>()?;
                    (wi, None, T::zero())
                }
                SignalProcess::FbmBridge { eps, hurst } => {
                    require_model(
                        ens,
                        "fbm with the signal Hurst index",
                        |m| matches!(m, Model::Fbm { hurst: h } if close(*h, hurst)),
                    )?;
                    let one = locate(T::one(), "bridge end")?;
                    let fi = obs.times().iter().map(|&t| locate(T::one() - t, "bridge")).collect::<Result<Vec<_>>>()?;
                    (vec![one; obs.len()], Some(fi), eps)
                }
            };
            let fbm = if fbm_idx.is_some() { Some(ens.channel(channel::FBM)?) } else { None };
            let noise_ch = match *noise {
                NoiseModel::None => None,
                NoiseModel::White { sigma } => {
                    require_model(
                        ens,
                        "the white noise model",
                        |m| matches!(m, Model::White { sigma: s } if close(*s, sigma)),
                    )?;
                    Some(ens.channel(channel::NOISE)?)
                }
                NoiseModel::Ou { theta, sigma } => {
                    require_model(
                        ens,
                        "the ou noise model",
                        |m| matches!(m, Model::Ou { theta: a, sigma: b } if close(*a, theta) && close(*b, sigma)),
                    )?;
                    Some(ens.channel(channel::NOISE)?)
                }
            };
            let k = obs.len();
            let mut values = vec![T::zero(); n_paths * k];
            values.par_chunks_mut(k).enumerate().for_each(|(p, row)| {
                let mut prev = T::zero();
                for j in 0..k {
                    let mut x = w.at(p, w_idx[j]);
                    if let (Some(f), Some(fi)) = (fbm, &fbm_idx) {
                        x = x + eps * f.at(p, fi[j]);
                    }
                    if let Some(n) = noise_ch {
                        x = x + n.at(p, reveal[j]);
                    }
                    row[j] = if j == 0 { x } else { x - prev };
                    prev = x;
                }
            });
            let labels = (0..k).map(|j| if j == 0 { "X[0]".to_string() } else { format!("dX[{j}]") }).collect();
            FeatureStream::revealed(grid.clone(), n_paths, labels, reveal, values)?
        }
        ExpansionSpec::Bessel3Ladder { eps } => {
            let z = ens.channel(channel::BESSEL)?;
            let x = ens.channel(channel::FUTURE_INF)?;
            let eps = *eps;
            FeatureStream::dynamic(grid.clone(), n_paths, vec!["ladder".into(), "z".into()], |i, p, out| {
                out[0] = (x.at(p, i) / eps).floor() * eps;
                out[1] = z.at(p, i);
            })
        }
        ExpansionSpec::TimeChange { phi } => {
            let w = ens.channel(channel::W)?;
            let times = grid.times();
            // revealed horizon at each grid time inside the time-change domain
            let horizon: Vec<T> = times.iter().map_while(|&t| phi.eval(t).map(|f| t.max(f))).collect();
            let mut reveal = Vec::new();
            let mut cols = Vec::new();
            let mut labels = Vec::new();
            for (k, &r) in times.iter().enumerate().skip(1) {
                if let Some(i) = horizon.iter().position(|h| *h >= r - tol) {
                    reveal.push(i);
                    cols.push(k);
                    labels.push(format!("W({r})"));
                }
            }
            let values = (0..n_paths).flat_map(|p| cols.iter().map(move |&k| w.at(p, k))).collect();
            FeatureStream::revealed(grid.clone(), n_paths, labels, reveal, values)?
        }
    };
    Ok(stream.with_spec(spec.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridpath::{simulate, Channel, GridFunction, Law};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    fn disc_spec(obs: Vec<f64>) -> ExpansionSpec<f64> {
        ExpansionSpec::DiscretizedProcess {
            signal: SignalProcess::Anticipation { delta: 0.25 },
            noise: NoiseModel::White { sigma: 0.5 },
            obs: TimeGrid::new(obs).unwrap(),
        }
    }

    fn ens(n: usize) -> PathEnsemble<f64> {
        let law = Law::new(vec![Model::Brownian, Model::White { sigma: 0.5 }]);
        simulate(&law, &TimeGrid::uniform(1.25, 20).unwrap(), n, 11).unwrap()
    }

    #[test]
    fn initial_signal_is_constant() {
        let e = ens(5);
        let f = feature_stream(&ExpansionSpec::initial_point(1.0, 0.0), &e).unwrap();
        let w = e.channel(channel::W).unwrap();
        for i in 0..e.grid().len() {
            assert_eq!(f.features(i, 3), &[w.at(3, 16)]);
        }
    }

    #[test]
    fn discretized_features_are_increments() {
        let e = ens(4);
        let f = feature_stream(&disc_spec(vec![0.0, 0.5, 1.0]), &e).unwrap();
        let g = e.grid();
        let (i25, i75) = (g.index_of(0.25).unwrap(), g.index_of(0.75).unwrap());
        assert_eq!(f.dim_at(i25), 1);
        assert_eq!(f.dim_at(i75), 2);
        let (w, n) = (e.channel(channel::W).unwrap(), e.channel(channel::NOISE).unwrap());
        let x0 = w.at(2, 4) + n.at(2, 0);
        let x5 = w.at(2, 12) + n.at(2, 8);
        assert_eq!(f.features(i75, 2)[0], x0);
        assert!((f.features(i75, 2)[1] - (x5 - x0)).abs() < 1e-15);
    }

    #[test]
    fn ladder_quantization() {
        let e = simulate(&Model::Bessel3.into(), &TimeGrid::uniform(1.0, 8).unwrap(), 3, 1).unwrap();
        let f = feature_stream(&ExpansionSpec::Bessel3Ladder { eps: 0.25 }, &e).unwrap();
        let x = e.channel(channel::FUTURE_INF).unwrap();
        let q = f.features(4, 1)[0];
        assert!(q <= x.at(1, 4) && x.at(1, 4) < q + 0.25);
        assert_eq!((1.2f64 / 1.0).floor() * 1.0, 1.0);
    }

    #[test]
    fn missing_channels_rejected() {
        let e = simulate(&Model::Brownian.into(), &TimeGrid::uniform(1.25, 20).unwrap(), 3, 1).unwrap();
        assert!(feature_stream(&ExpansionSpec::Bessel3Ladder { eps: 0.5 }, &e).is_err());
        assert!(feature_stream(&disc_spec(vec![0.0, 0.5]), &e).is_err());
    }

    #[test]
    fn time_change_reveals_up_to_phi() {
        let e = simulate(&Model::Brownian.into(), &TimeGrid::uniform(2.0, 16).unwrap(), 2, 1).unwrap();
        let phi = GridFunction::sample(&TimeGrid::uniform(1.0, 4).unwrap(), |u| 2.0 * u).unwrap();
        let f = feature_stream(&ExpansionSpec::TimeChange { phi }, &e).unwrap();
        // at s = 0.5 the path is known on [0, 1]: 8 grid points after 0
        assert_eq!(f.dim_at(e.grid().index_of(0.5).unwrap()), 8);
        assert_eq!(f.dim_at(e.grid().index_of(1.0).unwrap()), 16);
    }

    /// Scrambling path data that is not revealed by time s leaves the time-s
    /// features unchanged.
    #[test]
    fn adaptedness_under_permutation() {
        let n = 100;
        let e = ens(n);
        let spec = disc_spec(vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let f = feature_stream(&spec, &e).unwrap();
        let g = e.grid().clone();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for s_idx in [0usize, 4, 7, 12, 19] {
            let s = g.times()[s_idx];
            let revealed_w: Vec<usize> =
                spec_obs(&spec).iter().filter(|t| **t <= s).map(|t| g.index_near(t + 0.25, 1e-9).unwrap()).collect();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let scramble = |name: &str, keep: &dyn Fn(usize) -> bool| {
                let ch = e.channel(name).unwrap();
                let mut data = Vec::with_capacity(n * g.len());
                for (p, &q) in perm.iter().enumerate() {
                    for i in 0..g.len() {
                        data.push(if keep(i) { ch.at(p, i) } else { ch.at(q, i) });
                    }
                }
                Channel::per_path(ch.kind(), g.len(), data).unwrap()
            };
            let w2 = scramble(channel::W, &|i| i <= s_idx || revealed_w.contains(&i));
            let n2 = scramble(channel::NOISE, &|i| i <= s_idx);
            let e2 = e.clone().with_channel(channel::W, w2).unwrap().with_channel(channel::NOISE, n2).unwrap();
            let f2 = feature_stream(&spec, &e2).unwrap();
            for p in 0..n {
                assert_eq!(f.features(s_idx, p), f2.features(s_idx, p));
            }
        }
    }

    fn spec_obs(spec: &ExpansionSpec<f64>) -> Vec<f64> {
        match spec {
            ExpansionSpec::DiscretizedProcess { obs, .. } => obs.times().to_vec(),
            _ => vec![],
        }
    }
}
