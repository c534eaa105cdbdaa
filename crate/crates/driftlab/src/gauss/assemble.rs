use crate::error::{invalid, Error, Result};
use crate::expand::{ExpansionSpec, LinearFunctional};
use crate::scalar::Scalar;

use super::system::{GaussianSystem, Var};

/// Joint law of the variables observed at time `s` under a Gaussian spec:
/// Brownian anchors (current value and past values the signals load on)
/// followed by the revealed signal features.
pub(crate) struct ObservedLaw<T> {
    pub anchors: Vec<T>,
    pub signals: Vec<(usize, LinearFunctional<T>)>,
    pub cov: Vec<T>,
}

impl<T: Scalar> ObservedLaw<T> {
    pub fn build(spec: &ExpansionSpec<T>, s: T) -> Result<Self> {
        if !spec.is_gaussian() {
            return Err(Error::UnsupportedSpec(
                "only initial-signal and discretized-process specs are jointly Gaussian".into(),
            ));
        }
        spec.validate()?;
        if !(s >= T::zero()) {
            return Err(invalid("conditioning time must be non-negative"));
        }
        let k = spec.revealed_count(s);
        let levels: Vec<LinearFunctional<T>> = (0..k).map(|j| spec.level_functional(j)).collect();
        let diff = spec.differenced();
        let mut feats: Vec<(usize, LinearFunctional<T>, Vec<T>)> = Vec::with_capacity(k);
        for j in 0..k {
            let f = if diff && j > 0 {
                let mut terms = levels[j].terms.clone();
                terms.extend(levels[j - 1].terms.iter().map(|&(r, c)| (r, -c)));
                LinearFunctional { terms }
            } else {
                levels[j].clone()
            };
            feats.push((j, f, Vec::new()));
        }
        // noise covariance of features (levels or increments)
        let nc = |a: usize, b: usize| -> T {
            let base = |i: usize, j: usize| spec.level_noise_cov(i, j);
            if !diff {
                return base(a, b);
            }
            let mut v = base(a, b);
            if a > 0 {
                v = v - base(a - 1, b);
            }
            if b > 0 {
                v = v - base(a, b - 1);
            }
            if a > 0 && b > 0 {
                v = v + base(a - 1, b - 1);
            }
            v
        };
        for a in 0..k {
            feats[a].2 = (0..k).map(|b| feats[a].1.cov(&feats[b].1) + nc(a, b)).collect();
        }
        let keep: Vec<usize> = (0..k).filter(|&a| feats[a].2[a] > T::zero()).collect();

        let tol = T::lit(1e-12) * T::one().max(s);
        let mut anchors: Vec<T> = Vec::new();
        let mut push = |r: T| {
            if r > T::zero() && !anchors.iter().any(|a| (*a - r).abs() <= tol) {
                anchors.push(r);
            }
        };
        for &a in &keep {
            for r in feats[a].1.times() {
                if r < s - tol {
                    push(r);
                }
            }
        }
        push(s);
        anchors.sort_by(|a, b| a.partial_cmp(b).expect("finite anchor times"));

        let na = anchors.len();
        let n = na + keep.len();
        let mut cov = vec![T::zero(); n * n];
        for i in 0..na {
            for j in 0..na {
                cov[i * n + j] = anchors[i].min(anchors[j]);
            }
            for (b, &fb) in keep.iter().enumerate() {
                let c = feats[fb].1.cov_w(anchors[i]);
                cov[i * n + na + b] = c;
                cov[(na + b) * n + i] = c;
            }
        }
        for (a, &fa) in keep.iter().enumerate() {
            for (b, &fb) in keep.iter().enumerate() {
                cov[(na + a) * n + na + b] = feats[fa].2[fb];
            }
        }
        let signals = keep.into_iter().map(|a| (feats[a].0, feats[a].1.clone())).collect();
        Ok(Self { anchors, signals, cov })
    }

    pub fn dim(&self) -> usize {
        self.anchors.len() + self.signals.len()
    }

    pub fn vars(&self) -> Vec<Var> {
        self.anchors.iter().map(|t| Var::w(*t)).chain(self.signals.iter().map(|(j, _)| Var::Signal(*j))).collect()
    }

    /// `cov(W_t, o)` for every observed variable `o`.
    pub fn cross_w(&self, t: T) -> Vec<T> {
        self.anchors.iter().map(|a| a.min(t)).chain(self.signals.iter().map(|(_, f)| f.cov_w(t))).collect()
    }

    /// Right derivative in `t` of `cov(W_t, o)` at `t = s >= anchors`.
    pub fn dcross_w(&self, s: T) -> Vec<T> {
        self.anchors
            .iter()
            .map(|a| if *a > s { T::one() } else { T::zero() })
            .chain(self.signals.iter().map(|(_, f)| f.dcov_w(s)))
            .collect()
    }

    /// Smallest signal time strictly after `s`.
    pub fn next_kink(&self, s: T) -> Option<T> {
        self.signals
            .iter()
            .flat_map(|(_, f)| f.times())
            .filter(|r| *r > s)
            .fold(None, |m: Option<T>, r| Some(m.map_or(r, |m| m.min(r))))
    }
}

/// Joint law of the target `W_t`, the anchor `W_s` and every conditioning
/// variable revealed by time `s`.
pub fn assemble<T: Scalar>(spec: &ExpansionSpec<T>, s: T, t: T) -> Result<GaussianSystem<T>> {
    if t < s {
        return Err(invalid("assemble needs s <= t"));
    }
    let law = ObservedLaw::build(spec, s)?;
    let mut labels = law.vars();
    let m = law.dim();
    let has_target = labels.iter().any(|l| l.matches(&Var::w(t)));
    if has_target {
        return GaussianSystem::new(labels, vec![T::zero(); m], law.cov);
    }
    let n = m + 1;
    let mut cov = vec![T::zero(); n * n];
    cov[0] = t;
    let cross = law.cross_w(t);
    for i in 0..m {
        cov[i + 1] = cross[i];
        cov[(i + 1) * n] = cross[i];
        for j in 0..m {
            cov[(i + 1) * n + j + 1] = law.cov[i * m + j];
        }
    }
    labels.insert(0, Var::w(t));
    GaussianSystem::new(labels, vec![T::zero(); n], cov)
}
