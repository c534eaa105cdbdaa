use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::drift::{CompensationRule, Thresholds};
use crate::error::{Error, Result};
use crate::expand::ExpansionSpec;
use crate::gauss::Route;
use crate::gridpath::Law;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Ito,
    FbmNoise,
    Anticipation,
    WhiteNoise,
    Bessel3,
    Converge,
    Value,
    Custom,
}

impl Experiment {
    /// Experiments run over a list of observation grids or ladder widths.
    pub fn is_multilevel(self) -> bool {
        matches!(self, Self::Anticipation | Self::WhiteNoise | Self::Converge | Self::Bessel3)
    }

    /// Experiments whose drift is the initial-signal or fBm-noise closed form.
    pub fn is_terminal_signal(self) -> bool {
        matches!(self, Self::Ito | Self::Value | Self::FbmNoise)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Drift grid: horizon `T` and, for multilevel experiments, observation
/// grids with `n0 * 2^k` intervals for `k < levels`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub n0: usize,
    pub levels: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    horizon: Option<f64>,
    n0: Option<usize>,
    levels: Option<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThresholdFile {
    tol_c: Option<f64>,
    tol_n: Option<f64>,
    div_floor: Option<f64>,
}

/// Configuration file as written by the user; every key optional except
/// `experiment`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    experiment: Option<Experiment>,
    seed: Option<u64>,
    n_paths: Option<usize>,
    grid: Option<GridFile>,
    sim_steps: Option<usize>,
    delta: Option<f64>,
    eps: Option<f64>,
    hurst: Option<f64>,
    sigma: Option<f64>,
    theta: Option<f64>,
    eps_n: Option<Vec<f64>>,
    lambda: Option<f64>,
    x: Option<f64>,
    route: Option<Route>,
    compensation: Option<CompensationRule>,
    thresholds: Option<ThresholdFile>,
    format: Option<Format>,
    strict: Option<bool>,
    output_dir: Option<PathBuf>,
    dump_paths: Option<usize>,
    law: Option<Law>,
    spec: Option<ExpansionSpec<f64>>,
    overrides: Option<Vec<String>>,
}

/// Effective configuration with every default filled in.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub n_paths: usize,
    pub grid: GridConfig,
    /// Simulation steps (see the README for the per-experiment grid).
    pub sim_steps: usize,
    pub delta: f64,
    pub eps: f64,
    pub hurst: f64,
    pub sigma: f64,
    pub theta: f64,
    pub eps_n: Vec<f64>,
    pub lambda: f64,
    pub x: f64,
    pub route: Route,
    pub compensation: CompensationRule,
    pub thresholds: Thresholds,
    pub format: Format,
    pub strict: bool,
    pub output_dir: PathBuf,
    pub dump_paths: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub law: Option<Law>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<ExpansionSpec<f64>>,
    /// Command-line overrides applied on top of the file, as `key=value`.
    pub overrides: Vec<String>,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n_paths: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub format: Option<Format>,
    pub strict: Option<bool>,
}

fn default_grid(e: Experiment) -> (GridConfig, usize) {
    let g = |horizon, n0, levels| GridConfig { horizon, n0, levels };
    match e {
        Experiment::Ito | Experiment::Value => (g(0.9, 1, 1), 512),
        Experiment::FbmNoise => (g(0.99, 1, 1), 512),
        Experiment::Anticipation | Experiment::WhiteNoise => (g(1.0, 4, 5), 352),
        Experiment::Converge => (g(1.0, 4, 5), 320),
        Experiment::Bessel3 => (g(1.0, 1, 1), 512),
        Experiment::Custom => (g(1.0, 1, 1), 256),
    }
}

impl ExperimentConfig {
    /// Parses a JSON config, rejecting unknown keys by name.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ConfigFile = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::materialize(file)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    /// Defaults for `experiment` with nothing overridden.
    pub fn defaults(experiment: Experiment) -> Self {
        Self::materialize(ConfigFile { experiment: Some(experiment), ..Default::default() })
            .expect("defaults are valid")
    }

    fn materialize(f: ConfigFile) -> Result<Self> {
        let experiment = f.experiment.ok_or_else(|| Error::Config("missing key `experiment`".into()))?;
        let (grid0, sim0) = default_grid(experiment);
        let gf = f.grid.unwrap_or_default();
        let tf = f.thresholds.unwrap_or_default();
        let td = Thresholds::default();
        let cfg = Self {
            experiment,
            seed: f.seed.unwrap_or(42),
            n_paths: f.n_paths.unwrap_or(10_000),
            grid: GridConfig {
                horizon: gf.horizon.unwrap_or(grid0.horizon),
                n0: gf.n0.unwrap_or(grid0.n0),
                levels: gf.levels.unwrap_or(grid0.levels),
            },
            sim_steps: f.sim_steps.unwrap_or(sim0),
            delta: f.delta.unwrap_or(0.1),
            eps: f.eps.unwrap_or(1.0),
            hurst: f.hurst.unwrap_or(0.25),
            sigma: f.sigma.unwrap_or(0.5),
            theta: f.theta.unwrap_or(1.0),
            eps_n: f.eps_n.unwrap_or_else(|| vec![0.5, 0.25, 0.125, 0.0625]),
            lambda: f.lambda.unwrap_or(1.0),
            x: f.x.unwrap_or(0.0),
            route: f.route.unwrap_or(Route::Projection),
            compensation: f.compensation.unwrap_or(CompensationRule::Trapezoid),
            thresholds: Thresholds {
                tol_c: tf.tol_c.unwrap_or(td.tol_c),
                tol_n: tf.tol_n.unwrap_or(td.tol_n),
                div_floor: tf.div_floor.unwrap_or(td.div_floor),
            },
            format: f.format.unwrap_or_default(),
            strict: f.strict.unwrap_or(false),
            output_dir: f.output_dir.unwrap_or_else(|| PathBuf::from("driftlab-out")),
            dump_paths: f.dump_paths.unwrap_or(16),
            law: f.law,
            spec: f.spec,
            overrides: f.overrides.unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let bad = |k: &str, why: &str| Err(Error::Config(format!("key `{k}`: {why}")));
        if self.n_paths < 2 {
            return bad("n_paths", "need at least two paths");
        }
        if !(self.grid.horizon > 0.0) || self.grid.n0 == 0 || self.grid.levels == 0 {
            return bad("grid", "horizon must be positive and n0, levels at least 1");
        }
        if self.sim_steps == 0 {
            return bad("sim_steps", "must be positive");
        }
        if !(self.lambda > 0.0) {
            return bad("lambda", "risk aversion must be positive");
        }
        if !(self.hurst > 0.0 && self.hurst < 1.0) {
            return bad("hurst", "must lie in (0, 1)");
        }
        if !(self.eps >= 0.0 && self.delta > 0.0 && self.sigma >= 0.0 && self.theta > 0.0) {
            return bad("eps/delta/sigma/theta", "out of range");
        }
        if self.eps_n.is_empty() || self.eps_n.iter().any(|e| !(*e > 0.0)) {
            return bad("eps_n", "needs positive ladder widths");
        }
        if self.experiment == Experiment::Custom && self.spec.is_none() {
            return bad("spec", "required by the custom experiment");
        }
        if self.experiment.is_terminal_signal() && self.grid.horizon >= 1.0 {
            return bad("grid.horizon", "must be below the signal time 1");
        }
        Ok(())
    }

    /// Applies command-line values, recording each in `overrides`.
    pub fn apply(mut self, o: &Overrides) -> Result<Self> {
        if let Some(v) = o.seed {
            self.seed = v;
            self.overrides.push(format!("seed={v}"));
        }
        if let Some(v) = o.n_paths {
            self.n_paths = v;
            self.overrides.push(format!("n_paths={v}"));
        }
        if let Some(v) = &o.output_dir {
            self.output_dir = v.clone();
            self.overrides.push(format!("output_dir={}", v.display()));
        }
        if let Some(v) = o.format {
            self.format = v;
            self.overrides.push(format!("format={}", if v == Format::Csv { "csv" } else { "json" }));
        }
        if let Some(v) = o.strict {
            self.strict = v;
            self.overrides.push(format!("strict={v}"));
        }
        self.validate()?;
        Ok(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the serialized effective config.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
