use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{Experiment, ExperimentConfig, Format};
use crate::audit::{
    deflator, deflator_audit, increment_test, ladder_identity_test, qv_check, AuditMetadata, AuditReport,
};
use crate::drift::{
    closed_form_estimate, compensate_ensemble, convergence_report, gaussian_drift, ladder_drift, regression_drift,
    ClosedForm, ConvergenceReport, DriftEstimate,
};
use crate::error::{Error, Result};
use crate::expand::{feature_stream, ExpansionSpec, FeatureStream, NoiseModel, SignalProcess};
use crate::gridpath::{build_refining_grids, channel, simulate, GridFunction, Law, Model, PathEnsemble, TimeGrid};
use crate::value::{backtest, sample_objective, value_identity_check, ValuationReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Simulate,
    Drift,
    Audit,
    Converge,
    Value,
    Run,
}

impl Stage {
    fn wants(self, s: Stage) -> bool {
        self == s || self == Stage::Run
    }
}

/// Summary of one pipeline execution.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub stage: Stage,
    pub artifacts: Vec<String>,
    pub duration_secs: f64,
    pub exit_status: i32,
    pub audit_failures: usize,
    pub tool_version: String,
}

/// Record file name; every other artifact is a data artifact.
pub const RECORD_FILE: &str = "run_record.json";

struct Out {
    dir: PathBuf,
    format: Format,
    artifacts: Vec<String>,
}

impl Out {
    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
        move |source| Error::Io { path: path.to_path_buf(), source }
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(Self::io(&path))?;
        let mut w = BufWriter::new(file);
        f(&mut w).and_then(|_| w.flush()).map_err(Self::io(&path))?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn json<S: Serialize>(&mut self, name: &str, v: &S) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, v)?;
            writeln!(w)
        })
    }

    /// A table as CSV (`csv`) or a JSON array of row objects (`json`).
    fn table(
        &mut self,
        stem: &str,
        csv: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
        rows: impl FnOnce() -> Value,
    ) -> Result<()> {
        match self.format {
            Format::Csv => self.write(&format!("{stem}.csv"), csv),
            Format::Json => {
                let v = rows();
                self.json(&format!("{stem}.json"), &v)
            }
        }
    }
}

/// Everything computed for one configuration.
struct Computed {
    ensemble: PathEnsemble<f64>,
    /// Drift horizon snapped to the simulation grid.
    horizon: f64,
    drifts: Vec<DriftEstimate<f64>>,
    reference: Option<DriftEstimate<f64>>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn snap(grid: &TimeGrid<f64>, t: f64) -> f64 {
    grid.times()[grid.floor_index(t + 1e-12)]
}

type Simulated = (PathEnsemble<f64>, Vec<Option<ExpansionSpec<f64>>>);

fn simulation(cfg: &ExperimentConfig) -> Result<Simulated> {
    let t = cfg.grid.horizon;
    let n = cfg.sim_steps;
    let one_level = |s| vec![Some(s)];
    let (law, grid, specs) = match cfg.experiment {
        Experiment::Ito | Experiment::Value => (
            Law::from(Model::Brownian),
            TimeGrid::uniform(1.0, n)?.with_points(&[t])?,
            one_level(ExpansionSpec::initial_point(1.0, 0.0)),
        ),
        Experiment::FbmNoise => {
            (Law::new(vec![Model::Brownian, Model::Fbm { hurst: cfg.hurst }]), TimeGrid::uniform(1.0, n)?, vec![None])
        }
        Experiment::Anticipation | Experiment::WhiteNoise => {
            let white = cfg.experiment == Experiment::WhiteNoise;
            let mut comps = vec![Model::Brownian];
            if white {
                comps.push(Model::White { sigma: cfg.sigma });
            }
            let noise = if white { NoiseModel::White { sigma: cfg.sigma } } else { NoiseModel::None };
            let specs = build_refining_grids(t, cfg.grid.n0, cfg.grid.levels)?
                .into_iter()
                .map(|obs| {
                    Some(ExpansionSpec::DiscretizedProcess {
                        signal: SignalProcess::Anticipation { delta: cfg.delta },
                        noise: noise.clone(),
                        obs,
                    })
                })
                .collect();
            (Law::new(comps), TimeGrid::uniform(t + cfg.delta, n)?, specs)
        }
        Experiment::Converge => {
            let specs = build_refining_grids(t, cfg.grid.n0, cfg.grid.levels)?
                .into_iter()
                .map(|obs| {
                    Some(ExpansionSpec::DiscretizedProcess {
                        signal: SignalProcess::FbmBridge { eps: cfg.eps, hurst: cfg.hurst },
                        noise: NoiseModel::None,
                        obs,
                    })
                })
                .collect();
            (Law::new(vec![Model::Brownian, Model::Fbm { hurst: cfg.hurst }]), TimeGrid::uniform(t.max(1.0), n)?, specs)
        }
        Experiment::Bessel3 => (
            Law::from(Model::Bessel3),
            TimeGrid::uniform(2.0 * t, n)?,
            cfg.eps_n.iter().map(|&eps| Some(ExpansionSpec::Bessel3Ladder { eps })).collect(),
        ),
        Experiment::Custom => {
            let spec = cfg.spec.clone().ok_or_else(|| config_err("key `spec`: required by the custom experiment"))?;
            revalidate(&spec)?;
            let law = cfg.law.clone().unwrap_or_else(|| Law::from(Model::Brownian));
            (law, TimeGrid::uniform(t, n)?, vec![Some(spec)])
        }
    };
    Ok((simulate(&law, &grid, cfg.n_paths, cfg.seed)?, specs))
}

/// Grids inside a deserialized spec skip the constructor checks.
fn revalidate(spec: &ExpansionSpec<f64>) -> Result<()> {
    match spec {
        ExpansionSpec::DiscretizedProcess { obs, .. } => {
            TimeGrid::new(obs.times().to_vec()).map_err(|e| config_err(format!("key `spec.obs`: {e}")))?;
        }
        ExpansionSpec::TimeChange { phi } => {
            GridFunction::new(phi.knots().to_vec(), phi.values().to_vec())
                .map_err(|e| config_err(format!("key `spec.phi`: {e}")))?;
        }
        _ => {}
    }
    spec.validate().map_err(|e| config_err(format!("key `spec`: {e}")))
}

fn drifts(
    cfg: &ExperimentConfig,
    ens: &PathEnsemble<f64>,
    specs: &[Option<ExpansionSpec<f64>>],
    horizon: f64,
) -> Result<Vec<DriftEstimate<f64>>> {
    let mut out = Vec::with_capacity(specs.len());
    for spec in specs {
        let est = match spec {
            None => closed_form_estimate(ClosedForm::FbmNoise { eps: cfg.eps, hurst: cfg.hurst }, ens)?
                .truncated(horizon)?,
            Some(ExpansionSpec::Bessel3Ladder { eps }) => {
                ladder_drift(ens, *eps, Some(horizon))?.with_level((1.0 / eps).round() as usize)
            }
            Some(spec @ ExpansionSpec::TimeChange { .. }) => {
                let f = feature_stream(spec, ens)?;
                regression_drift(ens, channel::W, &f, false)?.truncated(horizon)?
            }
            Some(spec) => {
                let f = feature_stream(spec, ens)?;
                let e = gaussian_drift(spec, ens, &f, cfg.route, Some(horizon))?;
                match spec {
                    ExpansionSpec::DiscretizedProcess { obs, .. } => e.with_level(obs.steps()),
                    _ => e,
                }
            }
        };
        out.push(est);
    }
    Ok(out)
}

fn compute(cfg: &ExperimentConfig, with_drift: bool) -> Result<Computed> {
    let (ensemble, specs) = simulation(cfg)?;
    let horizon = snap(ensemble.grid(), cfg.grid.horizon);
    let (drifts, reference) = if with_drift {
        let d = drifts(cfg, &ensemble, &specs, horizon)?;
        let reference = if cfg.experiment == Experiment::Converge {
            Some(
                closed_form_estimate(ClosedForm::FbmNoise { eps: cfg.eps, hurst: cfg.hurst }, &ensemble)?
                    .truncated(horizon)?,
            )
        } else {
            None
        };
        (d, reference)
    } else {
        (Vec::new(), None)
    };
    Ok(Computed { ensemble, horizon, drifts, reference })
}

/// Features `[w, alpha]` on the drift grid: the state and the drift itself.
fn audit_features(ens: &PathEnsemble<f64>, alpha: &DriftEstimate<f64>) -> Result<FeatureStream<f64>> {
    let w = ens.channel(channel::W)?;
    Ok(FeatureStream::dynamic(alpha.grid().clone(), ens.n_paths(), vec!["w".into(), "alpha".into()], |i, p, out| {
        out[0] = w.at(p, i);
        out[1] = alpha.value(p, i);
    }))
}

fn martingale_audits(
    cfg: &ExperimentConfig,
    ens: &PathEnsemble<f64>,
    alpha: &DriftEstimate<f64>,
) -> Result<AuditReport<f64>> {
    let th = alpha.grid().horizon();
    let g = alpha.grid();
    let comp = compensate_ensemble(ens, channel::W, alpha, cfg.compensation)?;
    let ens_t = ens.truncated(th)?.with_channel(channel::M_TILDE, comp)?;
    let feats = audit_features(&ens_t, alpha)?;
    let at = |f: f64| snap(g, f * th);
    let pairs = [(at(0.25), at(0.5)), (at(0.5), at(0.75)), (at(0.75), th)];
    let inc = increment_test(&ens_t, channel::M_TILDE, &feats, &pairs)?;
    let qv = qv_check(&ens_t, channel::M_TILDE, &[at(0.25), at(0.5), th])?;
    let z = deflator(alpha, &ens_t, channel::M_TILDE)?;
    let dfl = deflator_audit(&z, &ens_t, channel::W, alpha, &feats, &pairs)?;
    Ok(AuditReport::new(AuditMetadata::of(&ens_t), Vec::new())
        .merged("increment", inc)
        .merged("qv", qv)
        .merged("deflator", dfl))
}

fn audits(cfg: &ExperimentConfig, c: &Computed) -> Result<AuditReport<f64>> {
    match cfg.experiment {
        Experiment::Bessel3 => {
            let s = snap(c.ensemble.grid(), cfg.grid.horizon);
            let r = ladder_identity_test(&c.ensemble, cfg.eps_n[0], s, &[0, 1, 2], 10)?;
            Ok(AuditReport::new(AuditMetadata::of(&c.ensemble), Vec::new()).merged("ladder", r))
        }
        _ => {
            let alpha = c.drifts.last().expect("at least one drift level");
            martingale_audits(cfg, &c.ensemble, alpha)
        }
    }
}

#[derive(Serialize)]
struct Valuation<'a> {
    report: &'a ValuationReport<f64>,
    identity: &'a AuditReport<f64>,
    /// Sample objective at strategy scales 0.9, 1.0, 1.1.
    objective_perturbation: [f64; 3],
}

fn dump_ensemble(out: &mut Out, ens: &PathEnsemble<f64>) -> Result<()> {
    out.table(
        "ensemble",
        |w| ens.write_csv(w),
        || {
            let names: Vec<&str> = ens.channel_names().collect();
            let mut rows = Vec::new();
            for (i, t) in ens.grid().times().iter().enumerate() {
                for p in 0..ens.n_paths() {
                    for name in &names {
                        let v = ens.channel(name).expect("listed channel").at(p, i);
                        rows.push(json!({"time": t, "path_id": p, "channel": name, "value": v}));
                    }
                }
            }
            Value::Array(rows)
        },
    )
}

fn write_drift(out: &mut Out, stem: &str, d: &DriftEstimate<f64>) -> Result<()> {
    out.table(stem, |w| d.write_per_time_csv(w), || serde_json::to_value(d.per_time()).expect("rows serialize"))
}

/// Runs `stage` of the configured experiment, writing artifacts and the
/// effective config into the output directory.
pub fn run(cfg: &ExperimentConfig, stage: Stage) -> Result<RunRecord> {
    let start = Instant::now();
    if stage == Stage::Converge && !cfg.experiment.is_multilevel() {
        return Err(config_err(format!("experiment {:?} has no convergence stage", cfg.experiment)));
    }
    if stage == Stage::Value && !cfg.experiment.is_terminal_signal() {
        return Err(config_err(format!("experiment {:?} has no valuation stage", cfg.experiment)));
    }
    std::fs::create_dir_all(&cfg.output_dir).map_err(Out::io(&cfg.output_dir))?;
    let mut out = Out { dir: cfg.output_dir.clone(), format: cfg.format, artifacts: Vec::new() };
    out.write("effective_config.json", |w| writeln!(w, "{}", cfg.to_json()))?;

    let c = compute(cfg, stage != Stage::Simulate)?;
    dump_ensemble(&mut out, &c.ensemble.first_paths(cfg.dump_paths))?;
    let mut failures = 0;

    if stage != Stage::Simulate {
        let summaries: Vec<_> = c.drifts.iter().map(|d| d.summary()).collect();
        out.json("drift.json", &json!({ "horizon": c.horizon, "levels": summaries }))?;
        if c.drifts.len() == 1 {
            write_drift(&mut out, "drift_per_time", &c.drifts[0])?;
        } else {
            for (k, d) in c.drifts.iter().enumerate() {
                write_drift(&mut out, &format!("drift_per_time_level{k}"), d)?;
            }
        }
        if cfg.experiment == Experiment::FbmNoise {
            let form = ClosedForm::FbmNoise { eps: cfg.eps, hurst: cfg.hurst };
            let profile = (2..=6)
                .map(|k| {
                    let upper = 1.0 - 10f64.powi(-k);
                    Ok(json!({"k": k, "upper": upper, "integral": form.integrated_second_moment(upper)?}))
                })
                .collect::<Result<Vec<_>>>()?;
            out.json("second_moment_profile.json", &profile)?;
        }
    }
    if stage.wants(Stage::Audit) {
        let report = audits(cfg, &c)?;
        failures += report.failures().count();
        out.json("audit.json", &report)?;
    }
    if stage.wants(Stage::Converge) && cfg.experiment.is_multilevel() {
        let report: ConvergenceReport<f64> = convergence_report(&c.drifts, c.reference.as_ref(), cfg.thresholds)?;
        out.json("convergence.json", &report)?;
    }
    if stage.wants(Stage::Value) && cfg.experiment.is_terminal_signal() {
        let alpha = &c.drifts[0];
        let report = backtest(&c.ensemble, channel::W, alpha, cfg.lambda, cfg.x, 1.0)?;
        let identity = value_identity_check(&report);
        failures += identity.failures().count();
        let obj = |s: f64| sample_objective(&c.ensemble, channel::W, alpha, cfg.lambda, cfg.x, s);
        let v = Valuation {
            report: &report,
            identity: &identity,
            objective_perturbation: [obj(0.9)?, obj(1.0)?, obj(1.1)?],
        };
        out.json("valuation.json", &v)?;
        out.table(
            "pnl",
            |w| report.write_pnl_csv(w),
            || Value::Array(report.pnl().iter().enumerate().map(|(p, v)| json!({"path_id": p, "pnl": v})).collect()),
        )?;
    }

    let exit_status = if cfg.strict && failures > 0 { 1 } else { 0 };
    let mut record = RunRecord {
        config_hash: cfg.hash(),
        stage,
        artifacts: out.artifacts.clone(),
        duration_secs: start.elapsed().as_secs_f64(),
        exit_status,
        audit_failures: failures,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    record.artifacts.push(RECORD_FILE.to_string());
    out.json(RECORD_FILE, &record)?;
    Ok(record)
}

/// Caps the rayon pool at `DRIFTLAB_THREADS` workers when set. Results do
/// not depend on the worker count.
pub fn configure_threads() -> Result<()> {
    match std::env::var("DRIFTLAB_THREADS") {
        Ok(v) => {
            let n: usize = v
                .parse()
                .ok()
                .filter(|n| *n > 0)
                .ok_or_else(|| config_err(format!("DRIFTLAB_THREADS must be a positive integer, got '{v}'")))?;
            // A second initialisation in the same process is harmless.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            Ok(())
        }
        Err(_) => Ok(()),
    }
}
