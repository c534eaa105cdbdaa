use driftlab::drift::{closed_form_estimate, convergence_report, fit_at, gaussian_drift, ols, ClosedForm, Thresholds};
use driftlab::expand::{feature_stream, ExpansionSpec, FeatureStream, NoiseModel, SignalProcess};
use driftlab::gauss::Route;
use driftlab::gridpath::{build_refining_grids, channel, simulate, Law, Model};
use driftlab::{Drift, Ensemble, Grid, Spec};

fn brownian(horizon: f64, steps: usize, paths: usize, seed: u64) -> Ensemble {
    simulate(&Law::from(Model::Brownian), &Grid::uniform(horizon, steps).unwrap(), paths, seed).unwrap()
}

fn refining(ens: &Ensemble, signal: SignalProcess<f64>, levels: usize) -> Vec<Drift> {
    build_refining_grids(1.0, 2, levels)
        .unwrap()
        .into_iter()
        .map(|obs| {
            let spec = ExpansionSpec::DiscretizedProcess { signal: signal.clone(), noise: NoiseModel::None, obs };
            let f = feature_stream(&spec, ens).unwrap();
            gaussian_drift(&spec, ens, &f, Route::Projection, Some(1.0)).unwrap()
        })
        .collect()
}

#[test]
fn ols_recovers_noiseless_plane() {
    let x: Vec<Vec<f64>> = (0..40).map(|k| vec![k as f64 * 0.1, ((k * 7) % 11) as f64]).collect();
    let y: Vec<f64> = x.iter().map(|r| 1.0 + 2.0 * r[0] - 0.5 * r[1]).collect();
    let fit = ols(&x, &y, &["a".into(), "b".into()]).unwrap();
    for (c, e) in fit.coefficients.iter().zip([1.0, 2.0, -0.5]) {
        assert!((c - e).abs() < 1e-10, "{c} vs {e}");
    }
    assert!(fit.ridge.is_none());
}

#[test]
fn regression_recovers_terminal_signal_coefficients() {
    let ens = brownian(1.0, 64, 20_000, 3);
    let w = ens.channel(channel::W).unwrap().clone();
    let feats =
        FeatureStream::dynamic(ens.grid().clone(), ens.n_paths(), vec!["w".into(), "w1".into()], move |i, p, o| {
            o[0] = w.at(p, i);
            o[1] = w.at(p, 64);
        });
    let fit = fit_at(&ens, channel::W, &feats, 32, false).unwrap();
    assert!(fit.z(0, 0.0).abs() < 4.0);
    assert!(fit.z(1, -2.0).abs() < 4.0, "w coefficient {}", fit.coefficients[1]);
    assert!(fit.z(2, 2.0).abs() < 4.0, "w1 coefficient {}", fit.coefficients[2]);
}

#[test]
fn exact_routes_match_closed_form_along_paths() {
    let ens = brownian(1.0, 40, 300, 5);
    let spec: Spec = ExpansionSpec::initial_point(1.0, 0.0);
    let f = feature_stream(&spec, &ens).unwrap();
    let cf = closed_form_estimate(ClosedForm::Ito, &ens).unwrap().truncated(0.9).unwrap();
    for route in [Route::Projection, Route::Jacod] {
        let a = gaussian_drift(&spec, &ens, &f, route, Some(0.9)).unwrap();
        for p in 0..ens.n_paths() {
            for (x, y) in a.row(p).iter().zip(cf.row(p)) {
                assert!((x - y).abs() <= 1e-8 * (1.0 + y.abs()), "{route:?}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn refinement_adds_orthogonal_information() {
    let ens = brownian(1.1, 88, 5000, 7);
    let drifts = refining(&ens, SignalProcess::Anticipation { delta: 0.1 }, 3);
    let rep = convergence_report(&drifts, None, Thresholds::gaussian_exact()).unwrap();
    // residuals are exact up to rounding, so the sampling se is no yardstick
    for (r, l) in rep.pythagoras_residuals().iter().zip(&rep.levels[1..]) {
        assert!(r.value.abs() <= 3.0 * r.se + 1e-8 * l.h2_norm_sq.value, "pythagoras residual {r:?}");
    }
    for d in rep.norm_increments() {
        assert!(d.value >= -3.0 * d.se, "norm dropped {d:?}");
    }
}

#[test]
fn stored_norms_match_recomputation() {
    let ens = brownian(1.1, 88, 500, 9);
    for d in refining(&ens, SignalProcess::Anticipation { delta: 0.1 }, 2) {
        let (h1, h2) = d.recompute_norms();
        assert!((h1.value - d.h1_norm().value).abs() <= 1e-12 * h1.value.abs().max(1.0));
        assert!((h2.value - d.h2_norm_sq().value).abs() <= 1e-12 * h2.value.abs().max(1.0));
    }
}

#[test]
fn brownian_blur_bridge_approaches_closed_form() {
    let law = Law::new(vec![Model::Brownian, Model::Fbm { hurst: 0.5 }]);
    let ens = simulate(&law, &Grid::uniform(1.0, 256).unwrap(), 4000, 11).unwrap();
    let drifts = refining(&ens, SignalProcess::FbmBridge { eps: 1.0, hurst: 0.5 }, 5);
    let reference = closed_form_estimate(ClosedForm::FbmNoise { eps: 1.0, hurst: 0.5 }, &ens).unwrap();
    let rep = convergence_report(&drifts, Some(&reference), Thresholds::default()).unwrap();
    let gaps: Vec<f64> = rep.reference_gaps.unwrap().iter().map(|g| g.value).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(gaps[4] < 0.5 * gaps[0], "{gaps:?}");
}
