use tailrisk_core::estimator::{MlEstimator, TruthStub};
use tailrisk_core::exec::Exec;
use tailrisk_core::forecasting::{self, RollingConfig};
use tailrisk_core::io;
use tailrisk_core::mle::MleConfig;
use tailrisk_core::scoring::{self, BacktestConfig};
use tailrisk_core::simulation::{self, DgpSpec};
use tailrisk_core::{Family, ModelSpec};

fn spec() -> ModelSpec {
    ModelSpec::new(Family::ReEsCavExp, 0.01).unwrap()
}

#[test]
fn truth_stub_forecasts_match_true_paths() {
    let dgp = DgpSpec { n: 700, seed: 31, ..Default::default() };
    let sim = simulation::simulate_dgp(&dgp);
    let data = sim.records();
    let paths = simulation::true_paths(&sim, 0.01);
    let stub = TruthStub::new(dgp, 0.01);
    let out = forecasting::rolling_forecast(&spec(), &data, &stub, &RollingConfig::new(250, 1000, 0, "truth")).unwrap();
    assert_eq!(out.records.len(), 450);
    for f in &out.records {
        let t = f.origin + 1;
        assert_eq!(f.date, data[t].date);
        assert!((f.var - paths.var[t]).abs() < 1e-9, "VaR at {t}");
        assert!((f.es - paths.es[t]).abs() < 1e-9, "ES at {t}");
    }
}

#[test]
fn rolling_ml_parallel_equals_sequential() {
    let data = simulation::simulate_dgp(&DgpSpec { n: 420, seed: 4, ..Default::default() }).records();
    let run = |exec| {
        let est = MlEstimator::new(MleConfig { n_candidates: 200, max_evals: 200, exec, ..Default::default() });
        let rc = RollingConfig { exec, ..RollingConfig::new(400, 5, 9, "ml") };
        forecasting::rolling_forecast(&spec(), &data, &est, &rc).unwrap()
    };
    let (a, b) = (run(Exec::Sequential), run(Exec::Parallel));
    assert_eq!(a.records, b.records);
    assert_eq!(a.refits, 4);
}

#[test]
fn simulate_forecast_backtest_and_persist() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulation::simulate_dgp(&DgpSpec { n: 900, seed: 12, ..Default::default() }).records();
    let daily = dir.path().join("daily.csv");
    io::write_daily(&daily, &data).unwrap();
    let reloaded = io::load_daily(&daily).unwrap();
    assert_eq!(reloaded, data);

    let est = MlEstimator::new(MleConfig { n_candidates: 300, max_evals: 400, ..Default::default() });
    let out =
        forecasting::rolling_forecast(&spec(), &reloaded, &est, &RollingConfig::new(600, 100, 2, "re-exp")).unwrap();
    assert_eq!(out.failures, 0);
    assert!(out.records.iter().all(|f| f.es < f.var && f.var < 0.0));

    let fpath = dir.path().join("forecasts.csv");
    io::write_forecasts(&fpath, &out.records).unwrap();
    assert_eq!(io::load_forecasts(&fpath).unwrap(), out.records);

    let (r, v, e) = forecasting::align(&out.records, &reloaded).unwrap();
    assert_eq!(r.len(), 300);
    let rep = scoring::backtest(&r, &v, &e, 0.01, &BacktestConfig { vqr_bootstrap: 50, ..Default::default() }).unwrap();
    assert!(rep.vrate <= 0.05);
    assert_eq!(rep.joint_loss, scoring::al_log_score(&r, &v, &e, 0.01).unwrap());
}
