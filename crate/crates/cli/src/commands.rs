//! Command configurations and their execution. Every command reads a typed
//! config from the merged JSON value, so a manifest replay follows exactly the
//! same path as the original run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use tailrisk_core::estimator::{Estimator, FixedParams, McmcEstimator, MlEstimator};
use tailrisk_core::exec::Exec;
use tailrisk_core::forecasting::{self, ForecastRecord, RollingConfig};
use tailrisk_core::io::{self, DailyRecord};
use tailrisk_core::mcmc::{self, BlockLayout, McmcConfig};
use tailrisk_core::measures::{self, MeasureConfig};
use tailrisk_core::mle::{self, MleConfig};
use tailrisk_core::model::InitPolicy;
use tailrisk_core::scoring::{self, BacktestConfig, McsConfig, McsMethod};
use tailrisk_core::simulation::{self, DgpSpec, ReplicationConfig};
use tailrisk_core::study::{self, ComparisonConfig};
use tailrisk_core::{likelihood, model, Family, ModelSpec, ParamVector};

use crate::config::resolve_input;
use crate::error::CliError;

type CliResult<T> = Result<T, CliError>;

fn cfg_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn need_seed(seed: Option<u64>) -> CliResult<u64> {
    seed.ok_or_else(|| cfg_err("this command requires --seed"))
}

fn exec_mode(sequential: bool) -> Exec {
    if sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    }
}

/// Where a daily series comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// Daily CSV (`date,return,measure`).
    pub data: Option<PathBuf>,
    /// Intraday CSV; the measure is built with `measure.*`.
    pub intraday: Option<PathBuf>,
    pub measure: MeasureConfig,
    /// Multiplier applied to returns and measures after loading (e.g. 100 for
    /// percentage returns).
    pub data_scale: f64,
}

impl Default for InputConfig {
    fn default() -> Self {
        InputConfig {
            data: None,
            intraday: None,
            measure: MeasureConfig::default(),
            data_scale: 1.0,
        }
    }
}

impl InputConfig {
    fn resolve(&mut self) -> CliResult<()> {
        match (&self.data, &self.intraday) {
            (Some(_), Some(_)) => return Err(cfg_err("give either input.data or input.intraday, not both")),
            (None, None) => return Err(cfg_err("an input file is required (--data or --intraday)")),
            _ => {}
        }
        if let Some(p) = &self.data {
            self.data = Some(resolve_input(p)?);
        }
        if let Some(p) = &self.intraday {
            self.intraday = Some(resolve_input(p)?);
        }
        if !(self.data_scale > 0.0 && self.data_scale.is_finite()) {
            return Err(cfg_err("data_scale must be positive"));
        }
        self.measure.validate()?;
        Ok(())
    }

    fn load(&self) -> CliResult<Vec<DailyRecord>> {
        let mut recs = match (&self.data, &self.intraday) {
            (Some(p), _) => io::load_daily(p)?,
            (None, Some(p)) => measures::build_measure_series(&io::load_intraday(p)?, &self.measure)?,
            (None, None) => return Err(cfg_err("no input")),
        };
        if self.data_scale != 1.0 {
            for r in &mut recs {
                r.ret *= self.data_scale;
                r.measure *= self.data_scale;
            }
        }
        Ok(recs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ml,
    Mcmc,
    /// Fixed parameters read from a JSON file with a `params` object.
    Fixed,
}

/// Estimator choice shared by `fit`, `forecast` and `study`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub method: Method,
    pub ml: MleConfig,
    pub mcmc: McmcConfig,
    /// Parameter file for `method = "fixed"`.
    pub params: Option<PathBuf>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            method: Method::Ml,
            ml: MleConfig::default(),
            mcmc: McmcConfig::default(),
            params: None,
        }
    }
}

impl EstimatorConfig {
    fn resolve(&mut self) -> CliResult<()> {
        self.mcmc.validate()?;
        if self.method == Method::Fixed {
            let p = self.params.as_ref().ok_or_else(|| cfg_err("method fixed needs estimator.params"))?;
            self.params = Some(resolve_input(p)?);
        }
        Ok(())
    }

    fn build(&self, family: Family, seed: u64) -> CliResult<Box<dyn Estimator>> {
        Ok(match self.method {
            Method::Ml => Box::new(MlEstimator::new(MleConfig { seed, ..self.ml.clone() })),
            Method::Mcmc => Box::new(McmcEstimator {
                cfg: McmcConfig { seed, ..self.mcmc.clone() },
            }),
            Method::Fixed => {
                let path = self.params.as_ref().expect("resolved");
                let v: Value = io::read_json(path)?;
                let obj = v.get("params").unwrap_or(&v);
                Box::new(FixedParams {
                    params: ParamVector::from_json(family, obj)?,
                    init: InitPolicy::default(),
                })
            }
        })
    }
}

fn spec_of(model: Family, alpha: f64) -> CliResult<ModelSpec> {
    Ok(ModelSpec::new(model, alpha)?)
}

/// Writes `value` under `out` and records the name.
struct Outputs<'a> {
    dir: &'a Path,
    names: Vec<String>,
}

impl<'a> Outputs<'a> {
    fn new(dir: &'a Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("creating {}: {e}", dir.display())))?;
        Ok(Outputs { dir, names: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.names.push(name.to_string());
        self.dir.join(name)
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let p = self.path(name);
        Ok(io::write_json(p, value)?)
    }

    fn text(&mut self, name: &str, s: &str) -> CliResult<()> {
        let p = self.path(name);
        std::fs::write(&p, s).map_err(|e| CliError::Runtime(format!("writing {}: {e}", p.display())))
    }
}

// ---------------------------------------------------------------- measures

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasuresConfig {
    pub input: InputConfig,
}

fn measures_cmd(mut cfg: MeasuresConfig, out: &mut Outputs) -> CliResult<Value> {
    if cfg.input.intraday.is_none() {
        return Err(cfg_err("measures needs --intraday"));
    }
    cfg.input.resolve()?;
    let recs = cfg.input.load()?;
    io::write_daily(out.path("daily.csv"), &recs)?;
    Ok(serde_json::to_value(&cfg).expect("serializable"))
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpParams {
    pub omega: f64,
    pub a: f64,
    pub b: f64,
    pub xi: f64,
    pub phi: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub sigma_u: f64,
}

impl Default for DgpParams {
    fn default() -> Self {
        let d = DgpSpec::default();
        DgpParams {
            omega: d.omega,
            a: d.a,
            b: d.b,
            xi: d.xi,
            phi: d.phi,
            tau1: d.tau1,
            tau2: d.tau2,
            sigma_u: d.sigma_u,
        }
    }
}

impl DgpParams {
    fn spec(&self, n: usize, seed: u64) -> DgpSpec {
        DgpSpec {
            omega: self.omega,
            a: self.a,
            b: self.b,
            xi: self.xi,
            phi: self.phi,
            tau1: self.tau1,
            tau2: self.tau2,
            sigma_u: self.sigma_u,
            n,
            seed,
            regimes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub reps: usize,
    pub n: usize,
    pub alpha: f64,
    /// Synthetic regime-shift market instead of the fixed generator.
    pub market: bool,
    pub dgp: DgpParams,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            reps: 1,
            n: 1900,
            alpha: 0.01,
            market: false,
            dgp: DgpParams::default(),
        }
    }
}

fn simulate_cmd(cfg: SimulateConfig, seed: u64, out: &mut Outputs) -> CliResult<Value> {
    if cfg.reps == 0 || cfg.n < 2 {
        return Err(cfg_err("reps must be >= 1 and n >= 2"));
    }
    spec_of(Family::ReEsCavExp, cfg.alpha)?;
    cfg.dgp.spec(cfg.n, 0).validate()?;
    for rep in 0..cfg.reps {
        let s = simulation::rep_seed(seed, rep);
        let dgp = if cfg.market {
            let m = study::synthetic_market(s, cfg.n);
            DgpSpec { regimes: m.regimes, ..cfg.dgp.spec(cfg.n, m.seed) }
        } else {
            cfg.dgp.spec(cfg.n, s)
        };
        let sim = simulation::simulate_dgp(&dgp);
        io::write_daily(out.path(&format!("sim_{rep:03}.csv")), &sim.records())?;
        let (truth, params) =
            simulation::truth_record(&dgp, &sim, cfg.alpha, Family::ReEsCavExp, 0, Exec::Sequential)?;
        out.json(
            &format!("truth_{rep:03}.json"),
            &json!({
                "model": Family::ReEsCavExp,
                "alpha": cfg.alpha,
                "seed": s,
                "regimes": dgp.regimes,
                "params": params.to_json(Family::ReEsCavExp),
                "var_next": truth.var_next,
                "es_next": truth.es_next,
                "es_ratio": truth.mapping.es_ratio,
            }),
        )?;
    }
    Ok(serde_json::to_value(&cfg).expect("serializable"))
}

// ---------------------------------------------------------------- fit

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub input: InputConfig,
    pub model: Family,
    pub alpha: f64,
    pub estimator: EstimatorConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            input: InputConfig::default(),
            model: Family::ReEsCavExp,
            alpha: 0.01,
            estimator: EstimatorConfig::default(),
        }
    }
}

fn fit_cmd(mut cfg: FitConfig, seed: u64, out: &mut Outputs) -> CliResult<Value> {
    cfg.input.resolve()?;
    cfg.estimator.resolve()?;
    let spec = spec_of(cfg.model, cfg.alpha)?;
    let data = cfg.input.load()?;
    let fam = cfg.model;

    let (params, forecast, extra) = match cfg.estimator.method {
        Method::Ml => {
            let ml = MleConfig { seed, ..cfg.estimator.ml.clone() };
            let fit = mle::fit_ml(&spec, &data, &ml)?;
            let (_, f) = model::filter_and_forecast(&spec, &fit.params, &data, &ml.init)?;
            (fit.params, f, json!({ "ml": fit }))
        }
        Method::Mcmc => {
            let mc = McmcConfig { seed, ..cfg.estimator.mcmc.clone() };
            let run = mcmc::run_mcmc(&spec, &data, &BlockLayout::default_for(fam), &mc)?;
            mcmc::write_chain_csv(out.path("chain.csv"), &run.chain, fam)?;
            (run.posterior_mean, run.forecast_mean, json!({ "mcmc": run.summary_json() }))
        }
        Method::Fixed => {
            let est = cfg.estimator.build(fam, seed)?;
            let e = est.fit(&spec, &data, seed, None)?;
            (e.params, e.forecast, json!({}))
        }
    };
    let ll = likelihood::composite_loglik(&spec, &params, &data, &InitPolicy::default()).ok();
    let mut doc = json!({
        "model": fam,
        "alpha": cfg.alpha,
        "method": cfg.estimator.method,
        "n": data.len(),
        "params": params.to_json(fam),
        "var_next": forecast.0,
        "es_next": forecast.1,
        "loglik": ll,
    });
    if let (Value::Object(d), Value::Object(x)) = (&mut doc, extra) {
        d.extend(x);
    }
    out.json("fit.json", &doc)?;
    Ok(serde_json::to_value(&cfg).expect("serializable"))
}

// ---------------------------------------------------------------- forecast

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    pub input: InputConfig,
    pub model: Family,
    pub alpha: f64,
    pub estimator: EstimatorConfig,
    pub window: usize,
    pub stride: usize,
    pub warm_start: bool,
    pub sequential: bool,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig {
            input: InputConfig::default(),
            model: Family::ReEsCavExp,
            alpha: 0.01,
            estimator: EstimatorConfig::default(),
            window: 1000,
            stride: 1,
            warm_start: false,
            sequential: false,
        }
    }
}

fn forecast_cmd(mut cfg: ForecastConfig, seed: u64, out: &mut Outputs) -> CliResult<Value> {
    cfg.input.resolve()?;
    cfg.estimator.resolve()?;
    let spec = spec_of(cfg.model, cfg.alpha)?;
    let data = cfg.input.load()?;
    let est = cfg.estimator.build(cfg.model, seed)?;
    let rc = RollingConfig {
        window: cfg.window,
        stride: cfg.stride,
        warm_start: cfg.warm_start,
        seed,
        model_id: cfg.model.as_str().to_string(),
        exec: exec_mode(cfg.sequential),
    };
    let res = forecasting::rolling_forecast(&spec, &data, est.as_ref(), &rc)?;
    io::write_forecasts(out.path("forecasts.csv"), &res.records)?;
    out.json(
        "forecast.json",
        &json!({
            "model": cfg.model,
            "forecasts": res.records.len(),
            "refits": res.refits,
            "failures": res.failures,
            "notes": res.notes,
        }),
    )?;
    Ok(serde_json::to_value(&cfg).expect("serializable"))
}

// ---------------------------------------------------------------- backtest

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestCliConfig {
    pub forecasts: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub data_scale: f64,
    /// Quantile level; defaults to the `alpha` column of the forecasts.
    pub alpha: Option<f64>,
    /// Restrict to one model when the file holds several.
    pub model: Option<String>,
    pub vqr_bootstrap: usize,
    pub sequential: bool,
}

impl Default for BacktestCliConfig {
    fn default() -> Self {
        BacktestCliConfig {
            forecasts: None,
            data: None,
            data_scale: 1.0,
            alpha: None,
            model: None,
            vqr_bootstrap: 200,
            sequential: false,
        }
    }
}

fn load_scaled(path: &Path, scale: f64) -> CliResult<Vec<DailyRecord>> {
    let mut d = io::load_daily(path)?;
    for r in &mut d {
        r.ret *= scale;
        r.measure *= scale;
    }
    Ok(d)
}

fn resolve_pair(f: &mut Option<PathBuf>, d: &mut Option<PathBuf>) -> CliResult<()> {
    let fp = f.as_ref().ok_or_else(|| cfg_err("--forecasts is required"))?;
    *f = Some(resolve_input(fp)?);
    let dp = d.as_ref().ok_or_else(|| cfg_err("--data is required"))?;
    *d = Some(resolve_input(dp)?);
    Ok(())
}

fn common_alpha(recs: &[ForecastRecord], given: Option<f64>) -> CliResult<f64> {
    if let Some(a) = given {
        return Ok(a);
    }
    let a = recs.first().map(|r| r.alpha).ok_or_else(|| CliError::Runtime("no forecasts".into()))?;
    if recs.iter().any(|r| r.alpha != a) {
        return Err(cfg_err("forecasts mix several alpha levels; pass --alpha"));
    }
    Ok(a)
}

fn backtest_cmd(mut cfg: BacktestCliConfig, seed: u64, out: &mut Outputs) -> CliResult<Value> {
    resolve_pair(&mut cfg.forecasts, &mut cfg.data)?;
    let mut recs = io::load_forecasts(cfg.forecasts.as_ref().expect("resolved"))?;
    if let Some(m) = &cfg.model {
        recs.retain(|r| &r.model == m);
    }
    let models: std::collections::BTreeSet<&str> = recs.iter().map(|r| r.model.as_str()).collect();
    if models.len() > 1 {
        return Err(cfg_err(format!("forecasts hold several models {models:?}; pass --model")));
    }
    let alpha = common_alpha(&recs, cfg.alpha)?;
    let data = load_scaled(cfg.data.as_ref().expect("resolved"), cfg.data_scale)?;
    let (r, v, e) = forecasting::align(&recs, &data)?;
    let bc = BacktestConfig {
        vqr_bootstrap: cfg.vqr_bootstrap,
        seed,
        exec: exec_mode(cfg.sequential),
    };
    let mut report = scoring::backtest(&r, &v, &e, alpha, &bc)?;
    let failed = recs.iter().filter(|r| !r.is_ok()).count();
    if failed > 0 {
        report.flags.push(format!("{failed} failed forecasts excluded"));
    }
    out.json("report.json", &report)?;
    Ok(serde_json::to_value(&cfg).expect("serializable"))
}

// ---------------------------------------------------------------- mcs

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McsCliConfig {
    /// Forecast files; models are grouped by the `model` column.
    pub forecasts: Vec<PathBuf>,
    pub data: Option<PathBuf>,
    pub data_scale: f64,
    pub alpha: Option<f64>,
    /// `R`, `SQ` or `both`.
    pub method: String,
    pub level: f64,
    pub bootstrap: usize,
    pub block_len: Option<usize>,
    pub sequential: bool,
}

impl Default for McsCliConfig {
    fn default() -> Self {
        McsCliConfig {
            forecasts: Vec::new(),
            data: None,
            data_scale: 1.0,
            alpha: None,
            method: "both".into(),
            level: 0.9,
            bootstrap: 200,
            block_len: None,
            sequential: false,
        }
    }
}

fn mcs_cmd(mut cfg: McsCliConfig, seed: u64, out: &mut Outputs) -> CliResult<Value> {
    if cfg.forecasts.is_empty() {
        return Err(cfg_err("--forecasts is required"));
    }
    let methods: Vec<McsMethod> = if cfg.method.eq_ignore_ascii_case("both") {
        vec![McsMethod::R, McsMethod::SQ]
    } else {
        vec![cfg.method.parse()?]
    };
    cfg.forecasts = cfg.forecasts.iter().map(|p| resolve_input(p)).collect::<CliResult<_>>()?;
    let dp = cfg.data.as_ref().ok_or_else(|| cfg_err("--data is required"))?;
    cfg.data = Some(resolve_input(dp)?);
    let data = load_scaled(cfg.data.as_ref().expect("resolved"), cfg.data_scale)?;

    let mut by_model: BTreeMap<String, BTreeMap<chrono::NaiveDate, ForecastRecord>> = BTreeMap::new();
    let mut all = Vec::new();
    for p in &cfg.forecasts {
        for r in io::load_forecasts(p)? {
            all.push(r.clone());
            by_model.entry(r.model.clone()).or_default().insert(r.date, r);
        }
    }
    let alpha = common_alpha(&all, cfg.alpha)?;
    let dates: Vec<chrono::NaiveDate> = by_model
        .values()
        .next()
        .map(|m| m.keys().copied().collect())
        .unwrap_or_default();
    let common: Vec<chrono::NaiveDate> = dates
        .into_iter()
        .filter(|d| by_model.values().all(|m| m.get(d).is_some_and(|r| r.is_ok())))
        .collect();
    let mut losses = Vec::new();
    for (name, recs) in &by_model {
        let sel: Vec<ForecastRecord> = common.iter().map(|d| recs[d].clone()).collect();
        let (r, v, e) = forecasting::align(&sel, &data)?;
        losses.push((name.clone(), scoring::al_log_score_daily(&r, &v, &e, alpha)?));
    }
    for m in methods {
        let mc = McsConfig {
            method: m,
            level: cfg.level,
            bootstrap: cfg.bootstrap,
            block_len: cfg.block_len,
            seed,
            exec: exec_mode(cfg.sequential),
        };
        let res = scoring::mcs(&losses, &mc)?;
        let name = match m {
            McsMethod::R => "mcs_r.json",
            McsMethod::SQ => "mcs_sq.json",
        };
        out.json(name, &res)?;
    }
    Ok(serde_json::to_value(&cfg).expect("serializable"))
}

// ---------------------------------------------------------------- study

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyKind {
    /// Parameter-recovery replications on the fixed generator.
    Replication,
    /// Rolling four-model comparison on synthetic regime-shift markets.
    Comparison,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub kind: StudyKind,
    pub alpha: f64,
    pub estimator: EstimatorConfig,
    pub sequential: bool,
    // replication
    pub model: Family,
    pub reps: usize,
    pub n: usize,
    pub dgp: DgpParams,
    pub gamma_trials: usize,
    // comparison
    pub worlds: usize,
    pub models: Vec<Family>,
    pub window: usize,
    pub stride: usize,
    pub warm_start: bool,
    pub vqr_bootstrap: usize,
    pub mcs_bootstrap: usize,
    pub mcs_level: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            kind: StudyKind::Replication,
            alpha: 0.01,
            estimator: EstimatorConfig::default(),
            sequential: false,
            model: Family::ReEsCavExp,
            reps: 50,
            n: 1900,
            dgp: DgpParams::default(),
            gamma_trials: 5000,
            worlds: 20,
            models: Family::ALL.to_vec(),
            window: 1000,
            stride: 50,
            warm_start: true,
            vqr_bootstrap: 200,
            mcs_bootstrap: 200,
            mcs_level: 0.9,
        }
    }
}

fn study_cmd(mut cfg: StudyConfig, seed: u64, out: &mut Outputs) -> CliResult<Value> {
    cfg.estimator.resolve()?;
    if cfg.estimator.method == Method::Fixed {
        return Err(cfg_err("study needs method ml or mcmc"));
    }
    let ex = exec_mode(cfg.sequential);
    match cfg.kind {
        StudyKind::Replication => {
            let est = cfg.estimator.build(cfg.model, seed)?;
            let rc = ReplicationConfig {
                reps: cfg.reps,
                family: cfg.model,
                alpha: cfg.alpha,
                dgp: cfg.dgp.spec(cfg.n, 0),
                gamma_trials: cfg.gamma_trials,
                exec: ex,
            };
            let rep = simulation::replication_study(&rc, est.as_ref(), seed)?;
            out.json("replication.json", &rep)?;
            out.text("replication.txt", &rep.to_table())?;
        }
        StudyKind::Comparison => {
            let est = cfg.estimator.build(cfg.model, seed)?;
            let cc = ComparisonConfig {
                alpha: cfg.alpha,
                window: cfg.window,
                stride: cfg.stride,
                warm_start: cfg.warm_start,
                backtest: BacktestConfig {
                    vqr_bootstrap: cfg.vqr_bootstrap,
                    seed,
                    exec: ex,
                },
                mcs: Some(McsConfig {
                    bootstrap: cfg.mcs_bootstrap,
                    level: cfg.mcs_level,
                    seed,
                    exec: ex,
                    ..Default::default()
                }),
                seed,
                exec: ex,
            };
            let res = study::world_study(cfg.worlds, cfg.n, &cfg.models, est.as_ref(), &cc, seed)?;
            for w in &res.worlds {
                let all: Vec<ForecastRecord> = w.report.forecasts.iter().flatten().cloned().collect();
                io::write_forecasts(out.path(&format!("forecasts_{:03}.csv", w.world)), &all)?;
            }
            out.json("comparison.json", &res)?;
            let mut txt = format!(
                "{} worlds; realized families at least as good in {}\nmean rank by joint loss:\n",
                res.worlds.len(),
                res.realized_wins
            );
            for (m, r) in &res.mean_ranks {
                txt.push_str(&format!("  {m:<18} {r:.2}\n"));
            }
            out.text("comparison.txt", &txt)?;
        }
    }
    Ok(serde_json::to_value(&cfg).expect("serializable"))
}

// ---------------------------------------------------------------- dispatch

pub const STOCHASTIC: [&str; 6] = ["simulate", "fit", "forecast", "backtest", "mcs", "study"];

fn parse<T: serde::de::DeserializeOwned>(v: &Value) -> CliResult<T> {
    serde_json::from_value(v.clone()).map_err(|e| cfg_err(e.to_string()))
}

/// Runs `command` with a fully merged config. Returns the resolved config (as
/// stored in the manifest) and the output file names.
pub fn execute(command: &str, config: &Value, seed: Option<u64>, out: &Path) -> CliResult<(Value, Vec<String>)> {
    let mut o = Outputs::new(out)?;
    let resolved = match command {
        "measures" => measures_cmd(parse(config)?, &mut o)?,
        "simulate" => simulate_cmd(parse(config)?, need_seed(seed)?, &mut o)?,
        "fit" => fit_cmd(parse(config)?, need_seed(seed)?, &mut o)?,
        "forecast" => forecast_cmd(parse(config)?, need_seed(seed)?, &mut o)?,
        "backtest" => backtest_cmd(parse(config)?, need_seed(seed)?, &mut o)?,
        "mcs" => mcs_cmd(parse(config)?, need_seed(seed)?, &mut o)?,
        "study" => study_cmd(parse(config)?, need_seed(seed)?, &mut o)?,
        other => return Err(cfg_err(format!("unknown command {other:?}"))),
    };
    Ok((resolved, o.names))
}
