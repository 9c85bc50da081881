//! Multi-model forecasting comparison and the synthetic regime-shift market
//! used in place of proprietary market data.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::Estimator;
use crate::exec::{self, Exec};
use crate::forecasting::{self, ForecastRecord, RollingConfig};
use crate::io::DailyRecord;
use crate::model::{Family, ModelSpec};
use crate::scoring::{self, BacktestConfig, BacktestReport, McsConfig, McsMethod, McsResult};
use crate::simulation::DgpSpec;

/// Realized-GARCH world whose intercept shifts at two or three random days,
/// moving the long-run volatility level between 0.5x and 3x the base.
pub fn synthetic_market(seed: u64, n: usize) -> DgpSpec {
    let base = DgpSpec {
        n,
        seed: exec::derive_seed(seed, 0),
        ..Default::default()
    };
    let mut rng = exec::item_rng(seed, 1);
    let shifts = rng.random_range(2..=3usize);
    let mut days: Vec<usize> = (0..shifts).map(|_| rng.random_range(n / 10..n.max(20) * 9 / 10)).collect();
    days.sort_unstable();
    days.dedup();
    let regimes = days
        .into_iter()
        .map(|d| (d, rng.random_range(0.005..0.08)))
        .collect();
    DgpSpec { regimes, ..base }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonConfig {
    pub alpha: f64,
    pub window: usize,
    pub stride: usize,
    pub warm_start: bool,
    pub backtest: BacktestConfig,
    /// MCS settings; the method field is overridden to run both R and SQ.
    pub mcs: Option<McsConfig>,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        ComparisonConfig {
            alpha: 0.01,
            window: 1000,
            stride: 25,
            warm_start: true,
            backtest: BacktestConfig::default(),
            mcs: Some(McsConfig::default()),
            seed: 0,
            exec: Exec::Parallel,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelResult {
    pub model: String,
    pub family: Family,
    pub failures: usize,
    pub report: BacktestReport,
    /// Joint loss summed over the days every model forecast successfully.
    pub common_joint_loss: f64,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub alpha: f64,
    pub common_days: usize,
    pub models: Vec<ModelResult>,
    pub mcs: Vec<McsResult>,
    #[serde(skip)]
    pub forecasts: Vec<Vec<ForecastRecord>>,
}

impl ComparisonReport {
    pub fn model(&self, family: Family) -> Option<&ModelResult> {
        self.models.iter().find(|m| m.family == family)
    }

    /// Mean-rank style summary: models sorted by common joint loss.
    pub fn ranking(&self) -> Vec<(&str, f64)> {
        let mut v: Vec<(&str, f64)> = self.models.iter().map(|m| (m.model.as_str(), m.common_joint_loss)).collect();
        v.sort_by(|a, b| a.1.total_cmp(&b.1));
        v
    }
}

/// Rolling forecasts for each family, full backtests, and the MCS over the
/// days on which every model produced a forecast.
pub fn compare_models(
    data: &[DailyRecord],
    families: &[Family],
    estimator: &dyn Estimator,
    cfg: &ComparisonConfig,
) -> Result<ComparisonReport> {
    if families.is_empty() {
        return Err(Error::Config("no models to compare".into()));
    }
    let mut outputs = Vec::with_capacity(families.len());
    for (i, &family) in families.iter().enumerate() {
        let spec = ModelSpec::new(family, cfg.alpha)?;
        let rc = RollingConfig {
            window: cfg.window,
            stride: cfg.stride,
            warm_start: cfg.warm_start,
            seed: exec::derive_seed(cfg.seed, i as u64),
            model_id: family.as_str().to_string(),
            exec: cfg.exec,
        };
        outputs.push(forecasting::rolling_forecast(&spec, data, estimator, &rc)?);
    }

    // Days with an ok forecast from every model.
    let n_days = outputs[0].records.len();
    let common: Vec<usize> = (0..n_days)
        .filter(|&d| outputs.iter().all(|o| o.records[d].is_ok()))
        .collect();
    if common.len() < 2 {
        return Err(Error::Degenerate("fewer than two days forecast by every model".into()));
    }

    let mut models = Vec::with_capacity(families.len());
    let mut daily = Vec::with_capacity(families.len());
    for (o, &family) in outputs.iter().zip(families) {
        let (r, v, e) = forecasting::align(&o.records, data)?;
        let report = scoring::backtest(&r, &v, &e, cfg.alpha, &cfg.backtest)?;
        let offset = cfg.window;
        let pick = |f: fn(&ForecastRecord) -> f64| -> Vec<f64> { common.iter().map(|&d| f(&o.records[d])).collect() };
        let cr: Vec<f64> = common.iter().map(|&d| data[d + offset].ret).collect();
        let loss = scoring::al_log_score_daily(&cr, &pick(|f| f.var), &pick(|f| f.es), cfg.alpha)?;
        models.push(ModelResult {
            model: family.as_str().to_string(),
            family,
            failures: o.failures,
            report,
            common_joint_loss: loss.iter().sum(),
            notes: o.notes.clone(),
        });
        daily.push((family.as_str().to_string(), loss));
    }

    let mut mcs = Vec::new();
    if let Some(base) = &cfg.mcs {
        if families.len() >= 2 {
            for method in [McsMethod::R, McsMethod::SQ] {
                mcs.push(scoring::mcs(&daily, &McsConfig { method, ..base.clone() })?);
            }
        }
    }

    Ok(ComparisonReport {
        alpha: cfg.alpha,
        common_days: common.len(),
        models,
        mcs,
        forecasts: outputs.into_iter().map(|o| o.records).collect(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldOutcome {
    pub world: usize,
    pub seed: u64,
    pub regimes: Vec<(usize, f64)>,
    /// Common-day joint loss per model.
    pub losses: Vec<(String, f64)>,
    /// Mean realized-family loss <= mean plain-family loss; `None` unless both
    /// kinds are present.
    pub realized_better: Option<bool>,
    pub report: ComparisonReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldStudy {
    pub worlds: Vec<WorldOutcome>,
    pub realized_wins: usize,
    /// Average rank of each model by joint loss (1 = best).
    pub mean_ranks: Vec<(String, f64)>,
}

/// Runs [`compare_models`] on `worlds` independent synthetic markets of length
/// `n`. World `w` is generated and scored with seeds derived from `(seed, w)`.
pub fn world_study(
    worlds: usize,
    n: usize,
    families: &[Family],
    estimator: &dyn Estimator,
    cfg: &ComparisonConfig,
    seed: u64,
) -> Result<WorldStudy> {
    if worlds == 0 {
        return Err(Error::Config("worlds must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(worlds);
    let mut rank_sum = vec![0.0; families.len()];
    for w in 0..worlds {
        let ws = exec::derive_seed(seed, w as u64);
        let dgp = synthetic_market(ws, n);
        let data = crate::simulation::simulate_dgp(&dgp).records();
        let wcfg = ComparisonConfig {
            seed: ws,
            backtest: BacktestConfig { seed: ws, ..cfg.backtest.clone() },
            mcs: cfg.mcs.clone().map(|m| McsConfig { seed: ws, ..m }),
            ..cfg.clone()
        };
        let report = compare_models(&data, families, estimator, &wcfg)?;
        let losses: Vec<(String, f64)> =
            report.models.iter().map(|m| (m.model.clone(), m.common_joint_loss)).collect();
        let mean_of = |realized: bool| {
            let v: Vec<f64> = report
                .models
                .iter()
                .filter(|m| m.family.is_realized() == realized)
                .map(|m| m.common_joint_loss)
                .collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        let realized_better = match (mean_of(true), mean_of(false)) {
            (Some(re), Some(plain)) => Some(re <= plain),
            _ => None,
        };
        let mut order: Vec<usize> = (0..losses.len()).collect();
        order.sort_by(|&a, &b| losses[a].1.total_cmp(&losses[b].1));
        for (rank, &i) in order.iter().enumerate() {
            rank_sum[i] += (rank + 1) as f64;
        }
        log::info!("world {w}: realized better = {realized_better:?}");
        out.push(WorldOutcome {
            world: w,
            seed: ws,
            regimes: dgp.regimes.clone(),
            losses,
            realized_better,
            report,
        });
    }
    let realized_wins = out.iter().filter(|o| o.realized_better == Some(true)).count();
    let mean_ranks = families
        .iter()
        .zip(&rank_sum)
        .map(|(f, s)| (f.as_str().to_string(), s / worlds as f64))
        .collect();
    Ok(WorldStudy {
        worlds: out,
        realized_wins,
        mean_ranks,
    })
}
