//! Rolling fixed-window one-step-ahead forecasts.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::Estimator;
use crate::exec::{self, Exec};
use crate::io::DailyRecord;
use crate::model::{self, ModelSpec, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForecastFlag {
    Ok,
    Failed,
}

impl ForecastFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            ForecastFlag::Ok => "ok",
            ForecastFlag::Failed => "failed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ok" | "" => Some(ForecastFlag::Ok),
            "failed" => Some(ForecastFlag::Failed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    /// Day being forecast.
    pub date: NaiveDate,
    pub var: f64,
    pub es: f64,
    pub model: String,
    pub alpha: f64,
    /// Index of the last in-sample record.
    pub origin: usize,
    pub flag: ForecastFlag,
}

impl ForecastRecord {
    pub fn is_ok(&self) -> bool {
        self.flag == ForecastFlag::Ok
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RollingConfig {
    pub window: usize,
    /// Re-estimate every `stride` origins; parameters are reused in between.
    pub stride: usize,
    /// Start each refit from the previous estimate (refits then run in order).
    pub warm_start: bool,
    pub seed: u64,
    pub model_id: String,
    pub exec: Exec,
}

impl RollingConfig {
    pub fn new(window: usize, stride: usize, seed: u64, model_id: impl Into<String>) -> Self {
        RollingConfig {
            window,
            stride,
            warm_start: false,
            seed,
            model_id: model_id.into(),
            exec: Exec::Parallel,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RollingOutput {
    pub records: Vec<ForecastRecord>,
    pub refits: usize,
    pub failures: usize,
    pub stride: usize,
    pub notes: Vec<String>,
}

impl RollingOutput {
    pub fn ok_records(&self) -> impl Iterator<Item = &ForecastRecord> {
        self.records.iter().filter(|r| r.is_ok())
    }
}

/// Forecasts day `o + window` from `data[o..o + window]` for every origin `o`.
pub fn rolling_forecast(
    spec: &ModelSpec,
    data: &[DailyRecord],
    estimator: &dyn Estimator,
    cfg: &RollingConfig,
) -> Result<RollingOutput> {
    spec.validate()?;
    let n = cfg.window;
    if n < 2 || cfg.stride == 0 {
        return Err(Error::Config("window must be >= 2 and stride >= 1".into()));
    }
    if data.len() < n + 1 {
        return Err(Error::TooShort { need: n + 1, got: data.len() });
    }
    let n_origins = data.len() - n;
    let refit_at: Vec<usize> = (0..n_origins).step_by(cfg.stride).collect();
    let fit_one = |k: usize, warm: Option<&ParamVector>| {
        let o = refit_at[k];
        let seed = exec::derive_seed(cfg.seed, o as u64);
        estimator.fit(spec, &data[o..o + n], seed, warm)
    };

    let fits: Vec<Result<crate::estimator::Estimate>> = if cfg.warm_start {
        let mut out = Vec::with_capacity(refit_at.len());
        let mut prev: Option<ParamVector> = None;
        for k in 0..refit_at.len() {
            let r = fit_one(k, prev.as_ref());
            if let Ok(e) = &r {
                prev = Some(e.params);
            }
            out.push(r);
        }
        out
    } else {
        exec::map_indexed(cfg.exec, refit_at.len(), |k| fit_one(k, None))
    };

    let mut notes = Vec::new();
    for (k, f) in fits.iter().enumerate() {
        match f {
            Err(e) => notes.push(format!("origin {}: estimation failed: {e}", refit_at[k] + n - 1)),
            Ok(est) => {
                if let Some(msg) = &est.note {
                    notes.push(format!("origin {}: {msg}", refit_at[k] + n - 1));
                }
            }
        }
    }

    let init = estimator.init();
    let records: Vec<ForecastRecord> = exec::map_indexed(cfg.exec, n_origins, |o| {
        let k = o / cfg.stride;
        let window = &data[o..o + n];
        let forecast = match &fits[k] {
            Ok(est) if o == refit_at[k] => Some(est.forecast),
            Ok(est) => model::filter_and_forecast(spec, &est.params, window, &init)
                .map(|(_, f)| f)
                .ok(),
            Err(_) => None,
        };
        let (var, es, flag) = match forecast {
            Some((v, e)) if v.is_finite() && e.is_finite() => (v, e, ForecastFlag::Ok),
            _ => (f64::NAN, f64::NAN, ForecastFlag::Failed),
        };
        ForecastRecord {
            date: data[o + n].date,
            var,
            es,
            model: cfg.model_id.clone(),
            alpha: spec.alpha,
            origin: o + n - 1,
            flag,
        }
    });
    let failures = records.iter().filter(|r| !r.is_ok()).count();
    for r in records.iter().filter(|r| !r.is_ok()) {
        log::warn!("forecast for {} (origin {}) failed", r.date, r.origin);
    }

    Ok(RollingOutput {
        refits: refit_at.len(),
        failures,
        stride: cfg.stride,
        notes,
        records,
    })
}

/// Aligns forecasts with realised returns, keeping only `ok` records.
/// Returns `(returns, var, es)`.
pub fn align(
    forecasts: &[ForecastRecord],
    data: &[DailyRecord],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut r = Vec::new();
    let mut v = Vec::new();
    let mut e = Vec::new();
    for f in forecasts.iter().filter(|f| f.is_ok()) {
        let idx = data
            .binary_search_by_key(&f.date, |d| d.date)
            .map_err(|_| Error::LengthMismatch(format!("no return for forecast date {}", f.date)))?;
        r.push(data[idx].ret);
        v.push(f.var);
        e.push(f.es);
    }
    Ok((r, v, e))
}
