//! Forecast evaluation: violation rate, losses, coverage backtests and the
//! model confidence set.

mod backtests;
mod mcs;
mod vqr;

pub use backtests::{cc_test, dq_test, uc_test, CcResult};
pub use mcs::{mcs, Elimination, McsConfig, McsMethod, McsResult};
pub use vqr::{quantile_regression, vqr_test, VqrResult};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::likelihood;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub stat: f64,
    pub pvalue: f64,
    pub reject_5pct: bool,
}

impl TestResult {
    pub fn new(stat: f64, pvalue: f64) -> Self {
        let pvalue = pvalue.clamp(0.0, 1.0);
        TestResult {
            stat,
            pvalue,
            reject_5pct: pvalue < 0.05,
        }
    }

    /// Placeholder for a test that could not be computed.
    pub fn undefined() -> Self {
        TestResult {
            stat: f64::NAN,
            pvalue: f64::NAN,
            reject_5pct: false,
        }
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b || a == 0 {
        return Err(Error::LengthMismatch(format!("{a} returns vs {b} forecasts")));
    }
    Ok(())
}

/// Violation indicators `r_t < VaR_t`.
pub fn hits(returns: &[f64], var: &[f64]) -> Vec<bool> {
    returns.iter().zip(var).map(|(r, v)| r < v).collect()
}

pub fn n_violations(returns: &[f64], var: &[f64]) -> usize {
    returns.iter().zip(var).filter(|(r, v)| r < v).count()
}

pub fn vrate(returns: &[f64], var: &[f64]) -> Result<f64> {
    check_lengths(returns.len(), var.len())?;
    Ok(n_violations(returns, var) as f64 / returns.len() as f64)
}

/// `sum_t (alpha - I(r_t < Q_t)) (r_t - Q_t)`.
pub fn quantile_loss(returns: &[f64], var: &[f64], alpha: f64) -> Result<f64> {
    check_lengths(returns.len(), var.len())?;
    Ok(returns
        .iter()
        .zip(var)
        .map(|(&r, &q)| (alpha - if r < q { 1.0 } else { 0.0 }) * (r - q))
        .sum())
}

/// Per-day joint loss, the negative AL log density.
pub fn al_log_score_daily(returns: &[f64], var: &[f64], es: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_lengths(returns.len(), var.len())?;
    check_lengths(returns.len(), es.len())?;
    returns
        .iter()
        .zip(var)
        .zip(es)
        .enumerate()
        .map(|(t, ((&r, &q), &e))| {
            if !(e < 0.0) {
                return Err(Error::NonNegativeEs { t, value: e });
            }
            Ok(-likelihood::al_term(r, q, e, alpha))
        })
        .collect()
}

pub fn al_log_score(returns: &[f64], var: &[f64], es: &[f64], alpha: f64) -> Result<f64> {
    Ok(al_log_score_daily(returns, var, es, alpha)?.iter().sum())
}

/// Share of days with `r_t < ES_t` (descriptive only).
pub fn es_rate(returns: &[f64], es: &[f64]) -> Result<f64> {
    check_lengths(returns.len(), es.len())?;
    Ok(returns.iter().zip(es).filter(|(r, e)| r < e).count() as f64 / returns.len() as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub vqr_bootstrap: usize,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            vqr_bootstrap: 200,
            seed: 0,
            exec: Exec::Parallel,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacktestReport {
    pub vrate: f64,
    pub n_violations: usize,
    pub quantile_loss: f64,
    pub joint_loss: f64,
    pub uc: TestResult,
    pub cc: TestResult,
    pub dq1: TestResult,
    pub dq4: TestResult,
    pub vqr: TestResult,
    pub flags: Vec<String>,
    pub es_rate: f64,
    pub n: usize,
}

/// Full backtest of one forecast series.
pub fn backtest(returns: &[f64], var: &[f64], es: &[f64], alpha: f64, cfg: &BacktestConfig) -> Result<BacktestReport> {
    check_lengths(returns.len(), var.len())?;
    check_lengths(returns.len(), es.len())?;
    let m = returns.len();
    let h = hits(returns, var);
    let x = h.iter().filter(|&&b| b).count();
    let mut flags = Vec::new();

    let uc = uc_test(x, m, alpha)?;
    let cc = cc_test(&h, alpha)?;
    if cc.degenerate {
        flags.push("cc: degenerate transition table, LR_ind set to 0".to_string());
    }
    let mut guarded = |name: &str, r: Result<TestResult>| match r {
        Ok(t) => t,
        Err(e) => {
            flags.push(format!("{name}: {e}"));
            TestResult::undefined()
        }
    };
    let dq1 = guarded("dq1", dq_test(returns, var, alpha, 1));
    let dq4 = guarded("dq4", dq_test(returns, var, alpha, 4));
    let vqr = guarded(
        "vqr",
        vqr_test(returns, var, alpha, cfg.vqr_bootstrap, cfg.seed, cfg.exec).map(|v| v.test),
    );

    Ok(BacktestReport {
        vrate: x as f64 / m as f64,
        n_violations: x,
        quantile_loss: quantile_loss(returns, var, alpha)?,
        joint_loss: al_log_score(returns, var, es, alpha)?,
        uc,
        cc: cc.test,
        dq1,
        dq4,
        vqr,
        flags,
        es_rate: es_rate(returns, es)?,
        n: m,
    })
}
