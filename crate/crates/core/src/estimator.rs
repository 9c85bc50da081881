//! Estimators behind a common interface, used by replication studies and
//! rolling forecasts.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::DailyRecord;
use crate::mcmc::{self, McmcConfig};
use crate::mle::{self, MleConfig};
use crate::model::{self, InitPolicy, ModelSpec, ParamVector};
use crate::simulation::{map_truth, DgpSpec};

#[derive(Debug, Clone)]
pub struct Estimate {
    pub params: ParamVector,
    /// One-step-ahead `(VaR, ES)` for the day after the sample.
    pub forecast: (f64, f64),
    pub note: Option<String>,
}

pub trait Estimator: Sync {
    fn name(&self) -> String;

    /// Initial conditions the estimator filters with.
    fn init(&self) -> InitPolicy {
        InitPolicy::default()
    }

    /// Fits on `data`. `warm` is a previous estimate the method may start from.
    fn fit(
        &self,
        spec: &ModelSpec,
        data: &[DailyRecord],
        seed: u64,
        warm: Option<&ParamVector>,
    ) -> Result<Estimate>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlEstimator {
    pub cfg: MleConfig,
    /// Candidate count when a warm start is supplied.
    pub warm_candidates: usize,
}

impl MlEstimator {
    pub fn new(cfg: MleConfig) -> Self {
        MlEstimator {
            warm_candidates: (cfg.n_candidates / 10).max(1),
            cfg,
        }
    }
}

impl Estimator for MlEstimator {
    fn name(&self) -> String {
        "ml".into()
    }

    fn init(&self) -> InitPolicy {
        self.cfg.init
    }

    fn fit(
        &self,
        spec: &ModelSpec,
        data: &[DailyRecord],
        seed: u64,
        warm: Option<&ParamVector>,
    ) -> Result<Estimate> {
        let mut cfg = self.cfg.clone();
        cfg.seed = seed;
        let fit = match warm {
            Some(w) => {
                cfg.n_candidates = self.warm_candidates.max(1);
                mle::fit_ml_with_candidates(spec, data, &cfg, std::slice::from_ref(w))?
            }
            None => mle::fit_ml(spec, data, &cfg)?,
        };
        let (_, forecast) = model::filter_and_forecast(spec, &fit.params, data, &cfg.init)?;
        Ok(Estimate {
            params: fit.params,
            forecast,
            note: fit.warning,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McmcEstimator {
    pub cfg: McmcConfig,
}

impl Estimator for McmcEstimator {
    fn name(&self) -> String {
        "mcmc".into()
    }

    fn init(&self) -> InitPolicy {
        self.cfg.init
    }

    fn fit(
        &self,
        spec: &ModelSpec,
        data: &[DailyRecord],
        seed: u64,
        warm: Option<&ParamVector>,
    ) -> Result<Estimate> {
        let mut cfg = self.cfg.clone();
        cfg.seed = seed;
        if let Some(w) = warm {
            cfg.start = Some(*w);
        }
        let layout = mcmc::BlockLayout::default_for(spec.family);
        let run = mcmc::run_mcmc(spec, data, &layout, &cfg)?;
        let note = (!run.sd_converged).then(|| {
            format!(
                "burn-in hit max epochs ({}) with sd change {:.3}",
                run.epochs, run.last_sd_change
            )
        });
        Ok(Estimate {
            params: run.posterior_mean,
            forecast: run.forecast_mean,
            note,
        })
    }
}

/// Returns fixed parameters regardless of the data.
#[derive(Debug, Clone)]
pub struct FixedParams {
    pub params: ParamVector,
    pub init: InitPolicy,
}

impl Estimator for FixedParams {
    fn name(&self) -> String {
        "fixed".into()
    }

    fn init(&self) -> InitPolicy {
        self.init
    }

    fn fit(
        &self,
        spec: &ModelSpec,
        data: &[DailyRecord],
        _seed: u64,
        _warm: Option<&ParamVector>,
    ) -> Result<Estimate> {
        let (_, forecast) = model::filter_and_forecast(spec, &self.params, data, &self.init)?;
        Ok(Estimate {
            params: self.params,
            forecast,
            note: None,
        })
    }
}

/// Truth of the default generator for the realized EXP family: mapped parameters
/// with `Q_1` at the generator's starting quantile, so the filtered path is the
/// true VaR path. Under the plain EXP family the same values are projected onto
/// its parameters, a plausible but not true model.
pub struct TruthStub(FixedParams);

impl TruthStub {
    pub fn new(dgp: DgpSpec, alpha: f64) -> Self {
        let m = map_truth(&dgp, alpha);
        TruthStub(FixedParams {
            params: m.params_exp,
            init: InitPolicy {
                q1: Some(dgp.stationary_sqrt_h() * m.z),
                x1: None,
            },
        })
    }

    pub fn params(&self) -> &ParamVector {
        &self.0.params
    }
}

impl Estimator for TruthStub {
    fn name(&self) -> String {
        "truth".into()
    }

    fn init(&self) -> InitPolicy {
        self.0.init
    }

    fn fit(
        &self,
        spec: &ModelSpec,
        data: &[DailyRecord],
        seed: u64,
        warm: Option<&ParamVector>,
    ) -> Result<Estimate> {
        debug_assert!(!spec.family.is_ar(), "truth stub has no AR ES parameters");
        let mut e = self.0.fit(spec, data, seed, warm)?;
        e.params = ParamVector::from_slice(spec.family, &e.params.to_vec(spec.family));
        Ok(e)
    }
}
