//! Joint Value-at-Risk / Expected Shortfall modelling with realized measures.
//!
//! The crate covers the full pipeline: intraday data to daily realized
//! measures ([`measures`]), the quantile/ES recursions ([`model`]), the
//! asymmetric-Laplace likelihood ([`likelihood`]), estimation by maximum
//! likelihood ([`mle`]) or adaptive MCMC ([`mcmc`]), simulation from a
//! Realized-GARCH generator ([`simulation`]), rolling forecasts
//! ([`forecasting`]), backtesting ([`scoring`]) and multi-model comparison
//! ([`study`]).
//!
//! Data-parallel loops go through [`exec`]; building without the default
//! `parallel` feature runs them sequentially.

pub mod error;
pub mod estimator;
pub mod exec;
pub mod forecasting;
pub mod io;
pub mod likelihood;
pub mod mcmc;
pub mod measures;
pub mod mle;
pub mod model;
pub mod normal;
pub mod optim;
pub mod scoring;
pub mod simulation;
pub mod stats;
pub mod study;

pub use error::{Error, Result};
pub use model::{Family, ModelSpec, Param, ParamVector};
