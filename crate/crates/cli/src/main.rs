//! `tailrisk`: batch front end for realized VaR/ES modelling.
//!
//! Each command merges built-in defaults, an optional TOML config of flat
//! dotted keys (`--config`), typed flags and `--set key=value` overrides, then
//! writes its outputs plus a `manifest.json` into `--out`. `tailrisk replay
//! <manifest>` reruns a recorded command and reproduces its outputs exactly.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 bad arguments, 3 invalid
//! configuration, 4 missing input file.

mod commands;
mod config;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use config::Overrides;
use error::CliError;

#[derive(Parser)]
#[command(name = "tailrisk", version, about = "Realized joint VaR/ES modelling and backtesting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for data-parallel loops (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Args)]
struct Common {
    /// TOML config file with flat dotted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Override any config key, e.g. `--set mcmc.epoch_len=5000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct InputArgs {
    /// Daily CSV with `date,return,measure`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Intraday CSV; the realized measure is computed on load.
    #[arg(long)]
    intraday: Option<PathBuf>,
    /// Realized measure: rv, rr, scrv, scrr, ssrv, ssrr, absreturn, dailyrange.
    #[arg(long)]
    measure: Option<String>,
    /// Multiply returns and measures by this factor after loading.
    #[arg(long)]
    data_scale: Option<f64>,
}

impl InputArgs {
    fn apply(&self, ov: &mut Overrides, prefix: &str) {
        ov.put(&format!("{prefix}data"), self.data.as_ref());
        ov.put(&format!("{prefix}intraday"), self.intraday.as_ref());
        ov.put(&format!("{prefix}measure.kind"), self.measure.as_ref().map(|m| m.to_ascii_lowercase()));
        ov.put(&format!("{prefix}data_scale"), self.data_scale);
    }
}

#[derive(Args)]
struct ModelArgs {
    /// es-caviar-ar, es-caviar-exp, re-es-caviar-ar or re-es-caviar-exp.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// ml, mcmc or fixed.
    #[arg(long)]
    method: Option<String>,
    /// Parameter JSON for `--method fixed`.
    #[arg(long)]
    params: Option<PathBuf>,
}

impl ModelArgs {
    fn apply(&self, ov: &mut Overrides) {
        ov.put("model", self.model.as_ref());
        ov.put("alpha", self.alpha);
        ov.put("estimator.method", self.method.as_ref());
        ov.put("estimator.params", self.params.as_ref());
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build a daily return/measure series from intraday prices.
    Measures {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        freq: Option<u32>,
        #[arg(long)]
        offset: Option<u32>,
        #[arg(long)]
        q: Option<usize>,
        /// variance or volatility.
        #[arg(long)]
        scale: Option<String>,
    },
    /// Simulate datasets from the Realized-GARCH generator.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Add random intercept regime shifts.
        #[arg(long)]
        market: bool,
    },
    /// Estimate one model on one series.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Rolling-window one-step-ahead forecasts.
    Forecast {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Backtest a forecast file against realized returns.
    Backtest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        forecasts: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        model: Option<String>,
    },
    /// Model confidence set over the joint loss of several forecast series.
    Mcs {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
        #[arg(long, num_args = 1..)]
        forecasts: Vec<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// R, SQ or both.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        level: Option<f64>,
    },
    /// Replication study or multi-world model comparison.
    Study {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
        /// replication or comparison.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        worlds: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Rerun the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    command: String,
    version: String,
    config: Value,
    seed: Option<u64>,
    started: String,
    finished: String,
    outputs: Vec<String>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn merged<T>(common: &Common, mut ov: Overrides) -> Result<Value, CliError>
where
    T: Serialize + serde::de::DeserializeOwned + Default,
{
    ov.set(&common.set)?;
    let cfg: T = config::merge(common.config.as_deref(), ov)?;
    Ok(serde_json::to_value(cfg).expect("config serializes"))
}

fn run_and_record(command: &str, config: &Value, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    let started = now();
    let (resolved, mut outputs) = commands::execute(command, config, seed, out)?;
    outputs.sort();
    let manifest = Manifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: resolved,
        seed,
        started,
        finished: now(),
        outputs,
    };
    tailrisk_core::io::write_json(out.join("manifest.json"), &manifest)?;
    Ok(())
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    use commands::*;
    match cmd {
        Command::Measures { common, input, freq, offset, q, scale } => {
            let mut ov = Overrides::default();
            input.apply(&mut ov, "input.");
            ov.put("input.measure.freq", freq);
            ov.put("input.measure.offset", offset);
            ov.put("input.measure.q", q);
            ov.put("input.measure.scale", scale.map(|s| s.to_ascii_lowercase()));
            let cfg = merged::<MeasuresConfig>(&common, ov)?;
            run_and_record("measures", &cfg, None, &common.out)
        }
        Command::Simulate { common, seed, reps, n, alpha, market } => {
            let mut ov = Overrides::default();
            ov.put("reps", reps);
            ov.put("n", n);
            ov.put("alpha", alpha);
            ov.put("market", market.then_some(true));
            let cfg = merged::<SimulateConfig>(&common, ov)?;
            run_and_record("simulate", &cfg, Some(seed), &common.out)
        }
        Command::Fit { common, seed, input, model } => {
            let mut ov = Overrides::default();
            input.apply(&mut ov, "input.");
            model.apply(&mut ov);
            let cfg = merged::<FitConfig>(&common, ov)?;
            run_and_record("fit", &cfg, Some(seed), &common.out)
        }
        Command::Forecast { common, seed, input, model, window, stride } => {
            let mut ov = Overrides::default();
            input.apply(&mut ov, "input.");
            model.apply(&mut ov);
            ov.put("window", window);
            ov.put("stride", stride);
            let cfg = merged::<ForecastConfig>(&common, ov)?;
            run_and_record("forecast", &cfg, Some(seed), &common.out)
        }
        Command::Backtest { common, seed, forecasts, data, alpha, model } => {
            let mut ov = Overrides::default();
            ov.put("forecasts", forecasts);
            ov.put("data", data);
            ov.put("alpha", alpha);
            ov.put("model", model);
            let cfg = merged::<BacktestCliConfig>(&common, ov)?;
            run_and_record("backtest", &cfg, Some(seed), &common.out)
        }
        Command::Mcs { common, seed, forecasts, data, method, level } => {
            let mut ov = Overrides::default();
            ov.put("forecasts", (!forecasts.is_empty()).then_some(forecasts));
            ov.put("data", data);
            ov.put("method", method);
            ov.put("level", level);
            let cfg = merged::<McsCliConfig>(&common, ov)?;
            run_and_record("mcs", &cfg, Some(seed), &common.out)
        }
        Command::Study { common, seed, kind, model, method, reps, worlds, n } => {
            let mut ov = Overrides::default();
            ov.put("kind", kind);
            ov.put("model", model);
            ov.put("estimator.method", method);
            ov.put("reps", reps);
            ov.put("worlds", worlds);
            ov.put("n", n);
            let cfg = merged::<StudyConfig>(&common, ov)?;
            run_and_record("study", &cfg, Some(seed), &common.out)
        }
        Command::Replay { manifest, out } => {
            let text = std::fs::read_to_string(&manifest).map_err(|_| CliError::MissingFile(manifest.clone()))?;
            let m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("manifest: {e}")))?;
            if STOCHASTIC.contains(&m.command.as_str()) && m.seed.is_none() {
                return Err(CliError::Config("manifest lacks a seed".into()));
            }
            run_and_record(&m.command, &m.config, m.seed, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("error: --threads must be >= 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
