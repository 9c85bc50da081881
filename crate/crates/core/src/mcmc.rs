//! Adaptive block Metropolis sampler.
//!
//! Burn-in runs in epochs. Within an epoch each block takes a random-walk step
//! drawn from an equal-weight mixture of `N(0, C_i s_b Sigma_b)`, and the block
//! scale `s_b` follows a Robbins-Monro update toward the block's target
//! acceptance rate after every batch of 100 iterations. Between epochs
//! `Sigma_b` is refreshed from the post-discard draws. Burn-in stops once the
//! mean absolute relative change of the parameter standard deviations drops
//! below the threshold, or at `max_epochs`. A final independence epoch then
//! proposes the whole vector from the mixture `N(mean, C_i Sigma)` built on the
//! last burn-in epoch.

use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::DailyRecord;
use crate::likelihood;
use crate::mle::{self, MleConfig};
use crate::model::{self, Family, InitPolicy, ModelSpec, Param, ParamVector};
use crate::stats;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub blocks: Vec<Vec<Param>>,
}

impl BlockLayout {
    pub fn default_for(family: Family) -> Self {
        let mut blocks = Vec::new();
        if family.is_realized() {
            blocks.push(vec![Param::Beta0, Param::Beta1, Param::Beta2, Param::Phi]);
            blocks.push(vec![Param::Xi, Param::Tau1, Param::Tau2, Param::SigmaU]);
        } else {
            blocks.push(vec![Param::Beta0, Param::Beta1, Param::Beta2]);
        }
        if family.is_ar() {
            blocks.push(vec![Param::Gamma0, Param::Gamma1, Param::Gamma2]);
        } else {
            blocks.push(vec![Param::Gamma0]);
        }
        BlockLayout { blocks }
    }

    /// Checks the blocks partition the family's parameters.
    pub fn validate(&self, family: Family) -> Result<()> {
        let mut seen: Vec<Param> = self.blocks.iter().flatten().copied().collect();
        let n = seen.len();
        seen.sort_by_key(|p| *p as usize);
        seen.dedup();
        let mut want = family.params().to_vec();
        want.sort_by_key(|p| *p as usize);
        if seen.len() != n || seen != want || self.blocks.iter().any(|b| b.is_empty()) {
            return Err(Error::Config(format!(
                "block layout does not partition the {family} parameters"
            )));
        }
        Ok(())
    }

    /// Positions of each block's parameters in `family.params()` order.
    pub fn indices(&self, family: Family) -> Vec<Vec<usize>> {
        let order = family.params();
        self.blocks
            .iter()
            .map(|b| {
                b.iter()
                    .map(|p| order.iter().position(|q| q == p).expect("validated layout"))
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McmcConfig {
    pub epoch_len: usize,
    pub discard: usize,
    pub sd_threshold: f64,
    pub max_epochs: usize,
    pub imh_len: usize,
    /// Proposal covariance multipliers of the three mixture components.
    pub scales: [f64; 3],
    pub weights: [f64; 3],
    pub batch: usize,
    /// Robbins-Monro gain.
    pub gain: f64,
    pub seed: u64,
    /// Candidates of the ML pre-fit that supplies the starting point.
    pub init_candidates: usize,
    pub init_evals: usize,
    /// Prior support of `gamma0` in the EXP families. The likelihood flattens as
    /// `gamma0 -> -inf` (ES -> VaR), so a flat prior needs a bounded range.
    pub exp_gamma0_range: (f64, f64),
    /// Explicit starting point; skips the pre-fit.
    #[serde(skip)]
    pub start: Option<ParamVector>,
    pub init: InitPolicy,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            epoch_len: 20_000,
            discard: 2_000,
            sd_threshold: 0.10,
            max_epochs: 6,
            imh_len: 10_000,
            scales: [1.0, 100.0, 0.01],
            weights: [1.0 / 3.0; 3],
            batch: 100,
            gain: 1.0,
            seed: 0,
            init_candidates: 2_000,
            init_evals: 1_500,
            exp_gamma0_range: (-5.0, 1.0),
            start: None,
            init: InitPolicy::default(),
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.discard >= self.epoch_len || self.discard >= self.imh_len {
            return bad("discard must be smaller than the epoch and IMH lengths");
        }
        if !(self.sd_threshold > 0.0) {
            return bad("sd threshold must be > 0");
        }
        let (g_lo, g_hi) = self.exp_gamma0_range;
        if !(g_lo < g_hi) {
            return bad("exp_gamma0_range must be an increasing pair");
        }
        if self.max_epochs == 0 || self.batch == 0 {
            return bad("max_epochs and batch must be >= 1");
        }
        if self.scales.iter().any(|c| !(*c > 0.0)) {
            return bad("proposal scales must be > 0");
        }
        let w: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|w| !(*w >= 0.0)) || !(w > 0.0) {
            return bad("mixture weights must be non-negative with positive sum");
        }
        Ok(())
    }
}

/// Target acceptance rate for a block of dimension `d`.
pub fn target_rate(d: usize) -> f64 {
    match d {
        1 => 0.44,
        2..=4 => 0.35,
        _ => 0.234,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Acceptance {
    pub accepted: usize,
    pub proposed: usize,
}

impl Acceptance {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Chain {
    /// All iterates, burn-in epochs followed by the independence epoch.
    pub iterates: Vec<Vec<f64>>,
    /// Start index of each epoch in `iterates`; the last one is the IMH epoch.
    pub epoch_starts: Vec<usize>,
    /// Acceptance counts per burn-in epoch and block; the final entry holds the
    /// single joint count of the independence epoch.
    pub acceptance: Vec<Vec<Acceptance>>,
    pub blocks: Vec<Vec<usize>>,
    pub discard: usize,
    pub seed: u64,
}

impl Chain {
    /// Post-discard draws of the final (independence) epoch.
    pub fn retained(&self) -> &[Vec<f64>] {
        let start = *self.epoch_starts.last().expect("at least one epoch") + self.discard;
        &self.iterates[start.min(self.iterates.len())..]
    }

    /// Retained draws of coordinate `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.retained().iter().map(|x| x[j]).collect()
    }

    pub fn dim(&self) -> usize {
        self.iterates.first().map_or(0, |x| x.len())
    }
}

#[derive(Debug, Clone)]
pub struct SamplerOutput {
    pub chain: Chain,
    pub epochs: usize,
    pub sd_converged: bool,
    pub last_sd_change: f64,
}

struct Mvn {
    chol: DMatrix<f64>,
    log_det: f64,
}

impl Mvn {
    fn new(cov: &DMatrix<f64>) -> Result<Self> {
        let d = cov.nrows();
        let mut jitter = 1e-10;
        for _ in 0..12 {
            let c = cov + DMatrix::identity(d, d) * jitter;
            if let Some(ch) = c.cholesky() {
                let l = ch.l();
                let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
                return Ok(Mvn { chol: l, log_det });
            }
            jitter *= 100.0;
        }
        Err(Error::Singular("proposal covariance is not positive definite".into()))
    }

    fn draw<R: Rng>(&self, rng: &mut R, scale: f64) -> DVector<f64> {
        let d = self.chol.nrows();
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.chol * z) * scale.sqrt()
    }

    /// Log density of `N(0, scale * Sigma)` at `dx`.
    fn log_pdf(&self, dx: &DVector<f64>, scale: f64) -> f64 {
        let d = dx.len() as f64;
        let y = self
            .chol
            .solve_lower_triangular(dx)
            .expect("cholesky factor is invertible");
        -0.5 * (d * LN_2PI + d * scale.ln() + self.log_det + y.norm_squared() / scale)
    }
}

fn pick<R: Rng>(rng: &mut R, weights: &[f64; 3]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

fn block_cov(draws: &[Vec<f64>], idx: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
    let d = idx.len();
    let n = draws.len() as f64;
    let mean = DVector::from_fn(d, |i, _| draws.iter().map(|x| x[idx[i]]).sum::<f64>() / n);
    let mut cov = DMatrix::zeros(d, d);
    for x in draws {
        let v = DVector::from_fn(d, |i, _| x[idx[i]] - mean[i]);
        cov += &v * v.transpose();
    }
    cov /= (n - 1.0).max(1.0);
    (mean, cov)
}

fn sds(draws: &[Vec<f64>], dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|j| stats::std_dev(&draws.iter().map(|x| x[j]).collect::<Vec<_>>()))
        .collect()
}

/// Mean absolute relative change of the standard deviations.
fn sd_change(old: &[f64], new: &[f64]) -> f64 {
    let terms: Vec<f64> = old
        .iter()
        .zip(new)
        .map(|(o, n)| if *o > 0.0 { ((n - o) / o).abs() } else if *n > 0.0 { f64::INFINITY } else { 0.0 })
        .collect();
    stats::mean(&terms)
}

/// Runs the sampler on an arbitrary log target (`-inf` outside the support).
pub fn run_sampler<F>(log_target: F, x0: &[f64], blocks: &[Vec<usize>], cfg: &McmcConfig) -> Result<SamplerOutput>
where
    F: Fn(&[f64]) -> f64,
{
    cfg.validate()?;
    let dim = x0.len();
    let mut x = x0.to_vec();
    let mut lp = log_target(&x);
    if !lp.is_finite() {
        return Err(Error::Mcmc("log target is not finite at the initial point".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut covs: Vec<DMatrix<f64>> = blocks
        .iter()
        .map(|b| DMatrix::identity(b.len(), b.len()) * (2.38 / (b.len() as f64).sqrt()))
        .collect();
    let mut log_scale = vec![0.0f64; blocks.len()];

    let total_len = cfg.max_epochs * cfg.epoch_len + cfg.imh_len;
    let mut iterates: Vec<Vec<f64>> = Vec::with_capacity(total_len);
    let mut epoch_starts = Vec::new();
    let mut acceptance = Vec::new();
    let mut prev_sds: Option<Vec<f64>> = None;
    let mut sd_converged = false;
    let mut last_sd_change = f64::INFINITY;
    let mut epochs = 0;

    for epoch in 1..=cfg.max_epochs {
        epochs = epoch;
        epoch_starts.push(iterates.len());
        let mvns: Vec<Mvn> = covs.iter().map(Mvn::new).collect::<Result<_>>()?;
        let mut acc = vec![Acceptance::default(); blocks.len()];
        let mut batch_acc = vec![0usize; blocks.len()];
        for it in 0..cfg.epoch_len {
            for (b, idx) in blocks.iter().enumerate() {
                let c = cfg.scales[pick(&mut rng, &cfg.weights)] * log_scale[b].exp();
                let step = mvns[b].draw(&mut rng, c);
                let mut y = x.clone();
                for (k, &j) in idx.iter().enumerate() {
                    y[j] += step[k];
                }
                let lq = log_target(&y);
                acc[b].proposed += 1;
                if lq.is_finite() && rng.random::<f64>().ln() < lq - lp {
                    x = y;
                    lp = lq;
                    acc[b].accepted += 1;
                    batch_acc[b] += 1;
                }
            }
            iterates.push(x.clone());
            if (it + 1) % cfg.batch == 0 {
                for (b, idx) in blocks.iter().enumerate() {
                    let rate = batch_acc[b] as f64 / cfg.batch as f64;
                    log_scale[b] += cfg.gain * (rate - target_rate(idx.len())) / epoch as f64;
                    batch_acc[b] = 0;
                }
            }
        }
        let stuck = acc.iter().any(|a| a.accepted == 0);
        if stuck && epoch == cfg.max_epochs {
            return Err(Error::Mcmc(format!(
                "epoch {epoch}: a block rejected every proposal (degenerate start?)"
            )));
        }
        acceptance.push(acc.clone());

        let kept = &iterates[epoch_starts[epoch - 1] + cfg.discard..];
        let new_sds = sds(kept, dim);
        for (b, idx) in blocks.iter().enumerate() {
            if acc[b].accepted == 0 {
                // No draws to estimate from: keep the shape, carry the learned scale.
                covs[b] *= log_scale[b].exp();
                log_scale[b] = 0.0;
                continue;
            }
            let (_, cov) = block_cov(kept, idx);
            covs[b] = cov;
            log_scale[b] = (2.38f64.powi(2) / idx.len() as f64).ln();
        }
        if stuck {
            prev_sds = None;
            continue;
        }
        if let Some(old) = &prev_sds {
            last_sd_change = sd_change(old, &new_sds);
            if last_sd_change < cfg.sd_threshold {
                sd_converged = true;
                break;
            }
        }
        prev_sds = Some(new_sds);
    }

    // Joint independence epoch around the last burn-in epoch's moments.
    let last_kept = &iterates[*epoch_starts.last().expect("ran an epoch") + cfg.discard..];
    let all: Vec<usize> = (0..dim).collect();
    let (mean, cov) = block_cov(last_kept, &all);
    let mvn = Mvn::new(&cov)?;
    let wsum: f64 = cfg.weights.iter().sum();
    let log_q = |x: &[f64]| -> f64 {
        let dx = DVector::from_fn(dim, |i, _| x[i] - mean[i]);
        let terms: Vec<f64> = cfg
            .weights
            .iter()
            .zip(&cfg.scales)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, c)| (w / wsum).ln() + mvn.log_pdf(&dx, *c))
            .collect();
        let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
    };

    epoch_starts.push(iterates.len());
    let mut acc = Acceptance::default();
    let mut lq_cur = log_q(&x);
    for _ in 0..cfg.imh_len {
        let c = cfg.scales[pick(&mut rng, &cfg.weights)];
        let step = mvn.draw(&mut rng, c);
        let y: Vec<f64> = (0..dim).map(|i| mean[i] + step[i]).collect();
        let lt = log_target(&y);
        acc.proposed += 1;
        if lt.is_finite() {
            let lq_new = log_q(&y);
            if rng.random::<f64>().ln() < (lt - lp) + (lq_cur - lq_new) {
                x = y;
                lp = lt;
                lq_cur = lq_new;
                acc.accepted += 1;
            }
        }
        iterates.push(x.clone());
    }
    if acc.accepted == 0 {
        log::warn!("independence epoch accepted no proposals");
    }
    acceptance.push(vec![acc]);

    Ok(SamplerOutput {
        chain: Chain {
            iterates,
            epoch_starts,
            acceptance,
            blocks: blocks.to_vec(),
            discard: cfg.discard,
            seed: cfg.seed,
        },
        epochs,
        sd_converged,
        last_sd_change,
    })
}

#[derive(Debug, Clone)]
pub struct McmcRun {
    pub family: Family,
    pub chain: Chain,
    pub start: ParamVector,
    pub posterior_mean: ParamVector,
    pub posterior_sd: ParamVector,
    /// One-step `(VaR, ES)` forecast of every retained iterate.
    pub forecasts: Vec<(f64, f64)>,
    pub forecast_mean: (f64, f64),
    pub epochs: usize,
    pub sd_converged: bool,
    pub last_sd_change: f64,
}

impl McmcRun {
    pub fn summary_json(&self) -> serde_json::Value {
        let acc: Vec<Vec<f64>> = self
            .chain
            .acceptance
            .iter()
            .map(|e| e.iter().map(Acceptance::rate).collect())
            .collect();
        serde_json::json!({
            "posterior_mean": self.posterior_mean.to_json(self.family),
            "posterior_sd": self.posterior_sd.to_json(self.family),
            "var_next": self.forecast_mean.0,
            "es_next": self.forecast_mean.1,
            "epochs": self.epochs,
            "sd_converged": self.sd_converged,
            "last_sd_change": self.last_sd_change,
            "retained": self.chain.retained().len(),
            "acceptance_by_epoch": acc,
        })
    }
}

/// Starting point: explicit, or a reduced ML fit.
fn starting_point(spec: &ModelSpec, data: &[DailyRecord], cfg: &McmcConfig) -> Result<ParamVector> {
    if let Some(s) = cfg.start {
        if likelihood::log_target(spec, &s, data, &cfg.init).is_finite() {
            return Ok(s);
        }
        log::warn!("supplied MCMC start is infeasible; falling back to an ML pre-fit");
    }
    let mcfg = MleConfig {
        n_candidates: cfg.init_candidates,
        max_evals: cfg.init_evals,
        quantile_starts: 100,
        seed: crate::exec::derive_seed(cfg.seed, 0x1a17),
        init: cfg.init,
        exec: crate::exec::Exec::Sequential,
    };
    Ok(mle::fit_ml(spec, data, &mcfg)?.params)
}

/// Posterior sampling under a flat prior on the constraint region.
pub fn run_mcmc(spec: &ModelSpec, data: &[DailyRecord], layout: &BlockLayout, cfg: &McmcConfig) -> Result<McmcRun> {
    spec.validate()?;
    layout.validate(spec.family)?;
    if data.len() < 2 {
        return Err(Error::TooShort { need: 2, got: data.len() });
    }
    let fam = spec.family;
    let q1 = model::initial_quantile(spec, data, &cfg.init);
    let init = InitPolicy { q1: Some(q1), ..cfg.init };
    let (g_lo, g_hi) = cfg.exp_gamma0_range;
    let mut start = starting_point(spec, data, cfg)?;
    if !fam.is_ar() {
        start[Param::Gamma0] = start[Param::Gamma0].clamp(g_lo, g_hi);
    }
    let target = |x: &[f64]| {
        let p = ParamVector::from_slice(fam, x);
        if !p.is_valid(fam) || (!fam.is_ar() && !(g_lo..=g_hi).contains(&p[Param::Gamma0])) {
            return f64::NEG_INFINITY;
        }
        likelihood::log_target(spec, &p, data, &init)
    };
    let out = run_sampler(target, &start.to_vec(fam), &layout.indices(fam), cfg)?;

    let retained = out.chain.retained();
    let dim = fam.dim();
    let mean: Vec<f64> = (0..dim).map(|j| stats::mean(&out.chain.column(j))).collect();
    let sd: Vec<f64> = (0..dim).map(|j| stats::std_dev(&out.chain.column(j))).collect();
    let forecasts: Vec<(f64, f64)> = retained
        .iter()
        .map(|x| {
            let p = ParamVector::from_slice(fam, x);
            model::filter_and_forecast(spec, &p, data, &init).map(|(_, f)| f)
        })
        .collect::<Result<_>>()?;
    let m = forecasts.len() as f64;
    let forecast_mean = (
        forecasts.iter().map(|f| f.0).sum::<f64>() / m,
        forecasts.iter().map(|f| f.1).sum::<f64>() / m,
    );

    Ok(McmcRun {
        family: fam,
        start,
        posterior_mean: ParamVector::from_slice(fam, &mean),
        posterior_sd: ParamVector::from_slice(fam, &sd),
        forecasts,
        forecast_mean,
        epochs: out.epochs,
        sd_converged: out.sd_converged,
        last_sd_change: out.last_sd_change,
        chain: out.chain,
    })
}

/// Potential scale reduction factor for one parameter across chains.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::Mcmc("need at least two chains".into()));
    }
    let n = chains[0].len();
    if n < 2 || chains.iter().any(|c| c.len() != n) {
        return Err(Error::LengthMismatch("chains must share a length >= 2".into()));
    }
    let m = chains.len() as f64;
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| stats::mean(c)).collect();
    let w = chains.iter().map(|c| stats::variance(c)).sum::<f64>() / m;
    if !(w > 0.0) {
        return Err(Error::Degenerate("zero within-chain variance".into()));
    }
    let b = nf * stats::variance(&means);
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    Ok((var_plus / w).sqrt())
}

/// R-hat per family parameter across chains' retained draws.
pub fn gelman_rubin_chains(chains: &[Chain]) -> Result<Vec<f64>> {
    let dim = chains.first().map_or(0, Chain::dim);
    (0..dim)
        .map(|j| gelman_rubin(&chains.iter().map(|c| c.column(j)).collect::<Vec<_>>()))
        .collect()
}

/// Effective sample size with Geyer's initial positive sequence truncation.
pub fn effective_sample_size(x: &[f64]) -> Result<f64> {
    let n = x.len();
    if n < 100 {
        return Err(Error::TooShort { need: 100, got: n });
    }
    let mean = stats::mean(x);
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0 = c.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if !(c0 > 0.0) {
        return Err(Error::Degenerate("constant chain".into()));
    }
    let rho = |k: usize| -> f64 { c[..n - k].iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>() / (n as f64 * c0) };
    let mut sum = 0.0;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = rho(2 * k) + rho(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        k += 1;
    }
    let tau = (-1.0 + 2.0 * sum).max(1.0 / n as f64);
    Ok(n as f64 / tau)
}

/// Writes `iter,block,param,value` rows for every stored iterate.
pub fn write_chain_csv(path: impl AsRef<Path>, chain: &Chain, family: Family) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let names = family.params();
    let mut block_of = vec![0usize; names.len()];
    for (b, idx) in chain.blocks.iter().enumerate() {
        for &j in idx {
            block_of[j] = b + 1;
        }
    }
    let res: std::io::Result<()> = (|| {
        writeln!(w, "iter,block,param,value")?;
        for (i, x) in chain.iterates.iter().enumerate() {
            for (j, v) in x.iter().enumerate() {
                writeln!(w, "{},{},{},{}", i + 1, block_of[j], names[j].name(), v)?;
            }
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}
