use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Exec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum McsMethod {
    /// Range statistic: max |t_ij|.
    R,
    /// Semi-quadratic statistic: sum over pairs of t_ij^2.
    SQ,
}

impl std::str::FromStr for McsMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "R" => Ok(McsMethod::R),
            "SQ" => Ok(McsMethod::SQ),
            _ => Err(Error::Config(format!("unknown MCS method {s:?} (R or SQ)"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McsConfig {
    pub method: McsMethod,
    pub level: f64,
    pub bootstrap: usize,
    /// Moving-block length; `None` uses `ceil(m^(1/3))`.
    pub block_len: Option<usize>,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for McsConfig {
    fn default() -> Self {
        McsConfig {
            method: McsMethod::R,
            level: 0.90,
            bootstrap: 200,
            block_len: None,
            seed: 0,
            exec: Exec::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Elimination {
    pub model: String,
    pub pvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsResult {
    pub method: McsMethod,
    pub level: f64,
    pub survivors: Vec<String>,
    pub eliminations: Vec<Elimination>,
    /// MCS p-value shared by the surviving models.
    pub survivor_pvalue: f64,
}

/// `t = d / sqrt(v)` with `0/0 = 0` and `d/0 = +-inf`.
fn tstat(d: f64, v: f64) -> f64 {
    if v > 0.0 {
        d / v.sqrt()
    } else if d == 0.0 {
        0.0
    } else {
        d.signum() * f64::INFINITY
    }
}

fn statistic(method: McsMethod, t: &[Vec<f64>], alive: &[usize]) -> f64 {
    let mut s: f64 = 0.0;
    for (a, &i) in alive.iter().enumerate() {
        for &j in &alive[a + 1..] {
            s = match method {
                McsMethod::R => s.max(t[i][j].abs()),
                McsMethod::SQ => s + t[i][j] * t[i][j],
            };
        }
    }
    s
}

/// Model confidence set by sequential elimination over `(name, per-day loss)`.
pub fn mcs(losses: &[(String, Vec<f64>)], cfg: &McsConfig) -> Result<McsResult> {
    let k = losses.len();
    if k < 2 {
        return Err(Error::Config("MCS needs at least two models".into()));
    }
    let m = losses[0].1.len();
    if m < 2 || losses.iter().any(|(_, l)| l.len() != m) {
        return Err(Error::LengthMismatch("loss series must share a length >= 2".into()));
    }
    if losses.iter().any(|(_, l)| l.iter().any(|v| !v.is_finite())) {
        return Err(Error::Degenerate("non-finite loss".into()));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) || cfg.bootstrap == 0 {
        return Err(Error::Config("level must be in (0,1) and bootstrap >= 1".into()));
    }
    let block = cfg
        .block_len
        .unwrap_or_else(|| (m as f64).cbrt().ceil() as usize)
        .clamp(1, m);

    let means: Vec<f64> = losses.iter().map(|(_, l)| l.iter().sum::<f64>() / m as f64).collect();
    // Bootstrap means of every model under shared moving-block resamples.
    let boot: Vec<Vec<f64>> = exec::map_indexed(cfg.exec, cfg.bootstrap, |b| {
        let mut rng = exec::item_rng(cfg.seed, b);
        let mut sums = vec![0.0; k];
        let mut filled = 0;
        while filled < m {
            let start = rng.random_range(0..=m - block);
            for t in start..(start + block).min(start + m - filled) {
                for (s, (_, l)) in sums.iter_mut().zip(losses) {
                    *s += l[t];
                }
            }
            filled += block.min(m - filled);
        }
        sums.into_iter().map(|s| s / m as f64).collect()
    });
    let nb = cfg.bootstrap as f64;

    // Pairwise differential means, bootstrap variances and t-statistics.
    let mut var = vec![vec![0.0; k]; k];
    let mut t = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let d = means[i] - means[j];
            let v = boot
                .iter()
                .map(|bm| (bm[i] - bm[j] - d).powi(2))
                .sum::<f64>()
                / nb;
            var[i][j] = v;
            t[i][j] = tstat(d, v);
        }
    }
    let boot_t = |bm: &[f64], i: usize, j: usize| tstat(bm[i] - bm[j] - (means[i] - means[j]), var[i][j]);

    let mut alive: Vec<usize> = (0..k).collect();
    let mut eliminations = Vec::new();
    let mut running_p: f64 = 0.0;
    let threshold = 1.0 - cfg.level;
    while alive.len() > 1 {
        let stat = statistic(cfg.method, &t, &alive);
        let exceed = boot
            .iter()
            .filter(|bm| {
                let mut tb = vec![vec![0.0; k]; k];
                for &i in &alive {
                    for &j in &alive {
                        if i != j {
                            tb[i][j] = boot_t(bm, i, j);
                        }
                    }
                }
                statistic(cfg.method, &tb, &alive) >= stat
            })
            .count();
        let p = exceed as f64 / nb;
        running_p = running_p.max(p);
        if running_p >= threshold {
            break;
        }
        // Worst model: largest max_j t_ij (ties to the first listed).
        let worst = alive
            .iter()
            .copied()
            .map(|i| {
                let w = alive
                    .iter()
                    .filter(|&&j| j != i)
                    .map(|&j| t[i][j])
                    .fold(f64::NEG_INFINITY, f64::max);
                (i, w)
            })
            .fold((usize::MAX, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
            .0;
        eliminations.push(Elimination {
            model: losses[worst].0.clone(),
            pvalue: running_p,
        });
        alive.retain(|&i| i != worst);
    }
    if alive.len() == 1 {
        running_p = 1.0;
    }

    Ok(McsResult {
        method: cfg.method,
        level: cfg.level,
        survivors: alive.iter().map(|&i| losses[i].0.clone()).collect(),
        eliminations,
        survivor_pvalue: running_p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn noise(seed: u64, m: usize) -> Vec<f64> {
        let mut rng = exec::item_rng(seed, 0);
        (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    }

    #[test]
    fn identical_series_both_survive() {
        let l = noise(1, 300);
        let r = mcs(&[("a".into(), l.clone()), ("b".into(), l)], &McsConfig::default()).unwrap();
        assert_eq!(r.survivors, vec!["a", "b"]);
        assert!(r.eliminations.is_empty());
        assert_eq!(r.survivor_pvalue, 1.0);
    }

    #[test]
    fn constant_offset_is_eliminated() {
        let l = noise(2, 500);
        let worse: Vec<f64> = l.iter().map(|v| v + 1.0).collect();
        for method in [McsMethod::R, McsMethod::SQ] {
            let cfg = McsConfig { method, ..Default::default() };
            let r = mcs(&[("worse".into(), worse.clone()), ("base".into(), l.clone())], &cfg).unwrap();
            assert_eq!(r.survivors, vec!["base"]);
            assert_eq!(r.eliminations[0].model, "worse");
        }
    }

    #[test]
    fn invariant_to_common_shift_and_deterministic() {
        let a = noise(3, 400);
        let b: Vec<f64> = noise(4, 400).iter().map(|v| v + 0.3).collect();
        let c: Vec<f64> = noise(5, 400).iter().map(|v| v * 1.5 + 0.05).collect();
        let set = |s: f64| {
            vec![
                ("a".to_string(), a.iter().map(|v| v + s).collect::<Vec<_>>()),
                ("b".to_string(), b.iter().map(|v| v + s).collect()),
                ("c".to_string(), c.iter().map(|v| v + s).collect()),
            ]
        };
        let cfg = McsConfig { seed: 9, ..Default::default() };
        let r0 = mcs(&set(0.0), &cfg).unwrap();
        let r1 = mcs(&set(10.0), &cfg).unwrap();
        assert_eq!(r0.survivors, r1.survivors);
        assert_eq!(r0, mcs(&set(0.0), &McsConfig { exec: Exec::Sequential, ..cfg }).unwrap());
        assert!(!r0.survivors.is_empty());
        for e in &r0.eliminations {
            assert!((0.0..=1.0).contains(&e.pvalue));
        }
    }

    #[test]
    fn mismatched_lengths() {
        assert!(mcs(&[("a".into(), vec![1.0; 5]), ("b".into(), vec![1.0; 6])], &McsConfig::default()).is_err());
    }
}
