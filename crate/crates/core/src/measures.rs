//! Realized measures from intraday prices: RV, RR, their scaled and sub-sampled
//! versions, and the daily proxies.
//!
//! Grids are anchored at minute 0 (session open) and run to the day's last
//! tick. Every grid point must carry a tick; a day with a missing grid point is
//! dropped from a series with a warning.

use std::f64::consts::LN_2;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::io::{DailyRecord, IntradayDay};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureKind {
    Rv,
    Rr,
    ScRv,
    ScRr,
    SsRv,
    SsRr,
    AbsReturn,
    DailyRange,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 8] = [
        MeasureKind::Rv,
        MeasureKind::Rr,
        MeasureKind::ScRv,
        MeasureKind::ScRr,
        MeasureKind::SsRv,
        MeasureKind::SsRr,
        MeasureKind::AbsReturn,
        MeasureKind::DailyRange,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MeasureKind::Rv => "rv",
            MeasureKind::Rr => "rr",
            MeasureKind::ScRv => "scrv",
            MeasureKind::ScRr => "scrr",
            MeasureKind::SsRv => "ssrv",
            MeasureKind::SsRr => "ssrr",
            MeasureKind::AbsReturn => "absreturn",
            MeasureKind::DailyRange => "dailyrange",
        }
    }
}

impl FromStr for MeasureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace(['-', '_'], "");
        MeasureKind::ALL
            .into_iter()
            .find(|k| k.as_str() == key)
            .ok_or_else(|| Error::Config(format!("unknown measure {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputScale {
    Variance,
    Volatility,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureConfig {
    pub kind: MeasureKind,
    /// Base sampling frequency in minutes.
    pub freq: u32,
    /// Sub-sampling offset in minutes; must divide `freq`.
    pub offset: u32,
    /// Scaling window in days.
    pub q: usize,
    pub scale: OutputScale,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig {
            kind: MeasureKind::Rv,
            freq: 5,
            offset: 1,
            q: 66,
            scale: OutputScale::Volatility,
        }
    }
}

impl MeasureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.freq == 0 || self.offset == 0 {
            return Err(Error::Config("freq and offset must be positive".into()));
        }
        if self.freq % self.offset != 0 {
            return Err(Error::Config(format!(
                "offset {} does not divide freq {}",
                self.offset, self.freq
            )));
        }
        if self.q == 0 {
            return Err(Error::Config("scaling window q must be >= 1".into()));
        }
        Ok(())
    }
}

fn grid(day: &IntradayDay, freq: u32, start: u32) -> Result<Vec<u32>> {
    if freq == 0 {
        return Err(Error::Config("frequency must be positive".into()));
    }
    let last = day.last_minute();
    let points: Vec<u32> = (start..=last).step_by(freq as usize).collect();
    if points.len() < 2 {
        return Err(Error::TooShort {
            need: 2,
            got: points.len(),
        });
    }
    Ok(points)
}

fn price_at(day: &IntradayDay, minute: u32) -> Result<f64> {
    day.tick_at(minute)
        .map(|t| t.price)
        .ok_or_else(|| Error::MissingGridPoint {
            date: day.date.to_string(),
            minute,
        })
}

/// Sum of squared log increments on the grid `start, start+freq, ...`.
fn sum_sq_returns(day: &IntradayDay, freq: u32, start: u32) -> Result<f64> {
    let pts = grid(day, freq, start)?;
    let mut prev = price_at(day, pts[0])?.ln();
    let mut sum = 0.0;
    for &m in &pts[1..] {
        let cur = price_at(day, m)?.ln();
        sum += (cur - prev).powi(2);
        prev = cur;
    }
    Ok(sum)
}

/// Sum of squared log ranges over the intervals `(a, b]` of the grid. Each range
/// includes the close at `a` and the high/low of every minute in `(a, b]`.
fn sum_sq_ranges(day: &IntradayDay, freq: u32, start: u32) -> Result<f64> {
    let pts = grid(day, freq, start)?;
    for &m in &pts {
        price_at(day, m)?;
    }
    let mut sum = 0.0;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let open = price_at(day, a)?;
        let (hi, lo) = day
            .ticks
            .iter()
            .filter(|t| t.minute > a && t.minute <= b)
            .fold((open, open), |(h, l), t| (h.max(t.high), l.min(t.low)));
        sum += (hi.ln() - lo.ln()).powi(2);
    }
    Ok(sum)
}

/// Realized variance at `freq` minutes.
pub fn rv(day: &IntradayDay, freq: u32) -> Result<f64> {
    sum_sq_returns(day, freq, 0)
}

/// Realized range at `freq` minutes, normalised by `4 ln 2`.
pub fn rr(day: &IntradayDay, freq: u32) -> Result<f64> {
    Ok(sum_sq_ranges(day, freq, 0)? / (4.0 * LN_2))
}

fn check_subsampling(freq: u32, offset: u32) -> Result<u32> {
    if offset == 0 || freq == 0 || freq % offset != 0 {
        return Err(Error::Config(format!(
            "offset {offset} must divide freq {freq}"
        )));
    }
    Ok(freq / offset)
}

/// Average of the `freq/offset` realized variances on grids shifted by
/// `0, offset, 2*offset, ...`.
pub fn subsampled_rv(day: &IntradayDay, freq: u32, offset: u32) -> Result<f64> {
    let nk = check_subsampling(freq, offset)?;
    let mut total = 0.0;
    for i in 0..nk {
        total += sum_sq_returns(day, freq, i * offset)?;
    }
    Ok(total / nk as f64)
}

/// Sub-sampled realized range: shifted range sums over `4 ln 2 * n_k`.
pub fn subsampled_rr(day: &IntradayDay, freq: u32, offset: u32) -> Result<f64> {
    let nk = check_subsampling(freq, offset)?;
    let mut total = 0.0;
    for i in 0..nk {
        total += sum_sq_ranges(day, freq, i * offset)?;
    }
    Ok(total / (4.0 * LN_2 * nk as f64))
}

/// Whole-day squared log range over `4 ln 2`.
pub fn daily_range(day: &IntradayDay) -> f64 {
    let (hi, lo) = day
        .ticks
        .iter()
        .fold((f64::MIN, f64::MAX), |(h, l), t| (h.max(t.high), l.min(t.low)));
    (hi.ln() - lo.ln()).powi(2) / (4.0 * LN_2)
}

/// Ratio scaling: `out[t] = sum(proxy[t-q..t]) / sum(measure[t-q..t]) * measure[t]`.
/// The first `q` entries are `None`.
pub fn scale(measure: &[f64], proxy: &[f64], q: usize) -> Result<Vec<Option<f64>>> {
    if measure.len() != proxy.len() {
        return Err(Error::LengthMismatch(format!(
            "measure has {} days, proxy {}",
            measure.len(),
            proxy.len()
        )));
    }
    if q == 0 {
        return Err(Error::Config("scaling window q must be >= 1".into()));
    }
    let mut out = vec![None; measure.len()];
    if measure.len() <= q {
        return Ok(out);
    }
    let mut num: f64 = proxy[..q].iter().sum();
    let mut den: f64 = measure[..q].iter().sum();
    for t in q..measure.len() {
        if !(den > 0.0) {
            return Err(Error::ZeroDenominator { index: t });
        }
        out[t] = Some(num / den * measure[t]);
        num += proxy[t] - proxy[t - q];
        den += measure[t] - measure[t - q];
        // Rolling sums drift; refresh periodically.
        if (t - q) % 256 == 255 {
            num = proxy[t + 1 - q..=t].iter().sum();
            den = measure[t + 1 - q..=t].iter().sum();
        }
    }
    Ok(out)
}

fn variance_measure(day: &IntradayDay, cfg: &MeasureConfig) -> Result<f64> {
    match cfg.kind {
        MeasureKind::Rv | MeasureKind::ScRv => rv(day, cfg.freq),
        MeasureKind::Rr | MeasureKind::ScRr => rr(day, cfg.freq),
        MeasureKind::SsRv => subsampled_rv(day, cfg.freq, cfg.offset),
        MeasureKind::SsRr => subsampled_rr(day, cfg.freq, cfg.offset),
        MeasureKind::DailyRange => Ok(daily_range(day)),
        MeasureKind::AbsReturn => unreachable!("handled by caller"),
    }
}

/// Builds the daily return/measure series. The first day only supplies a close;
/// scaled kinds additionally lose their first `q` days.
pub fn build_measure_series(days: &[IntradayDay], cfg: &MeasureConfig) -> Result<Vec<DailyRecord>> {
    cfg.validate()?;
    if days.len() < 2 {
        return Err(Error::TooShort {
            need: 2,
            got: days.len(),
        });
    }
    let returns: Vec<f64> = days
        .windows(2)
        .map(|w| w[1].close().ln() - w[0].close().ln())
        .collect();

    let per_day: Vec<Result<Option<f64>>> =
        exec::map_indexed(Exec::default(), days.len() - 1, |i| {
            let day = &days[i + 1];
            if cfg.kind == MeasureKind::AbsReturn {
                return Ok(Some(returns[i] * returns[i]));
            }
            match variance_measure(day, cfg) {
                Ok(v) => Ok(Some(v)),
                Err(Error::MissingGridPoint { date, minute }) => {
                    log::warn!("dropping {date}: no tick at grid minute {minute}");
                    Ok(None)
                }
                Err(e) => Err(e),
            }
        });

    let mut kept = Vec::with_capacity(per_day.len());
    for (i, m) in per_day.into_iter().enumerate() {
        if let Some(v) = m? {
            kept.push((i, v));
        }
    }

    let variance: Vec<(usize, f64)> = match cfg.kind {
        MeasureKind::ScRv | MeasureKind::ScRr => {
            let meas: Vec<f64> = kept.iter().map(|&(_, v)| v).collect();
            let proxy: Vec<f64> = kept
                .iter()
                .map(|&(i, _)| match cfg.kind {
                    MeasureKind::ScRv => returns[i] * returns[i],
                    _ => daily_range(&days[i + 1]),
                })
                .collect();
            scale(&meas, &proxy, cfg.q)?
                .into_iter()
                .zip(&kept)
                .filter_map(|(s, &(i, _))| s.map(|v| (i, v)))
                .collect()
        }
        _ => kept,
    };

    Ok(variance
        .into_iter()
        .map(|(i, v)| DailyRecord {
            date: days[i + 1].date,
            ret: returns[i],
            measure: match cfg.scale {
                OutputScale::Variance => v,
                OutputScale::Volatility => v.sqrt(),
            },
        })
        .collect())
}
