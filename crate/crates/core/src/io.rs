//! Intraday/daily data types and the CSV/JSON file formats.
//!
//! Floats are written with Rust's shortest round-trip representation, so
//! `load(write(x)) == x` bit for bit.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecasting::{ForecastFlag, ForecastRecord};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tick {
    /// Minutes from session open.
    pub minute: u32,
    /// Close of the minute.
    pub price: f64,
    pub high: f64,
    pub low: f64,
}

impl Tick {
    pub fn new(minute: u32, price: f64) -> Self {
        Tick {
            minute,
            price,
            high: price,
            low: price,
        }
    }
}

/// One trading day of minute-stamped prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntradayDay {
    pub date: NaiveDate,
    pub ticks: Vec<Tick>,
}

impl IntradayDay {
    /// Validates ordering, positivity and the two-tick minimum.
    pub fn new(date: NaiveDate, mut ticks: Vec<Tick>) -> Result<Self> {
        ticks.sort_by_key(|t| t.minute);
        for w in ticks.windows(2) {
            if w[0].minute == w[1].minute {
                return Err(Error::DuplicateTick {
                    date: date.to_string(),
                    minute: w[0].minute,
                });
            }
        }
        for t in &ticks {
            for p in [t.price, t.high, t.low] {
                if !(p > 0.0) || !p.is_finite() {
                    return Err(Error::NonPositivePrice {
                        date: date.to_string(),
                        minute: t.minute,
                        price: p,
                    });
                }
            }
        }
        if ticks.len() < 2 {
            return Err(Error::TooShort {
                need: 2,
                got: ticks.len(),
            });
        }
        Ok(IntradayDay { date, ticks })
    }

    pub fn close(&self) -> f64 {
        self.ticks.last().map(|t| t.price).unwrap_or(f64::NAN)
    }

    pub fn tick_at(&self, minute: u32) -> Option<&Tick> {
        self.ticks
            .binary_search_by_key(&minute, |t| t.minute)
            .ok()
            .map(|i| &self.ticks[i])
    }

    pub fn last_minute(&self) -> u32 {
        self.ticks.last().map(|t| t.minute).unwrap_or(0)
    }
}

/// Aligned daily return and realized measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyRecord {
    pub date: NaiveDate,
    #[serde(rename = "return")]
    pub ret: f64,
    pub measure: f64,
}

fn parse_date(s: &str, line: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT).map_err(|e| Error::Parse {
        line,
        msg: format!("bad date {s:?}: {e}"),
    })
}

fn parse_f64(s: &str, line: usize, col: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Parse {
        line,
        msg: format!("bad {col} {s:?}: {e}"),
    })
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(f))
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h == name)
}

fn require_column(headers: &csv::StringRecord, name: &str, kind: &str) -> Result<usize> {
    column_index(headers, name)
        .ok_or_else(|| Error::Schema(format!("{kind} file is missing column {name:?}")))
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse {
        line,
        msg: e.to_string(),
    }
}

/// Loads the intraday CSV (`date,minute,price[,high,low]`). Days with fewer than
/// two ticks are dropped with a warning.
pub fn load_intraday(path: impl AsRef<Path>) -> Result<Vec<IntradayDay>> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let c_date = require_column(&headers, "date", "intraday")?;
    let c_min = require_column(&headers, "minute", "intraday")?;
    let c_price = require_column(&headers, "price", "intraday")?;
    let c_high = column_index(&headers, "high");
    let c_low = column_index(&headers, "low");

    let mut by_date: BTreeMap<NaiveDate, Vec<Tick>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(csv_err)?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let date = parse_date(field(c_date), line)?;
        let minute = field(c_min).trim().parse::<u32>().map_err(|e| Error::Parse {
            line,
            msg: format!("bad minute {:?}: {e}", field(c_min)),
        })?;
        let price = parse_f64(field(c_price), line, "price")?;
        let optional = |c: Option<usize>, col: &str| -> Result<f64> {
            match c.map(field).filter(|s| !s.trim().is_empty()) {
                Some(s) => parse_f64(s, line, col),
                None => Ok(price),
            }
        };
        let high = optional(c_high, "high")?;
        let low = optional(c_low, "low")?;
        for p in [price, high, low] {
            if !(p > 0.0) {
                return Err(Error::NonPositivePrice {
                    date: date.to_string(),
                    minute,
                    price: p,
                });
            }
        }
        by_date.entry(date).or_default().push(Tick {
            minute,
            price,
            high: high.max(price),
            low: low.min(price),
        });
    }

    let mut days = Vec::with_capacity(by_date.len());
    for (date, ticks) in by_date {
        match IntradayDay::new(date, ticks) {
            Ok(d) => days.push(d),
            Err(Error::TooShort { got, .. }) => {
                log::warn!("dropping {date}: only {got} tick(s)");
            }
            Err(e) => return Err(e),
        }
    }
    Ok(days)
}

/// Close-to-close log returns. Output has one fewer element than the input and
/// carries the later date.
pub fn daily_returns(closes: &[(NaiveDate, f64)]) -> Result<Vec<(NaiveDate, f64)>> {
    if closes.len() < 2 {
        return Err(Error::TooShort {
            need: 2,
            got: closes.len(),
        });
    }
    if let Some((d, p)) = closes.iter().find(|(_, p)| !(*p > 0.0)) {
        return Err(Error::NonPositivePrice {
            date: d.to_string(),
            minute: 0,
            price: *p,
        });
    }
    Ok(closes
        .windows(2)
        .map(|w| (w[1].0, w[1].1.ln() - w[0].1.ln()))
        .collect())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn write_daily(path: impl AsRef<Path>, records: &[DailyRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "date,return,measure").map_err(io)?;
    for r in records {
        writeln!(w, "{},{},{}", r.date.format(DATE_FORMAT), r.ret, r.measure).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Loads a daily CSV, checking `measure >= 0` and strictly increasing dates.
pub fn load_daily(path: impl AsRef<Path>) -> Result<Vec<DailyRecord>> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let c_date = require_column(&headers, "date", "daily")?;
    let c_ret = require_column(&headers, "return", "daily")?;
    let c_meas = require_column(&headers, "measure", "daily")?;

    let mut out: Vec<DailyRecord> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(csv_err)?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let r = DailyRecord {
            date: parse_date(field(c_date), line)?,
            ret: parse_f64(field(c_ret), line, "return")?,
            measure: parse_f64(field(c_meas), line, "measure")?,
        };
        if !(r.measure >= 0.0) {
            return Err(Error::Parse {
                line,
                msg: format!("negative measure {}", r.measure),
            });
        }
        if let Some(prev) = out.last() {
            if r.date <= prev.date {
                return Err(Error::Parse {
                    line,
                    msg: format!("date {} not after {}", r.date, prev.date),
                });
            }
        }
        out.push(r);
    }
    Ok(out)
}

pub fn write_forecasts(path: impl AsRef<Path>, records: &[ForecastRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "date,var,es,model,alpha,origin,flag").map_err(io)?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.date.format(DATE_FORMAT),
            r.var,
            r.es,
            r.model,
            r.alpha,
            r.origin,
            r.flag.as_str()
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Loads a forecast CSV. `date,var,es,model,alpha` are required; `origin` and
/// `flag` are optional (defaulting to the row index and `ok`).
pub fn load_forecasts(path: impl AsRef<Path>) -> Result<Vec<ForecastRecord>> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let c_date = require_column(&headers, "date", "forecast")?;
    let c_var = require_column(&headers, "var", "forecast")?;
    let c_es = require_column(&headers, "es", "forecast")?;
    let c_model = require_column(&headers, "model", "forecast")?;
    let c_alpha = require_column(&headers, "alpha", "forecast")?;
    let c_origin = column_index(&headers, "origin");
    let c_flag = column_index(&headers, "flag");

    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(csv_err)?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let origin = match c_origin {
            Some(c) => field(c).trim().parse::<usize>().map_err(|e| Error::Parse {
                line,
                msg: format!("bad origin: {e}"),
            })?,
            None => i,
        };
        let flag = match c_flag {
            Some(c) => ForecastFlag::parse(field(c)).ok_or_else(|| Error::Parse {
                line,
                msg: format!("bad flag {:?}", field(c)),
            })?,
            None => ForecastFlag::Ok,
        };
        out.push(ForecastRecord {
            date: parse_date(field(c_date), line)?,
            var: parse_f64(field(c_var), line, "var")?,
            es: parse_f64(field(c_es), line, "es")?,
            model: field(c_model).to_string(),
            alpha: parse_f64(field(c_alpha), line, "alpha")?,
            origin,
            flag,
        });
    }
    Ok(out)
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}

/// Writes the backtest report as JSON.
pub fn write_report(
    path: impl AsRef<Path>,
    report: &crate::scoring::BacktestReport,
) -> Result<()> {
    write_json(path, report)
}

/// Synthetic calendar for simulated series: consecutive days from 2000-01-03.
pub fn synthetic_dates(n: usize) -> Vec<NaiveDate> {
    let start = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
    (0..n)
        .map(|i| start + chrono::Duration::days(i as i64))
        .collect()
}
