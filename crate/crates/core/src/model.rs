//! The four joint VaR/ES quantile-regression families and their deterministic
//! filter.
//!
//! All families share the quantile recursion
//! `Q_t = beta0 + beta1 * d_{t-1} + beta2 * Q_{t-1}`, where the driver `d` is
//! `|r|` for the plain families and the realized measure `X` for the realized
//! ones. The ES component is either an autoregressive offset (`ES = Q - x`, with
//! `x` moving only after a VaR hit) or a constant ratio
//! (`ES = (1 + exp(gamma0)) Q`).

use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::DailyRecord;
use crate::stats;

/// Quantile magnitudes below this are treated as degenerate.
pub const DEGENERATE_Q: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "es-caviar-ar")]
    EsCavAr,
    #[serde(rename = "es-caviar-exp")]
    EsCavExp,
    #[serde(rename = "re-es-caviar-ar")]
    ReEsCavAr,
    #[serde(rename = "re-es-caviar-exp")]
    ReEsCavExp,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::EsCavAr,
        Family::EsCavExp,
        Family::ReEsCavAr,
        Family::ReEsCavExp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::EsCavAr => "es-caviar-ar",
            Family::EsCavExp => "es-caviar-exp",
            Family::ReEsCavAr => "re-es-caviar-ar",
            Family::ReEsCavExp => "re-es-caviar-exp",
        }
    }

    pub fn is_realized(self) -> bool {
        matches!(self, Family::ReEsCavAr | Family::ReEsCavExp)
    }

    pub fn is_ar(self) -> bool {
        matches!(self, Family::EsCavAr | Family::ReEsCavAr)
    }

    /// Free parameters of the family, in canonical order.
    pub fn params(self) -> &'static [Param] {
        use Param::*;
        match self {
            Family::EsCavAr => &[Beta0, Beta1, Beta2, Gamma0, Gamma1, Gamma2],
            Family::EsCavExp => &[Beta0, Beta1, Beta2, Gamma0],
            Family::ReEsCavAr => &[
                Beta0, Beta1, Beta2, Xi, Phi, Tau1, Tau2, SigmaU, Gamma0, Gamma1, Gamma2,
            ],
            Family::ReEsCavExp => &[Beta0, Beta1, Beta2, Xi, Phi, Tau1, Tau2, SigmaU, Gamma0],
        }
    }

    pub fn dim(self) -> usize {
        self.params().len()
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == key)
            .ok_or_else(|| Error::Config(format!("unknown model family {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub alpha: f64,
}

impl ModelSpec {
    pub fn new(family: Family, alpha: f64) -> Result<Self> {
        let s = ModelSpec { family, alpha };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 0.5), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Beta0,
    Beta1,
    Beta2,
    Xi,
    Phi,
    Tau1,
    Tau2,
    SigmaU,
    Gamma0,
    Gamma1,
    Gamma2,
}

impl Param {
    pub const ALL: [Param; 11] = [
        Param::Beta0,
        Param::Beta1,
        Param::Beta2,
        Param::Xi,
        Param::Phi,
        Param::Tau1,
        Param::Tau2,
        Param::SigmaU,
        Param::Gamma0,
        Param::Gamma1,
        Param::Gamma2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::Beta0 => "beta0",
            Param::Beta1 => "beta1",
            Param::Beta2 => "beta2",
            Param::Xi => "xi",
            Param::Phi => "phi",
            Param::Tau1 => "tau1",
            Param::Tau2 => "tau2",
            Param::SigmaU => "sigma_u",
            Param::Gamma0 => "gamma0",
            Param::Gamma1 => "gamma1",
            Param::Gamma2 => "gamma2",
        }
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Param::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown parameter {s:?}")))
    }
}

/// Parameter values for any family; entries a family does not use stay at zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ParamVector([f64; 11]);

impl Index<Param> for ParamVector {
    type Output = f64;
    fn index(&self, p: Param) -> &f64 {
        &self.0[p as usize]
    }
}

impl IndexMut<Param> for ParamVector {
    fn index_mut(&mut self, p: Param) -> &mut f64 {
        &mut self.0[p as usize]
    }
}

impl ParamVector {
    pub fn from_pairs(pairs: &[(Param, f64)]) -> Self {
        let mut v = ParamVector::default();
        for &(p, x) in pairs {
            v[p] = x;
        }
        v
    }

    /// Packs the family's parameters into a flat vector.
    pub fn to_vec(&self, family: Family) -> Vec<f64> {
        family.params().iter().map(|&p| self[p]).collect()
    }

    pub fn from_slice(family: Family, values: &[f64]) -> Self {
        let mut v = ParamVector::default();
        for (&p, &x) in family.params().iter().zip(values) {
            v[p] = x;
        }
        v
    }

    pub fn named(&self, family: Family) -> Vec<(&'static str, f64)> {
        family.params().iter().map(|&p| (p.name(), self[p])).collect()
    }

    pub fn to_json(&self, family: Family) -> serde_json::Value {
        serde_json::Value::Object(
            self.named(family)
                .into_iter()
                .map(|(k, v)| (k.to_string(), serde_json::json!(v)))
                .collect(),
        )
    }

    /// Reads the family's parameters from a JSON object; all must be present.
    pub fn from_json(family: Family, value: &serde_json::Value) -> Result<Self> {
        let mut v = ParamVector::default();
        for &p in family.params() {
            v[p] = value
                .get(p.name())
                .and_then(|x| x.as_f64())
                .ok_or_else(|| Error::Schema(format!("missing parameter {:?}", p.name())))?;
        }
        Ok(v)
    }

    /// Checks membership of the constraint region for `family`.
    pub fn validate(&self, family: Family) -> Result<()> {
        for &p in family.params() {
            if !self[p].is_finite() {
                return Err(Error::InvalidParams(format!("{} is not finite", p.name())));
            }
        }
        if family.is_ar() {
            for p in [Param::Gamma0, Param::Gamma1, Param::Gamma2] {
                if self[p] < 0.0 {
                    return Err(Error::InvalidParams(format!("{} < 0", p.name())));
                }
            }
        }
        if family.is_realized() {
            let persistence = self[Param::Beta2] + self[Param::Beta1] * self[Param::Phi];
            if !(persistence.abs() < 1.0) {
                return Err(Error::InvalidParams(format!(
                    "|beta2 + beta1*phi| = {} >= 1",
                    persistence.abs()
                )));
            }
            if !(self[Param::SigmaU] > 0.0) {
                return Err(Error::InvalidParams("sigma_u <= 0".into()));
            }
        } else if !(self[Param::Beta2].abs() < 1.0) {
            return Err(Error::InvalidParams("|beta2| >= 1".into()));
        }
        Ok(())
    }

    pub fn is_valid(&self, family: Family) -> bool {
        self.validate(family).is_ok()
    }
}

/// Initial conditions of the recursion.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InitPolicy {
    /// `Q_1`; `None` uses the empirical alpha-quantile of the in-sample returns.
    pub q1: Option<f64>,
    /// `x_1` for the AR families; `None` uses `gamma0`.
    pub x1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub q: Vec<f64>,
    pub es: Vec<f64>,
    /// ES offset (AR) or ES/VaR ratio (EXP).
    pub x: Vec<f64>,
    /// `r_t / Q_t`; empty for the plain families.
    pub eps: Vec<f64>,
    /// Measurement residuals; empty for the plain families.
    pub u: Vec<f64>,
    /// Sample mean of `eps^2`; zero for the plain families.
    pub eps2bar: f64,
}

#[inline]
fn driver(family: Family, rec: &DailyRecord) -> f64 {
    if family.is_realized() {
        rec.measure
    } else {
        rec.ret.abs()
    }
}

fn check_q(t: usize, q: f64) -> Result<()> {
    if !q.is_finite() || q.abs() < DEGENERATE_Q {
        return Err(Error::DegenerateQuantile { t, value: q });
    }
    Ok(())
}

pub fn initial_quantile(spec: &ModelSpec, data: &[DailyRecord], init: &InitPolicy) -> f64 {
    init.q1.unwrap_or_else(|| {
        let r: Vec<f64> = data.iter().map(|d| d.ret).collect();
        stats::quantile(&r, spec.alpha)
    })
}

/// Runs the quantile/ES recursion over `data`.
pub fn filter(
    spec: &ModelSpec,
    params: &ParamVector,
    data: &[DailyRecord],
    init: &InitPolicy,
) -> Result<FilterOutput> {
    spec.validate()?;
    params.validate(spec.family)?;
    if data.is_empty() {
        return Err(Error::TooShort { need: 1, got: 0 });
    }
    filter_with_q1(spec, params, data, initial_quantile(spec, data, init), init.x1)
}

/// Filter with an explicit `Q_1`; skips parameter validation.
pub(crate) fn filter_with_q1(
    spec: &ModelSpec,
    params: &ParamVector,
    data: &[DailyRecord],
    q1: f64,
    x1: Option<f64>,
) -> Result<FilterOutput> {
    let fam = spec.family;
    let n = data.len();
    let (b0, b1, b2) = (params[Param::Beta0], params[Param::Beta1], params[Param::Beta2]);
    let (g0, g1, g2) = (params[Param::Gamma0], params[Param::Gamma1], params[Param::Gamma2]);

    let mut q = Vec::with_capacity(n);
    let mut es = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    let ratio = 1.0 + g0.exp();

    check_q(0, q1)?;
    q.push(q1);
    for t in 1..n {
        let qt = b0 + b1 * driver(fam, &data[t - 1]) + b2 * q[t - 1];
        check_q(t, qt)?;
        q.push(qt);
    }

    if fam.is_ar() {
        let mut xt = x1.unwrap_or(g0);
        for t in 0..n {
            if t > 0 && data[t - 1].ret <= q[t - 1] {
                xt = g0 + g1 * (q[t - 1] - data[t - 1].ret) + g2 * xt;
            }
            x.push(xt);
            es.push(q[t] - xt);
        }
    } else {
        x.resize(n, ratio);
        es.extend(q.iter().map(|&qt| ratio * qt));
    }

    let (eps, u, eps2bar) = if fam.is_realized() {
        let eps: Vec<f64> = data.iter().zip(&q).map(|(d, &qt)| d.ret / qt).collect();
        let eps2bar = eps.iter().map(|e| e * e).sum::<f64>() / n as f64;
        let (xi, phi, tau1, tau2) = (
            params[Param::Xi],
            params[Param::Phi],
            params[Param::Tau1],
            params[Param::Tau2],
        );
        let u = data
            .iter()
            .zip(&q)
            .zip(&eps)
            .map(|((d, &qt), &e)| d.measure - xi - phi * qt.abs() - tau1 * e - tau2 * (e * e - eps2bar))
            .collect();
        (eps, u, eps2bar)
    } else {
        (Vec::new(), Vec::new(), 0.0)
    };

    Ok(FilterOutput {
        q,
        es,
        x,
        eps,
        u,
        eps2bar,
    })
}

/// One-step-ahead `(VaR, ES)` for the day after the last record.
pub fn forecast_one(
    spec: &ModelSpec,
    params: &ParamVector,
    data: &[DailyRecord],
    out: &FilterOutput,
) -> Result<(f64, f64)> {
    let n = data.len();
    if n == 0 || out.q.len() != n {
        return Err(Error::LengthMismatch(format!(
            "filter output has {} points, data {}",
            out.q.len(),
            n
        )));
    }
    let fam = spec.family;
    let last = &data[n - 1];
    let q_last = out.q[n - 1];
    let q_next = params[Param::Beta0]
        + params[Param::Beta1] * driver(fam, last)
        + params[Param::Beta2] * q_last;
    check_q(n, q_next)?;
    let es_next = if fam.is_ar() {
        let x_last = out.x[n - 1];
        let x_next = if last.ret <= q_last {
            params[Param::Gamma0]
                + params[Param::Gamma1] * (q_last - last.ret)
                + params[Param::Gamma2] * x_last
        } else {
            x_last
        };
        q_next - x_next
    } else {
        (1.0 + params[Param::Gamma0].exp()) * q_next
    };
    Ok((q_next, es_next))
}

/// Filter then forecast.
pub fn filter_and_forecast(
    spec: &ModelSpec,
    params: &ParamVector,
    data: &[DailyRecord],
    init: &InitPolicy,
) -> Result<(FilterOutput, (f64, f64))> {
    let out = filter(spec, params, data, init)?;
    let f = forecast_one(spec, params, data, &out)?;
    Ok((out, f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::synthetic_dates;

    fn data(rets: &[f64], meas: &[f64]) -> Vec<DailyRecord> {
        synthetic_dates(rets.len())
            .into_iter()
            .zip(rets.iter().zip(meas))
            .map(|(date, (&ret, &measure))| DailyRecord { date, ret, measure })
            .collect()
    }

    fn sample_data(n: usize) -> Vec<DailyRecord> {
        let rets: Vec<f64> = (0..n).map(|i| ((i * 37 % 17) as f64 - 8.0) * 0.2).collect();
        let meas: Vec<f64> = rets.iter().map(|r| 0.3 + r.abs() * 0.5).collect();
        data(&rets, &meas)
    }

    fn re_params() -> ParamVector {
        use Param::*;
        ParamVector::from_pairs(&[
            (Beta0, -0.05),
            (Beta1, -0.23),
            (Beta2, 0.85),
            (Xi, 0.1),
            (Phi, 0.39),
            (Tau1, 0.05),
            (Tau2, 0.1),
            (SigmaU, 0.3),
            (Gamma0, 0.1),
            (Gamma1, 0.2),
            (Gamma2, 0.3),
        ])
    }

    #[test]
    fn exp_with_zero_gamma_doubles_var() {
        let spec = ModelSpec::new(Family::EsCavExp, 0.01).unwrap();
        let mut p = re_params();
        p[Param::Gamma0] = 0.0;
        let out = filter(&spec, &p, &sample_data(100), &InitPolicy::default()).unwrap();
        for (q, es) in out.q.iter().zip(&out.es) {
            assert_eq!(*es, 2.0 * q);
        }
    }

    #[test]
    fn ar_with_zero_slopes_gives_constant_offset() {
        let spec = ModelSpec::new(Family::ReEsCavAr, 0.05).unwrap();
        let mut p = re_params();
        p[Param::Gamma1] = 0.0;
        p[Param::Gamma2] = 0.0;
        let out = filter(&spec, &p, &sample_data(200), &InitPolicy::default()).unwrap();
        for (q, es) in out.q.iter().zip(&out.es) {
            assert!((es - (q - 0.1)).abs() < 1e-15);
        }
    }

    #[test]
    fn residual_identity() {
        let spec = ModelSpec::new(Family::ReEsCavExp, 0.01).unwrap();
        let p = re_params();
        let d = sample_data(300);
        let out = filter(&spec, &p, &d, &InitPolicy::default()).unwrap();
        for t in 0..d.len() {
            let e = out.eps[t];
            let rebuilt = p[Param::Xi]
                + p[Param::Phi] * out.q[t].abs()
                + p[Param::Tau1] * e
                + p[Param::Tau2] * (e * e - out.eps2bar)
                + out.u[t];
            assert!((rebuilt - d[t].measure).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_point_forecast() {
        // |r| == c, Q* = (b0 + b1 c) / (1 - b2)
        let c = 1.0;
        let (b0, b1, b2) = (-0.1, -0.2, 0.7);
        let qstar = (b0 + b1 * c) / (1.0 - b2);
        let d = data(&vec![c; 50], &vec![0.0; 50]);
        let spec = ModelSpec::new(Family::EsCavExp, 0.01).unwrap();
        let p = ParamVector::from_pairs(&[(Param::Beta0, b0), (Param::Beta1, b1), (Param::Beta2, b2)]);
        let init = InitPolicy { q1: Some(qstar), x1: None };
        let (out, (var, es)) = filter_and_forecast(&spec, &p, &d, &init).unwrap();
        assert!(out.q.iter().all(|q| (q - qstar).abs() < 1e-12));
        assert!((var - qstar).abs() < 1e-12);
        assert!((es - 2.0 * qstar).abs() < 1e-12);
    }

    #[test]
    fn exp_ratio_tends_to_one() {
        let spec = ModelSpec::new(Family::ReEsCavExp, 0.01).unwrap();
        let mut p = re_params();
        p[Param::Gamma0] = -50.0;
        let d = sample_data(60);
        let (_, (var, es)) = filter_and_forecast(&spec, &p, &d, &InitPolicy::default()).unwrap();
        assert!((es / var - 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_quantile_is_error() {
        let spec = ModelSpec::new(Family::EsCavAr, 0.01).unwrap();
        let d = data(&vec![0.0; 20], &vec![0.0; 20]);
        assert!(matches!(
            filter(&spec, &re_params(), &d, &InitPolicy::default()),
            Err(Error::DegenerateQuantile { t: 0, .. })
        ));
    }

    #[test]
    fn constraints() {
        let mut p = re_params();
        assert!(p.is_valid(Family::ReEsCavAr));
        p[Param::Gamma1] = -0.01;
        assert!(!p.is_valid(Family::ReEsCavAr));
        assert!(p.is_valid(Family::ReEsCavExp));
        let mut p = re_params();
        p[Param::Beta2] = 1.2; // 1.2 - 0.23*0.39 > 1
        assert!(!p.is_valid(Family::ReEsCavExp));
        assert!(!p.is_valid(Family::EsCavExp));
        let mut p = re_params();
        p[Param::SigmaU] = 0.0;
        assert!(!p.is_valid(Family::ReEsCavExp));
        assert!(p.is_valid(Family::EsCavExp));
    }

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.as_str().parse::<Family>().unwrap(), f);
        }
        assert_eq!("RE_ES_CAVIAR_EXP".parse::<Family>().unwrap(), Family::ReEsCavExp);
    }

    #[test]
    fn param_json_round_trip() {
        let p = re_params();
        for f in Family::ALL {
            let j = p.to_json(f);
            assert_eq!(j.as_object().unwrap().len(), f.dim());
            let back = ParamVector::from_json(f, &j).unwrap();
            assert_eq!(back.to_vec(f), p.to_vec(f));
        }
    }
}
