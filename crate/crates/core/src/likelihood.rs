//! Asymmetric-Laplace log-likelihood for joint (VaR, ES) paths, plus the
//! Gaussian measurement-equation term of the realized families.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::DailyRecord;
use crate::model::{self, FilterOutput, InitPolicy, ModelSpec, Param, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLik {
    pub total: f64,
    pub al_part: f64,
    pub measurement_part: f64,
}

impl LogLik {
    pub const INVALID: LogLik = LogLik {
        total: f64::NEG_INFINITY,
        al_part: f64::NEG_INFINITY,
        measurement_part: 0.0,
    };
}

/// Per-observation AL log density; `es` must be negative.
#[inline]
pub fn al_term(r: f64, q: f64, es: f64, alpha: f64) -> f64 {
    let hit = if r <= q { 1.0 } else { 0.0 };
    (1.0 - alpha).ln() - (-es).ln() + (r - q) * (alpha - hit) / (alpha * es)
}

/// `sum_t [ log((alpha-1)/ES_t) + (r_t - Q_t)(alpha - I(r_t <= Q_t)) / (alpha ES_t) ]`.
pub fn al_loglik(returns: &[f64], q: &[f64], es: &[f64], alpha: f64) -> Result<f64> {
    if returns.len() != q.len() || q.len() != es.len() {
        return Err(Error::LengthMismatch(format!(
            "returns {}, Q {}, ES {}",
            returns.len(),
            q.len(),
            es.len()
        )));
    }
    let log1ma = (1.0 - alpha).ln();
    let mut sum = 0.0;
    for (t, ((&r, &qt), &et)) in returns.iter().zip(q).zip(es).enumerate() {
        if !(et < 0.0) {
            return Err(Error::NonNegativeEs { t, value: et });
        }
        let hit = if r <= qt { 1.0 } else { 0.0 };
        sum += log1ma - (-et).ln() + (r - qt) * (alpha - hit) / (alpha * et);
    }
    Ok(sum)
}

/// `-1/2 sum_t [log 2pi + log sigma_u^2 + u_t^2 / sigma_u^2]`.
pub fn measurement_loglik(u: &[f64], sigma_u: f64) -> Result<f64> {
    if !(sigma_u > 0.0) {
        return Err(Error::InvalidParams("sigma_u <= 0".into()));
    }
    let s2 = sigma_u * sigma_u;
    let ss: f64 = u.iter().map(|x| x * x).sum();
    Ok(-0.5 * (u.len() as f64 * ((2.0 * PI).ln() + s2.ln()) + ss / s2))
}

/// Log-likelihood from an existing filter pass.
pub fn loglik_from_filter(
    spec: &ModelSpec,
    params: &ParamVector,
    data: &[DailyRecord],
    out: &FilterOutput,
) -> Result<LogLik> {
    let returns: Vec<f64> = data.iter().map(|d| d.ret).collect();
    let al_part = al_loglik(&returns, &out.q, &out.es, spec.alpha)?;
    let measurement_part = if spec.family.is_realized() {
        measurement_loglik(&out.u, params[Param::SigmaU])?
    } else {
        0.0
    };
    let total = al_part + measurement_part;
    if !total.is_finite() {
        return Err(Error::InvalidParams("non-finite log-likelihood".into()));
    }
    Ok(LogLik {
        total,
        al_part,
        measurement_part,
    })
}

/// Full composite log-likelihood at a parameter point.
pub fn composite_loglik(
    spec: &ModelSpec,
    params: &ParamVector,
    data: &[DailyRecord],
    init: &InitPolicy,
) -> Result<LogLik> {
    let out = model::filter(spec, params, data, init)?;
    loglik_from_filter(spec, params, data, &out)
}

/// Composite log-likelihood with invalid points mapped to `-inf`.
pub fn log_target(
    spec: &ModelSpec,
    params: &ParamVector,
    data: &[DailyRecord],
    init: &InitPolicy,
) -> f64 {
    composite_loglik(spec, params, data, init)
        .map(|l| l.total)
        .unwrap_or(f64::NEG_INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::synthetic_dates;
    use crate::model::Family;

    #[test]
    fn single_observation_value() {
        // log(0.99) - log(2.5) + (-0.5)(0.01 - 1) / (0.01 * -2.5)
        let l = al_loglik(&[-2.0], &[-1.5], &[-2.5], 0.01).unwrap();
        let oracle = 0.99f64.ln() - 2.5f64.ln() + (-0.5 * -0.99) / (-0.025);
        assert!((l - oracle).abs() < 1e-14);
        assert!((l + 20.726_34).abs() < 1e-5);
    }

    #[test]
    fn returns_at_quantile() {
        let q = [-1.0, -2.0, -1.5];
        let es = [-1.2, -2.5, -3.0];
        let l = al_loglik(&q, &q, &es, 0.05).unwrap();
        let expected: f64 = es.iter().map(|e| (0.95f64 / -e).ln()).sum();
        assert!((l - expected).abs() < 1e-14);
    }

    #[test]
    fn non_negative_es_is_error() {
        assert!(matches!(
            al_loglik(&[0.0, 0.0], &[-1.0, -1.0], &[-1.0, 0.0], 0.01),
            Err(Error::NonNegativeEs { t: 1, .. })
        ));
    }

    #[test]
    fn gaussian_at_mode() {
        let u = vec![0.0; 10];
        let l = measurement_loglik(&u, 1.0).unwrap();
        assert!((l + 5.0 * (2.0 * PI).ln()).abs() < 1e-13);
        assert!(measurement_loglik(&u, 0.0).is_err());
    }

    #[test]
    fn plain_family_has_no_measurement_part() {
        let rets: Vec<f64> = (0..200).map(|i| ((i * 13 % 7) as f64 - 3.0) * 0.5).collect();
        let data: Vec<DailyRecord> = synthetic_dates(200)
            .into_iter()
            .zip(&rets)
            .map(|(date, &ret)| DailyRecord { date, ret, measure: 0.0 })
            .collect();
        let spec = ModelSpec::new(Family::EsCavExp, 0.05).unwrap();
        let p = ParamVector::from_pairs(&[
            (Param::Beta0, -0.1),
            (Param::Beta1, -0.1),
            (Param::Beta2, 0.8),
            (Param::Gamma0, -1.0),
        ]);
        let l = composite_loglik(&spec, &p, &data, &InitPolicy::default()).unwrap();
        assert_eq!(l.measurement_part, 0.0);
        assert_eq!(l.total, l.al_part);
    }

    /// Measurement part is smooth in (xi, phi, tau1, tau2, sigma_u) for a fixed
    /// Q path; central differences match the analytic gradient.
    #[test]
    fn measurement_gradient_matches_finite_differences() {
        let n = 150;
        let q: Vec<f64> = (0..n).map(|i| -1.0 - 0.3 * ((i as f64) * 0.37).sin()).collect();
        let r: Vec<f64> = (0..n).map(|i| 1.2 * ((i as f64) * 1.71).cos()).collect();
        let x: Vec<f64> = (0..n).map(|i| 0.5 + 0.2 * ((i as f64) * 0.91).sin().abs()).collect();
        let eps: Vec<f64> = r.iter().zip(&q).map(|(r, q)| r / q).collect();
        let e2bar = eps.iter().map(|e| e * e).sum::<f64>() / n as f64;

        let ll = |th: &[f64; 5]| {
            let u: Vec<f64> = (0..n)
                .map(|t| {
                    x[t] - th[0] - th[1] * q[t].abs() - th[2] * eps[t] - th[3] * (eps[t].powi(2) - e2bar)
                })
                .collect();
            measurement_loglik(&u, th[4]).unwrap()
        };
        let th = [0.1, 0.3, 0.05, 0.1, 0.4];
        let u: Vec<f64> = (0..n)
            .map(|t| x[t] - th[0] - th[1] * q[t].abs() - th[2] * eps[t] - th[3] * (eps[t].powi(2) - e2bar))
            .collect();
        let s2 = th[4] * th[4];
        let regs = |t: usize| [1.0, q[t].abs(), eps[t], eps[t].powi(2) - e2bar];
        let mut analytic = [0.0; 5];
        for t in 0..n {
            let z = regs(t);
            for k in 0..4 {
                analytic[k] += u[t] * z[k] / s2;
            }
        }
        let ss: f64 = u.iter().map(|v| v * v).sum();
        analytic[4] = -(n as f64) / th[4] + ss / (s2 * th[4]);

        for k in 0..5 {
            let h = 1e-6;
            let mut up = th;
            let mut dn = th;
            up[k] += h;
            dn[k] -= h;
            let fd = (ll(&up) - ll(&dn)) / (2.0 * h);
            let rel = (fd - analytic[k]).abs() / analytic[k].abs().max(1.0);
            assert!(rel < 1e-5, "param {k}: fd {fd} vs analytic {}", analytic[k]);
        }
    }

    /// With Q fixed and a single constant ES, the AL likelihood peaks at
    /// ES* = -mean[(r - Q)(alpha - I) / alpha].
    #[test]
    fn constant_es_optimum() {
        let n = 400;
        let alpha = 0.05;
        let r: Vec<f64> = (0..n).map(|i| 2.0 * ((i as f64) * 2.39).sin()).collect();
        let q = vec![-1.6; n];
        let es_star = -r
            .iter()
            .map(|&r| {
                let hit = if r <= -1.6 { 1.0 } else { 0.0 };
                (r + 1.6) * (alpha - hit) / alpha
            })
            .sum::<f64>()
            / n as f64;
        let mut best = (f64::NEG_INFINITY, 0.0);
        for k in 1..=4000 {
            let e = -0.001 * k as f64;
            let l = al_loglik(&r, &q, &vec![e; n], alpha).unwrap();
            if l > best.0 {
                best = (l, e);
            }
        }
        assert!((best.1 - es_star).abs() < 1.5e-3, "{} vs {}", best.1, es_star);
    }
}
