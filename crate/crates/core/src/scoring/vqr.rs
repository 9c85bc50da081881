use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::TestResult;
use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::optim::golden_section;

/// Check-loss minimiser `a` for fixed slope: the `ceil(alpha m)`-th order
/// statistic of the residuals.
fn profile_intercept(resid: &mut [f64], alpha: f64) -> f64 {
    let k = ((alpha * resid.len() as f64).ceil() as usize).clamp(1, resid.len()) - 1;
    *resid.select_nth_unstable_by(k, |a, b| a.total_cmp(b)).1
}

fn check_loss(y: &[f64], x: &[f64], a: f64, b: f64, alpha: f64) -> f64 {
    y.iter()
        .zip(x)
        .map(|(&y, &x)| {
            let u = y - a - b * x;
            u * (alpha - if u < 0.0 { 1.0 } else { 0.0 })
        })
        .sum()
}

/// Linear quantile regression of `y` on `(1, x)` at level `alpha`.
///
/// For fixed slope the optimal intercept is a residual order statistic, and the
/// profiled check loss is convex in the slope, so a golden-section search over
/// the slope solves the problem.
pub fn quantile_regression(y: &[f64], x: &[f64], alpha: f64) -> Result<(f64, f64)> {
    if y.len() != x.len() || y.len() < 3 {
        return Err(Error::LengthMismatch(format!("{} responses vs {} regressors", y.len(), x.len())));
    }
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if !(hi - lo > 1e-12 * (1.0 + lo.abs().max(hi.abs()))) {
        return Err(Error::Degenerate("constant VaR series".into()));
    }
    let profiled = |b: f64| {
        let mut resid: Vec<f64> = y.iter().zip(x).map(|(&yi, &xi)| yi - b * xi).collect();
        let a = profile_intercept(&mut resid, alpha);
        (a, check_loss(y, x, a, b, alpha))
    };
    let (b, _) = golden_section(|b| profiled(b).1, -20.0, 20.0, 1e-9, 200);
    let (a, _) = profiled(b);
    Ok((a, b))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VqrResult {
    pub test: TestResult,
    pub intercept: f64,
    pub slope: f64,
    /// Bootstrap covariance `[v_aa, v_ab, v_bb]`.
    pub cov: [f64; 3],
    pub bootstrap: usize,
}

/// Wald test of `(intercept, slope) = (0, 1)` with pairs-bootstrap covariance.
pub fn vqr_test(returns: &[f64], var: &[f64], alpha: f64, b: usize, seed: u64, exec: Exec) -> Result<VqrResult> {
    if b < 10 {
        return Err(Error::Config("VQR needs at least 10 bootstrap replicates".into()));
    }
    let (a_hat, b_hat) = quantile_regression(returns, var, alpha)?;
    let m = returns.len();
    let reps: Vec<Option<(f64, f64)>> = exec::map_indexed(exec, b, |i| {
        let mut rng = exec::item_rng(seed, i);
        let mut yy = Vec::with_capacity(m);
        let mut xx = Vec::with_capacity(m);
        for _ in 0..m {
            let j = rng.random_range(0..m);
            yy.push(returns[j]);
            xx.push(var[j]);
        }
        quantile_regression(&yy, &xx, alpha).ok()
    });
    let ok: Vec<(f64, f64)> = reps.into_iter().flatten().collect();
    if ok.len() < 10 {
        return Err(Error::Degenerate("too few usable bootstrap replicates".into()));
    }
    let n = ok.len() as f64;
    let ma = ok.iter().map(|p| p.0).sum::<f64>() / n;
    let mb = ok.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut vaa, mut vab, mut vbb) = (0.0, 0.0, 0.0);
    for (pa, pb) in &ok {
        vaa += (pa - ma).powi(2);
        vab += (pa - ma) * (pb - mb);
        vbb += (pb - mb).powi(2);
    }
    let (vaa, vab, vbb) = (vaa / (n - 1.0), vab / (n - 1.0), vbb / (n - 1.0));
    let cov = Matrix2::new(vaa, vab, vab, vbb);
    let d = Vector2::new(a_hat, b_hat - 1.0);
    let det = vaa * vbb - vab * vab;
    if !(det > 1e-14 * (vaa * vbb).max(f64::MIN_POSITIVE)) {
        return Err(Error::Degenerate("bootstrap covariance is singular (perfect fit?)".into()));
    }
    let inv = cov.try_inverse().ok_or_else(|| Error::Singular("VQR covariance".into()))?;
    let w = (d.transpose() * inv * d)[(0, 0)].max(0.0);
    let p = 1.0 - ChiSquared::new(2.0).expect("df > 0").cdf(w);
    Ok(VqrResult {
        test: TestResult::new(w, p),
        intercept: a_hat,
        slope: b_hat,
        cov: [vaa, vab, vbb],
        bootstrap: ok.len(),
    })
}
