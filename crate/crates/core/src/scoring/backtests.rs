use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::TestResult;
use crate::error::{Error, Result};

/// `x ln y` with `0 ln 0 = 0`.
fn xlny(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

fn chi2_sf(stat: f64, df: f64) -> f64 {
    if stat.is_infinite() {
        return 0.0;
    }
    1.0 - ChiSquared::new(df).expect("df > 0").cdf(stat.max(0.0))
}

/// Kupiec unconditional coverage LR test for `x` violations in `m` days.
pub fn uc_test(x: usize, m: usize, alpha: f64) -> Result<TestResult> {
    if m == 0 || x > m {
        return Err(Error::Config(format!("invalid violation count {x} of {m}")));
    }
    let (xf, mf) = (x as f64, m as f64);
    let p = xf / mf;
    let null = xlny(mf - xf, 1.0 - alpha) + xlny(xf, alpha);
    let alt = xlny(mf - xf, 1.0 - p) + xlny(xf, p);
    let lr = (-2.0 * (null - alt)).max(0.0);
    Ok(TestResult::new(lr, chi2_sf(lr, 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcResult {
    pub test: TestResult,
    pub lr_uc: f64,
    pub lr_ind: f64,
    /// Transition counts `[n00, n01, n10, n11]`.
    pub counts: [usize; 4],
    pub degenerate: bool,
}

/// Christoffersen conditional coverage: `LR_uc + LR_ind` against chi-square(2).
pub fn cc_test(hits: &[bool], alpha: f64) -> Result<CcResult> {
    let m = hits.len();
    if m < 2 {
        return Err(Error::TooShort { need: 2, got: m });
    }
    let x = hits.iter().filter(|&&h| h).count();
    let lr_uc = uc_test(x, m, alpha)?.stat;

    let mut c = [0usize; 4];
    for w in hits.windows(2) {
        c[(w[0] as usize) * 2 + w[1] as usize] += 1;
    }
    let [n00, n01, n10, n11] = c.map(|v| v as f64);
    let degenerate = n01 + n11 == 0.0 || n00 + n10 == 0.0;
    let lr_ind = if degenerate {
        0.0
    } else {
        let p01 = n01 / (n00 + n01).max(1.0);
        let p11 = n11 / (n10 + n11).max(1.0);
        let p = (n01 + n11) / (n00 + n01 + n10 + n11);
        let null = xlny(n00 + n10, 1.0 - p) + xlny(n01 + n11, p);
        let alt = xlny(n00, 1.0 - p01) + xlny(n01, p01) + xlny(n10, 1.0 - p11) + xlny(n11, p11);
        (-2.0 * (null - alt)).max(0.0)
    };
    let stat = lr_uc + lr_ind;
    Ok(CcResult {
        test: TestResult::new(stat, chi2_sf(stat, 2.0)),
        lr_uc,
        lr_ind,
        counts: c,
        degenerate,
    })
}

/// Engle-Manganelli dynamic quantile test with `lags` lagged hits and the
/// contemporaneous VaR as regressors, against chi-square(`lags` + 2).
pub fn dq_test(returns: &[f64], var: &[f64], alpha: f64, lags: usize) -> Result<TestResult> {
    if returns.len() != var.len() {
        return Err(Error::LengthMismatch(format!("{} returns vs {} VaR", returns.len(), var.len())));
    }
    let m = returns.len();
    let k = lags + 2;
    if m < lags + k + 1 {
        return Err(Error::TooShort { need: lags + k + 1, got: m });
    }
    let hit: Vec<f64> = returns
        .iter()
        .zip(var)
        .map(|(r, v)| if r < v { 1.0 - alpha } else { -alpha })
        .collect();
    let rows = m - lags;
    let x = DMatrix::from_fn(rows, k, |i, j| {
        let t = i + lags;
        match j {
            0 => 1.0,
            j if j <= lags => hit[t - j],
            _ => var[t],
        }
    });
    let y = DVector::from_fn(rows, |i, _| hit[i + lags]);
    dq_statistic(&x, &y, alpha, k)
}

fn dq_statistic(x: &DMatrix<f64>, y: &DVector<f64>, alpha: f64, df: usize) -> Result<TestResult> {
    // Rank check on the column-normalised Gram matrix.
    let norms: Vec<f64> = x.column_iter().map(|c| c.norm()).collect();
    if norms.iter().any(|n| !(*n > 0.0)) {
        return Err(Error::Singular("zero regressor column".into()));
    }
    let xn = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] / norms[j]);
    let gram = xn.transpose() * &xn;
    let eig = SymmetricEigen::new(gram.clone()).eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &e| (l.min(e), h.max(e)));
    if !(lo > 1e-10 * hi) {
        return Err(Error::Singular(format!("DQ design has condition ratio {:.2e}", lo / hi)));
    }
    let xty = xn.transpose() * y;
    let beta = gram
        .cholesky()
        .ok_or_else(|| Error::Singular("DQ Gram matrix not positive definite".into()))?
        .solve(&xty);
    let stat = (xty.dot(&beta) / (alpha * (1.0 - alpha))).max(0.0);
    Ok(TestResult::new(stat, chi2_sf(stat, df as f64)))
}
