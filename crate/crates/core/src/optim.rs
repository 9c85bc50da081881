//! Derivative-free minimisation (Nelder-Mead with restarts).
//!
//! The objective may return `+inf` for infeasible points; such vertices are
//! simply never preferred. The routine is fully deterministic.

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadConfig {
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below this.
    pub ftol: f64,
    /// ...and the simplex diameter below this.
    pub xtol: f64,
    /// Number of restarts from the incumbent after convergence.
    pub restarts: usize,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        NelderMeadConfig {
            max_evals: 5000,
            ftol: 1e-9,
            xtol: 1e-9,
            restarts: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Minimises `f` from `x0` with initial per-coordinate steps `steps`.
pub fn nelder_mead<F>(f: F, x0: &[f64], steps: &[f64], cfg: &NelderMeadConfig) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut best_x = x0.to_vec();
    let mut best_f = eval(x0);
    let mut converged = false;
    let mut scale = 1.0;

    for _round in 0..=cfg.restarts {
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((best_x.clone(), best_f));
        for i in 0..n {
            let mut x = best_x.clone();
            let step = if steps[i] != 0.0 { steps[i] } else { 1e-3 };
            x[i] += step * scale;
            let fx = eval(&x);
            simplex.push((x, fx));
        }

        converged = false;
        while evals.get() < cfg.max_evals {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let f_lo = simplex[0].1;
            let f_hi = simplex[n].1;
            let spread = if f_lo.is_finite() && f_hi.is_finite() {
                (f_hi - f_lo).abs()
            } else {
                f64::INFINITY
            };
            let diameter = simplex[1..]
                .iter()
                .map(|(x, _)| {
                    x.iter()
                        .zip(&simplex[0].0)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if spread <= cfg.ftol * (1.0 + f_lo.abs()) && diameter <= cfg.xtol {
                converged = true;
                break;
            }

            let mut centroid = vec![0.0; n];
            for (x, _) in &simplex[..n] {
                for (c, v) in centroid.iter_mut().zip(x) {
                    *c += v / n as f64;
                }
            }
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[n].0)
                    .map(|(c, w)| c + t * (w - c))
                    .collect()
            };

            let xr = along(-1.0);
            let fr = eval(&xr);
            if fr < simplex[0].1 {
                let xe = along(-2.0);
                let fe = eval(&xe);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (xc, fc) = if fr < simplex[n].1 {
                    let xc = along(-0.5);
                    let fc = eval(&xc);
                    (xc, fc)
                } else {
                    let xc = along(0.5);
                    let fc = eval(&xc);
                    (xc, fc)
                };
                if fc < simplex[n].1.min(fr) {
                    simplex[n] = (xc, fc);
                } else {
                    // shrink toward the best vertex
                    let x0 = simplex[0].0.clone();
                    for (x, fx) in simplex[1..].iter_mut() {
                        for (xi, bi) in x.iter_mut().zip(&x0) {
                            *xi = bi + 0.5 * (*xi - bi);
                        }
                        *fx = eval(x);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[0].1 < best_f {
            best_x = simplex[0].0.clone();
            best_f = simplex[0].1;
        }
        if evals.get() >= cfg.max_evals {
            break;
        }
        scale *= 0.5;
    }

    Minimum {
        x: best_x,
        f: best_f,
        evals: evals.get(),
        converged,
    }
}

/// Golden-section minimisation of a unimodal function on `[a, b]`.
pub fn golden_section<F>(f: F, mut a: f64, mut b: f64, tol: f64, max_iter: usize) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..max_iter {
        if (b - a).abs() <= tol * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
