//! Classical estimators used as comparison points for the network.
//!
//! * [`lse_drift`]: least-squares drift of the discretised OU recursion.
//! * [`cqmle_fit`]: Cauchy quasi-maximum likelihood for `(eta, epsilon)`, treating
//!   each increment `dx_j` as Cauchy with location `-eta x_j h` and scale
//!   `epsilon h`, followed by a Student-t fit of `nu` on unit-time residual sums.
//! * [`midpoint_predictor`]: the centre of the training ranges.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::family::{ParamVector, SdeFamily};
use crate::nelder_mead::{minimize, NelderMeadOptions};
use crate::sim::Trajectory;
use crate::stats::median;

/// `eta_hat = -sum x_j (x_{j+1} - x_j) / (h sum x_j^2)`.
pub fn lse_drift(traj: &Trajectory) -> Result<f64> {
    let x = &traj.values;
    if x.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "least squares needs at least 3 observations, got {}",
            x.len()
        )));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for w in x.windows(2) {
        num += w[0] * (w[1] - w[0]);
        den += w[0] * w[0];
    }
    if !(den > 0.0) {
        return Err(Error::DegenerateInput("path is identically zero".into()));
    }
    Ok(-num / (traj.h * den))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CqmleResult {
    pub eta_hat: f64,
    pub epsilon_hat: f64,
    /// Degrees of freedom fitted on unit-time residual aggregates.
    pub nu_hat: f64,
    pub converged: bool,
    /// Maximised Cauchy quasi-log-likelihood.
    pub objective_value: f64,
    /// Objective evaluations spent across the multistart.
    pub iterations: usize,
    /// `epsilon_hat` sits on the lower bound of the search box.
    pub at_boundary: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct CqmleOptions {
    pub nelder_mead: NelderMeadOptions,
    /// Lower bound on `ln epsilon`.
    pub log_eps_min: f64,
    /// Search interval for `nu`.
    pub nu_bounds: (f64, f64),
}

impl Default for CqmleOptions {
    fn default() -> Self {
        Self {
            nelder_mead: NelderMeadOptions::default(),
            log_eps_min: (1e-10f64).ln(),
            nu_bounds: (2.001, 50.0),
        }
    }
}

/// Negative Cauchy quasi-log-likelihood at `(eta, ln epsilon)`.
fn cauchy_nll(x: &[f64], h: f64, eta: f64, log_eps: f64) -> f64 {
    let s = log_eps.exp() * h;
    let s2 = s * s;
    let mut acc = 0.0;
    for w in x.windows(2) {
        let r = w[1] - w[0] + eta * w[0] * h;
        acc += (s2 + r * r).ln();
    }
    let m = (x.len() - 1) as f64;
    acc - m * (s / std::f64::consts::PI).ln()
}

/// Cauchy quasi-log-likelihood `sum_j ln[(eps h / pi) / ((eps h)^2 + (dx_j + eta x_j h)^2)]`.
pub fn cauchy_quasi_loglik(traj: &Trajectory, eta: f64, epsilon: f64) -> f64 {
    -cauchy_nll(&traj.values, traj.h, eta, epsilon.ln())
}

pub fn cqmle_fit(traj: &Trajectory, init: Option<(f64, f64)>) -> Result<CqmleResult> {
    cqmle_fit_with(traj, init, CqmleOptions::default())
}

pub fn cqmle_fit_with(
    traj: &Trajectory,
    init: Option<(f64, f64)>,
    opts: CqmleOptions,
) -> Result<CqmleResult> {
    let x = &traj.values;
    let h = traj.h;
    if x.len() < 10 {
        return Err(Error::InvalidArgument(format!(
            "CQMLE needs at least 10 observations, got {}",
            x.len()
        )));
    }

    // deterministic multistart around a moment-style pilot
    let eta0 = match init {
        Some((e, _)) => e,
        None => lse_drift(traj).unwrap_or(0.0).clamp(-10.0, 50.0),
    };
    let log_eps0 = match init {
        Some((_, eps)) if eps > 0.0 => eps.ln(),
        _ => {
            let r: Vec<f64> = x.windows(2).map(|w| (w[1] - w[0] + eta0 * w[0] * h).abs()).collect();
            let m = median(&r) / h;
            if m > 0.0 {
                m.ln().max(opts.log_eps_min)
            } else {
                opts.log_eps_min
            }
        }
    };
    let starts = [
        (eta0, log_eps0),
        (eta0, log_eps0 + 1.0),
        (eta0, log_eps0 - 1.0),
        (0.5 * eta0, log_eps0),
        (2.0 * eta0 + 1.0, log_eps0),
    ];

    let lo = opts.log_eps_min;
    let objective = |p: &[f64]| cauchy_nll(x, h, p[0], p[1].max(lo));
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    let mut evals = 0;
    for &(e, s) in &starts {
        let r = minimize(objective, &[e, s], &[0.5 + 0.1 * e.abs(), 0.5], opts.nelder_mead);
        evals += r.evals;
        let better = match &best {
            None => true,
            Some((_, f, _)) => r.fx < *f,
        };
        if better {
            best = Some((r.x, r.fx, r.converged));
        }
    }
    let (p, nll, converged) = best.expect("multistart is non-empty");
    let log_eps = p[1].max(lo);
    let eta_hat = p[0];
    let epsilon_hat = log_eps.exp();
    let at_boundary = log_eps <= lo + 1e-9;

    let nu_hat = fit_nu_on_unit_blocks(x, h, eta_hat, epsilon_hat, opts.nu_bounds);

    Ok(CqmleResult {
        eta_hat,
        epsilon_hat,
        nu_hat,
        converged: converged && nll.is_finite(),
        objective_value: -nll,
        iterations: evals,
        at_boundary,
    })
}

/// Sums of standardized residuals over consecutive blocks of `round(1/h)` steps.
pub fn unit_time_aggregates(x: &[f64], h: f64, eta: f64, epsilon: f64) -> Vec<f64> {
    let block = ((1.0 / h).round() as usize).max(1);
    let r: Vec<f64> = x
        .windows(2)
        .map(|w| (w[1] - w[0] + eta * w[0] * h) / epsilon)
        .collect();
    let full = r.len() / block;
    if full == 0 {
        return vec![r.iter().sum()];
    }
    r.chunks_exact(block).map(|c| c.iter().sum()).collect()
}

/// Log-density of the unit-scale Student-t law.
pub fn student_t_logpdf(x: f64, nu: f64) -> f64 {
    ln_gamma(0.5 * (nu + 1.0))
        - ln_gamma(0.5 * nu)
        - 0.5 * (std::f64::consts::PI * nu).ln()
        - 0.5 * (nu + 1.0) * (x * x / nu).ln_1p()
}

fn fit_nu_on_unit_blocks(x: &[f64], h: f64, eta: f64, epsilon: f64, bounds: (f64, f64)) -> f64 {
    let agg = unit_time_aggregates(x, h, eta, epsilon);
    if agg.iter().any(|a| !a.is_finite()) {
        return f64::NAN;
    }
    let ll = |nu: f64| agg.iter().map(|&a| student_t_logpdf(a, nu)).sum::<f64>();
    max_on_interval(ll, bounds.0, bounds.1)
}

/// Maximise a 1-D function on `[lo, hi]`: log-spaced grid then golden section.
fn max_on_interval(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let k = 80;
    let (llo, lhi) = (lo.ln(), hi.ln());
    let grid: Vec<f64> = (0..=k)
        .map(|i| (llo + (lhi - llo) * i as f64 / k as f64).exp())
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&g| f(g)).collect();
    let (ib, _) = vals
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    let mut a = grid[ib.saturating_sub(1)];
    let mut b = grid[(ib + 1).min(k)];
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..100 {
        if (b - a).abs() < 1e-9 * (1.0 + a.abs()) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    // endpoints may win on monotone likelihoods
    [mid, grid[ib]]
        .into_iter()
        .fold((mid, f(mid)), |(bx, bv), x| {
            let v = f(x);
            if v > bv {
                (x, v)
            } else {
                (bx, bv)
            }
        })
        .0
}

/// The centre of each training range.
pub fn midpoint_predictor(family: &SdeFamily) -> ParamVector {
    family.midpoint()
}
