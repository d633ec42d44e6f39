//! Univariate GARCH(1,1): variance filter, Gaussian quasi-likelihood and
//! estimation. Used as the first stage of the DCC procedure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{self, maximize, perturbed_starts, FitReport, OptimizerOptions};

pub const DEFAULT_MIN_OBS: usize = 50;
const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Garch11Params {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Garch11Params {
    pub fn new(omega: f64, alpha: f64, beta: f64) -> Result<Self> {
        let p = Self { omega, alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::domain(format!("invalid GARCH(1,1) parameters {self:?}")));
        }
        if !(self.alpha + self.beta < 1.0) {
            return Err(Error::domain(format!(
                "alpha + beta = {} is not below 1",
                self.alpha + self.beta
            )));
        }
        Ok(())
    }

    /// ω / (1 − α − β).
    pub fn unconditional_variance(&self) -> f64 {
        self.omega / (1.0 - self.alpha - self.beta)
    }

    fn from_free(u: &[f64], scale: f64) -> Self {
        let (alpha, beta) = optimizer::simplex_pair(u[1], u[2]);
        Self {
            omega: u[0].exp() * scale,
            alpha,
            beta,
        }
    }

    fn to_free(self, scale: f64) -> [f64; 3] {
        let (u1, u2) = optimizer::simplex_pair_inverse(self.alpha, self.beta);
        [(self.omega / scale).ln(), u1, u2]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariancePath {
    pub h: Vec<f64>,
    pub z: Vec<f64>,
}

/// h_t = ω + α ε²_{t−1} + β h_{t−1}, starting from `h1`.
pub fn garch11_filter(eps: &[f64], p: &Garch11Params, h1: f64) -> Result<VariancePath> {
    p.validate()?;
    if !(h1 > 0.0 && h1.is_finite()) {
        return Err(Error::domain(format!("initial variance {h1} must be positive")));
    }
    let mut h = Vec::with_capacity(eps.len());
    let mut z = Vec::with_capacity(eps.len());
    let mut ht = h1;
    for (t, &e) in eps.iter().enumerate() {
        if t > 0 {
            let prev = eps[t - 1];
            ht = p.omega + p.alpha * prev * prev + p.beta * ht;
        }
        if !(ht.is_finite() && ht > 0.0) {
            return Err(Error::Overflow { t: t + 1 });
        }
        h.push(ht);
        z.push(e / ht.sqrt());
    }
    Ok(VariancePath { h, z })
}

fn loglik_unchecked(eps: &[f64], p: &Garch11Params, h1: f64) -> f64 {
    let mut ht = h1;
    let mut total = 0.0;
    for (t, &e) in eps.iter().enumerate() {
        if t > 0 {
            let prev = eps[t - 1];
            ht = p.omega + p.alpha * prev * prev + p.beta * ht;
        }
        total += ht.ln() + e * e / ht;
    }
    -0.5 * (eps.len() as f64 * LN_2PI + total)
}

/// Gaussian log-likelihood −½ Σ (ln 2π + ln h_t + ε²_t / h_t).
pub fn garch11_loglik(eps: &[f64], p: &Garch11Params, h1: f64) -> Result<f64> {
    let path = garch11_filter(eps, p, h1)?;
    let total: f64 = path
        .h
        .iter()
        .zip(&path.z)
        .map(|(h, z)| LN_2PI + h.ln() + z * z)
        .sum();
    Ok(-0.5 * total)
}

fn variance(eps: &[f64]) -> f64 {
    let n = eps.len() as f64;
    let m = eps.iter().sum::<f64>() / n;
    eps.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / (n - 1.0)
}

#[derive(Debug, Clone)]
pub struct GarchFit {
    pub params: Garch11Params,
    /// Initial variance used in the filter (sample variance of the input).
    pub h1: f64,
    pub report: FitReport,
}

impl GarchFit {
    pub fn converged(&self) -> bool {
        self.report.converged
    }
}

pub fn garch11_fit(eps: &[f64], opts: &OptimizerOptions) -> Result<GarchFit> {
    garch11_fit_min_obs(eps, DEFAULT_MIN_OBS, opts)
}

/// Quasi-maximum-likelihood fit with h₁ fixed at the sample variance.
/// Non-convergence is reported through `report.converged`, not an error.
pub fn garch11_fit_min_obs(eps: &[f64], min_obs: usize, opts: &OptimizerOptions) -> Result<GarchFit> {
    if eps.len() < min_obs.max(2) {
        return Err(Error::InsufficientData(format!(
            "GARCH(1,1) needs at least {min_obs} observations, got {}",
            eps.len()
        )));
    }
    let first = eps[0];
    if eps.iter().all(|&e| e == first) {
        return Err(Error::DegenerateSeries("input".into()));
    }
    let h1 = variance(eps);
    let base = Garch11Params {
        omega: h1 * 0.05,
        alpha: 0.05,
        beta: 0.9,
    };
    let starts = perturbed_starts(&base.to_free(h1), opts.n_starts, opts.seed, 0.5);
    let best = maximize(
        |u: &[f64]| loglik_unchecked(eps, &Garch11Params::from_free(u, h1), h1),
        &starts,
        opts,
    )?;
    Ok(GarchFit {
        params: Garch11Params::from_free(&best.point, h1),
        h1,
        report: best.report,
    })
}

/// Simulates ε_t = √h_t η_t from i.i.d. standard normal `shocks`.
pub fn garch11_simulate(p: &Garch11Params, shocks: &[f64], h1: f64) -> Result<VariancePath> {
    p.validate()?;
    let mut h = Vec::with_capacity(shocks.len());
    let mut eps = Vec::with_capacity(shocks.len());
    let mut ht = h1;
    for (t, &eta) in shocks.iter().enumerate() {
        if t > 0 {
            let prev: f64 = eps[t - 1];
            ht = p.omega + p.alpha * prev * prev + p.beta * ht;
        }
        if !(ht.is_finite() && ht > 0.0) {
            return Err(Error::Overflow { t: t + 1 });
        }
        h.push(ht);
        eps.push(ht.sqrt() * eta);
    }
    Ok(VariancePath { h, z: eps })
}
