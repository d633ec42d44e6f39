//! Two-stage DCC(1,1).
//!
//! Stage one fits a GARCH(1,1) per asset and standardizes the residuals.
//! Stage two drives the correlation through
//!
//! Q_t = (1 − θ₁ − θ₂) Q̂ + θ₁ z_{t−1} z_{t−1}ᵀ + θ₂ Q_{t−1},  Q₁ = Q̂,
//! R_t = diag(Q_t)^{−½} Q_t diag(Q_t)^{−½},
//!
//! and maximizes −½ Σ_t (ln|R_t| + z_tᵀ R_t⁻¹ z_t), optionally minus
//! Σ_t KL(Ẑ, R_t).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bekk::CovPath;
use crate::error::{Error, Result};
use crate::garch::{garch11_filter, garch11_fit, Garch11Params, GarchFit};
use crate::linalg::{cholesky, cholesky_in_place, forward_solve_in_place, trace_inv_gram, SymMatrix};
use crate::market_data::{pearson_correlation, ReturnPanel};
use crate::optimizer::{self, maximize, perturbed_starts, FitReport, OptimizerOptions};
use crate::rng;
use crate::targeting::{TargetInfo, TargetSpec};

const START_THETA: (f64, f64) = (0.05, 0.9);
const START_SPREAD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct DccParams {
    pub univariate: Vec<Garch11Params>,
    pub theta1: f64,
    pub theta2: f64,
    pub q_bar: DMatrix<f64>,
}

impl DccParams {
    pub fn new(univariate: Vec<Garch11Params>, theta1: f64, theta2: f64, q_bar: DMatrix<f64>) -> Result<Self> {
        let p = Self {
            univariate,
            theta1,
            theta2,
            q_bar,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.q_bar.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if !self.q_bar.is_square() || self.univariate.len() != n {
            return Err(Error::shape("Q̂ and univariate parameter counts disagree"));
        }
        if !(self.theta1 >= 0.0 && self.theta2 >= 0.0 && self.theta1 + self.theta2 < 1.0) {
            return Err(Error::domain(format!(
                "theta = ({}, {}) violates θ₁, θ₂ ≥ 0, θ₁ + θ₂ < 1",
                self.theta1, self.theta2
            )));
        }
        for i in 0..n {
            if (self.q_bar[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::domain("Q̂ must have unit diagonal"));
            }
        }
        SymMatrix::new(self.q_bar.clone())?;
        for g in &self.univariate {
            g.validate()?;
        }
        Ok(())
    }

    /// Relabelled parameters: asset k of the result is asset `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        Self::new(
            perm.iter().map(|&k| self.univariate[k]).collect(),
            self.theta1,
            self.theta2,
            DMatrix::from_fn(n, n, |i, j| self.q_bar[(perm[i], perm[j])]),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrPath {
    pub r: Vec<DMatrix<f64>>,
    pub q: Vec<DMatrix<f64>>,
}

/// Output of the univariate stage.
#[derive(Debug, Clone)]
pub struct Stage1 {
    pub fits: Vec<GarchFit>,
    /// T×N standardized residuals ε_t / √h_t.
    pub z: DMatrix<f64>,
    /// T×N conditional variances.
    pub variances: DMatrix<f64>,
    /// Sample correlation of `z`.
    pub q_bar: DMatrix<f64>,
}

impl Stage1 {
    pub fn params(&self) -> Vec<Garch11Params> {
        self.fits.iter().map(|f| f.params).collect()
    }
}

pub fn dcc_stage1(panel: &ReturnPanel, opts: &OptimizerOptions) -> Result<Stage1> {
    let eps = panel.demeaned();
    let labels = panel.labels();
    let fits: Vec<GarchFit> = (0..panel.n_assets())
        .into_par_iter()
        .map(|j| {
            let col: Vec<f64> = eps.column(j).iter().copied().collect();
            garch11_fit(&col, opts).map_err(|e| match e {
                Error::DegenerateSeries(_) => Error::DegenerateSeries(labels[j].clone()),
                Error::InsufficientData(m) => Error::InsufficientData(format!("`{}`: {m}", labels[j])),
                other => Error::Estimation(format!("GARCH(1,1) fit for `{}` failed: {other}", labels[j])),
            })
        })
        .collect::<Result<_>>()?;
    let h1: Vec<f64> = fits.iter().map(|f| f.h1).collect();
    let params: Vec<Garch11Params> = fits.iter().map(|f| f.params).collect();
    let (variances, z) = standardize(&eps, &params, &h1)?;
    let q_bar = pearson_correlation(&z, labels)?;
    Ok(Stage1 {
        fits,
        z,
        variances,
        q_bar,
    })
}

/// Per-asset GARCH filtering; returns (variances, standardized residuals).
pub fn standardize(eps: &DMatrix<f64>, params: &[Garch11Params], h1: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (t_len, n) = eps.shape();
    if params.len() != n || h1.len() != n {
        return Err(Error::shape("one GARCH model and initial variance per asset required"));
    }
    let mut variances = DMatrix::zeros(t_len, n);
    let mut z = DMatrix::zeros(t_len, n);
    for j in 0..n {
        let col: Vec<f64> = eps.column(j).iter().copied().collect();
        let path = garch11_filter(&col, &params[j], h1[j])?;
        variances.set_column(j, &DVector::from_vec(path.h));
        z.set_column(j, &DVector::from_vec(path.z));
    }
    Ok((variances, z))
}

fn rescale_into(q: &DMatrix<f64>, r: &mut DMatrix<f64>) {
    let n = q.nrows();
    for i in 0..n {
        for j in 0..n {
            r[(i, j)] = if i == j {
                1.0
            } else {
                q[(i, j)] / (q[(i, i)] * q[(j, j)]).sqrt()
            };
        }
    }
}

fn q_step(q: &mut DMatrix<f64>, q_bar: &DMatrix<f64>, theta1: f64, theta2: f64, shock: impl Fn(usize) -> f64) {
    let n = q.nrows();
    let w = 1.0 - theta1 - theta2;
    for j in 0..n {
        let zj = shock(j);
        for i in j..n {
            let v = w * q_bar[(i, j)] + theta1 * shock(i) * zj + theta2 * q[(i, j)];
            q[(i, j)] = v;
            q[(j, i)] = v;
        }
    }
}

fn run_filter(
    z: &DMatrix<f64>,
    q_bar: &DMatrix<f64>,
    theta1: f64,
    theta2: f64,
    mut visit: impl FnMut(usize, &DMatrix<f64>, &DMatrix<f64>) -> Result<()>,
) -> Result<()> {
    let n = q_bar.nrows();
    let mut q = q_bar.clone();
    let mut r = DMatrix::zeros(n, n);
    for t in 0..z.nrows() {
        if t > 0 {
            q_step(&mut q, q_bar, theta1, theta2, |i| z[(t - 1, i)]);
        }
        rescale_into(&q, &mut r);
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::Overflow { t: t + 1 });
        }
        visit(t, &q, &r)?;
    }
    Ok(())
}

fn check_z(z: &DMatrix<f64>, p: &DccParams) -> Result<()> {
    p.validate()?;
    if z.ncols() != p.n() {
        return Err(Error::shape(format!("residuals have {} columns, model has {} assets", z.ncols(), p.n())));
    }
    Ok(())
}

pub fn dcc_filter(z: &DMatrix<f64>, p: &DccParams) -> Result<CorrPath> {
    check_z(z, p)?;
    let mut out = CorrPath {
        r: Vec::with_capacity(z.nrows()),
        q: Vec::with_capacity(z.nrows()),
    };
    run_filter(z, &p.q_bar, p.theta1, p.theta2, |_, q, r| {
        out.q.push(q.clone());
        out.r.push(r.clone());
        Ok(())
    })?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default)]
struct Stage2Sums {
    /// Σ_t (ln|R_t| + z_tᵀ R_t⁻¹ z_t)
    gaussian: f64,
    /// Σ_t KL(Ẑ, R_t)
    penalty: f64,
}

struct TargetFactor {
    lower: DMatrix<f64>,
    logdet: f64,
}

impl TargetFactor {
    fn new(target: &TargetSpec) -> Result<Self> {
        let f = cholesky(&target.z_target)?;
        Ok(Self {
            logdet: f.logdet(),
            lower: f.lower().clone(),
        })
    }
}

fn stage2_sums(z: &DMatrix<f64>, q_bar: &DMatrix<f64>, theta1: f64, theta2: f64, target: Option<&TargetFactor>) -> Result<Stage2Sums> {
    let n = q_bar.nrows();
    let mut l = DMatrix::zeros(n, n);
    let mut y = vec![0.0; n];
    let mut sums = Stage2Sums::default();
    run_filter(z, q_bar, theta1, theta2, |t, _, r| {
        l.copy_from(r);
        let logdet = cholesky_in_place(&mut l)?;
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = z[(t, i)];
        }
        forward_solve_in_place(&l, &mut y);
        sums.gaussian += logdet + y.iter().map(|v| v * v).sum::<f64>();
        if let Some(tf) = target {
            let tr = trace_inv_gram(&l, &tf.lower, &mut y);
            sums.penalty += 0.5 * (logdet - tf.logdet + tr - n as f64);
        }
        Ok(())
    })?;
    Ok(sums)
}

/// Stage-two objective −½ Σ_t (ln|R_t| + z_tᵀ R_t⁻¹ z_t).
pub fn dcc_stage2_loglik(z: &DMatrix<f64>, p: &DccParams) -> Result<f64> {
    check_z(z, p)?;
    Ok(-0.5 * stage2_sums(z, &p.q_bar, p.theta1, p.theta2, None)?.gaussian)
}

/// Σ_t KL(Ẑ, R_t).
pub fn dcc_penalty(z: &DMatrix<f64>, p: &DccParams, target: &TargetSpec) -> Result<f64> {
    check_z(z, p)?;
    let tf = TargetFactor::new(target)?;
    Ok(stage2_sums(z, &p.q_bar, p.theta1, p.theta2, Some(&tf))?.penalty)
}

pub fn dcc_modified_loglik(z: &DMatrix<f64>, p: &DccParams, target: &TargetSpec) -> Result<f64> {
    check_z(z, p)?;
    if target.dim() != p.n() {
        return Err(Error::shape("target dimension differs from the model"));
    }
    let tf = TargetFactor::new(target)?;
    let s = stage2_sums(z, &p.q_bar, p.theta1, p.theta2, Some(&tf))?;
    Ok(-0.5 * s.gaussian - s.penalty)
}

#[derive(Debug, Clone)]
pub struct DccFit {
    pub params: DccParams,
    pub stage1: Stage1,
    pub target: Option<TargetInfo>,
    pub penalty_weight: f64,
    pub report: FitReport,
}

impl DccFit {
    /// Initial variances used by the stage-one filters.
    pub fn h1(&self) -> Vec<f64> {
        self.stage1.fits.iter().map(|f| f.h1).collect()
    }
}

pub fn dcc_fit(panel: &ReturnPanel, target: Option<&TargetSpec>, opts: &OptimizerOptions) -> Result<DccFit> {
    dcc_fit_weighted(panel, target, 1.0, opts)
}

/// Two-stage estimation; the penalty (scaled by `weight`) enters stage two
/// only.
pub fn dcc_fit_weighted(
    panel: &ReturnPanel,
    target: Option<&TargetSpec>,
    weight: f64,
    opts: &OptimizerOptions,
) -> Result<DccFit> {
    opts.validate()?;
    if let Some(t) = target {
        if t.dim() != panel.n_assets() {
            return Err(Error::shape("target dimension differs from the data"));
        }
    }
    let stage1 = dcc_stage1(panel, opts)?;
    let tf = target.map(TargetFactor::new).transpose()?;
    let z = &stage1.z;
    let q_bar = &stage1.q_bar;

    let (u1, u2) = optimizer::simplex_pair_inverse(START_THETA.0, START_THETA.1);
    let starts = perturbed_starts(&[u1, u2], opts.n_starts, opts.seed, START_SPREAD);
    let objective = |u: &[f64]| {
        let (t1, t2) = optimizer::simplex_pair(u[0], u[1]);
        match stage2_sums(z, q_bar, t1, t2, tf.as_ref()) {
            Ok(s) => -0.5 * s.gaussian - weight * s.penalty,
            Err(_) => f64::NAN,
        }
    };
    let best = maximize(objective, &starts, opts)?;
    let (theta1, theta2) = optimizer::simplex_pair(best.point[0], best.point[1]);
    let params = DccParams::new(stage1.params(), theta1, theta2, q_bar.clone())?;
    Ok(DccFit {
        params,
        stage1,
        target: target.map(TargetSpec::info),
        penalty_weight: if target.is_some() { weight } else { 0.0 },
        report: best.report,
    })
}

/// In-sample H_t = D_t R_t D_t rebuilt from parameters and data, with the
/// GARCH filters started at `h1`.
pub fn dcc_cov_path(panel: &ReturnPanel, p: &DccParams, h1: &[f64]) -> Result<CovPath> {
    let (variances, z) = standardize(&panel.demeaned(), &p.univariate, h1)?;
    let path = dcc_filter(&z, p)?;
    let h = path
        .r
        .iter()
        .enumerate()
        .map(|(t, r)| {
            let d: Vec<f64> = variances.row(t).iter().map(|v| v.sqrt()).collect();
            DMatrix::from_fn(r.nrows(), r.ncols(), |i, j| d[i] * r[(i, j)] * d[j])
        })
        .collect();
    Ok(CovPath { h })
}

/// Simulates T periods. GARCH variances start at `h1` (unconditional
/// variances when `None`) and Q₁ = Q̂; z_t = chol(R_t) η_t, r_t = μ + D_t z_t.
pub fn dcc_simulate(
    p: &DccParams,
    mu: &[f64],
    t_len: usize,
    seed: u64,
    h1: Option<&[f64]>,
    labels: Vec<String>,
) -> Result<ReturnPanel> {
    p.validate()?;
    let n = p.n();
    if mu.len() != n || h1.is_some_and(|h| h.len() != n) {
        return Err(Error::shape("mu or initial variances differ from the model dimension"));
    }
    let mut h: Vec<f64> = match h1 {
        Some(h) => h.to_vec(),
        None => p.univariate.iter().map(Garch11Params::unconditional_variance).collect(),
    };
    let mut rng = rng::seeded(seed);
    let mut eta = vec![0.0; n];
    let mut q = p.q_bar.clone();
    let mut r = DMatrix::zeros(n, n);
    let mut z = DVector::zeros(n);
    let mut eps = vec![0.0; n];
    let mut out = DMatrix::zeros(t_len, n);
    for t in 0..t_len {
        if t > 0 {
            for j in 0..n {
                let g = &p.univariate[j];
                h[j] = g.omega + g.alpha * eps[j] * eps[j] + g.beta * h[j];
            }
            q_step(&mut q, &p.q_bar, p.theta1, p.theta2, |i| z[i]);
        }
        rescale_into(&q, &mut r);
        if r.iter().any(|v| !v.is_finite()) || h.iter().any(|v| !v.is_finite()) {
            return Err(Error::Overflow { t: t + 1 });
        }
        cholesky_in_place(&mut r)?;
        rng::fill_standard_normal(&mut rng, &mut eta);
        z = &r * DVector::from_column_slice(&eta);
        for j in 0..n {
            eps[j] = h[j].sqrt() * z[j];
            out[(t, j)] = mu[j] + eps[j];
        }
    }
    ReturnPanel::new(labels, out)
}

/// Serialized form of a fitted DCC model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DccRecord {
    pub n: usize,
    pub labels: Vec<String>,
    pub univariate: Vec<Garch11Params>,
    pub theta1: f64,
    pub theta2: f64,
    pub q_bar: Vec<Vec<f64>>,
    pub target: Option<TargetInfo>,
    pub mu: Vec<f64>,
    /// Initial variances of the stage-one filters.
    pub h1: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty_weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitReport>,
}

impl DccRecord {
    pub fn from_fit(fit: &DccFit, panel: &ReturnPanel) -> Self {
        let n = fit.params.n();
        Self {
            n,
            labels: panel.labels().to_vec(),
            univariate: fit.params.univariate.clone(),
            theta1: fit.params.theta1,
            theta2: fit.params.theta2,
            q_bar: (0..n).map(|i| fit.params.q_bar.row(i).iter().copied().collect()).collect(),
            target: fit.target,
            mu: panel.mean().iter().copied().collect(),
            h1: fit.h1(),
            penalty_weight: fit.target.map(|_| fit.penalty_weight),
            fit: Some(fit.report.clone()),
        }
    }

    pub fn params(&self) -> Result<DccParams> {
        let n = self.n;
        if self.q_bar.len() != n || self.q_bar.iter().any(|r| r.len() != n) || self.h1.len() != n {
            return Err(Error::shape("q_bar or h1 does not match n"));
        }
        DccParams::new(
            self.univariate.clone(),
            self.theta1,
            self.theta2,
            DMatrix::from_fn(n, n, |i, j| self.q_bar[i][j]),
        )
    }
}
