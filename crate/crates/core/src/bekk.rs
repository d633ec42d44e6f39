//! Diagonal BEKK(1,1):
//!
//! H_t = C Cᵀ + A ε_{t−1} ε_{t−1}ᵀ A + B H_{t−1} B
//!
//! with C lower triangular and A, B diagonal. Because A and B are diagonal
//! the recursion is entrywise: H_t[i,j] = (CCᵀ)[i,j] + a_i a_j ε_i ε_j +
//! b_i b_j H_{t−1}[i,j].
//!
//! The modified likelihood subtracts Σ_t KL(Σ̂, H_t) for a target Σ̂.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_in_place, forward_solve_in_place, trace_inv_gram, SymMatrix};
use crate::market_data::{sample_covariance, ReturnPanel};
use crate::optimizer::{self, maximize, perturbed_starts, FitReport, OptimizerOptions};
use crate::rng;
use crate::targeting::{TargetInfo, TargetSpec};

const LN_2PI: f64 = 1.837_877_066_409_345_3;
/// Observations required beyond the parameter count.
const OBS_BUFFER: usize = 10;
const START_A: f64 = 0.3;
const START_B: f64 = 0.9;
const START_SPREAD: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct BekkParams {
    pub c_lower: DMatrix<f64>,
    pub a_diag: Vec<f64>,
    pub b_diag: Vec<f64>,
}

impl BekkParams {
    pub fn new(c_lower: DMatrix<f64>, a_diag: Vec<f64>, b_diag: Vec<f64>) -> Result<Self> {
        let p = Self {
            c_lower,
            a_diag,
            b_diag,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.a_diag.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.c_lower.nrows() != n || self.c_lower.ncols() != n || self.b_diag.len() != n {
            return Err(Error::shape("C, a and b dimensions disagree"));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if self.c_lower[(i, j)] != 0.0 {
                    return Err(Error::domain("C must be lower triangular"));
                }
            }
            if !(self.c_lower[(i, i)] >= 0.0) {
                return Err(Error::domain("diagonal of C must be nonnegative"));
            }
            let (a, b) = (self.a_diag[i], self.b_diag[i]);
            if !(a >= 0.0 && b >= 0.0) {
                return Err(Error::domain("a and b must be nonnegative"));
            }
            if !(a * a + b * b < 1.0) {
                return Err(Error::domain(format!("a_{i}² + b_{i}² = {} is not below 1", a * a + b * b)));
            }
        }
        if self.c_lower.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("C has non-finite entries"));
        }
        Ok(())
    }

    pub fn cc(&self) -> DMatrix<f64> {
        &self.c_lower * self.c_lower.transpose()
    }

    /// E[H_t] for a stationary process: (CCᵀ)[i,j] / (1 − a_i a_j − b_i b_j).
    pub fn unconditional_cov(&self) -> SymMatrix {
        let cc = self.cc();
        let n = self.n();
        SymMatrix::symmetrize(DMatrix::from_fn(n, n, |i, j| {
            cc[(i, j)] / (1.0 - self.a_diag[i] * self.a_diag[j] - self.b_diag[i] * self.b_diag[j])
        }))
    }

    /// Parameters of the relabelled process whose asset k is asset `perm[k]`
    /// of this one.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let cc = self.cc();
        let n = self.n();
        let pcc = SymMatrix::symmetrize(DMatrix::from_fn(n, n, |i, j| cc[(perm[i], perm[j])]));
        let c = cholesky(&pcc)?.lower().clone();
        Self::new(
            c,
            perm.iter().map(|&k| self.a_diag[k]).collect(),
            perm.iter().map(|&k| self.b_diag[k]).collect(),
        )
    }

    fn n_free(n: usize) -> usize {
        n * (n + 1) / 2 + 2 * n
    }

    fn from_free(u: &[f64], n: usize) -> Self {
        let mut c = DMatrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in 0..=i {
                c[(i, j)] = if i == j { u[k].exp() } else { u[k] };
                k += 1;
            }
        }
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for i in 0..n {
            let (ai, bi) = optimizer::radial_pair(u[k + 2 * i], u[k + 2 * i + 1]);
            a.push(ai);
            b.push(bi);
        }
        Self {
            c_lower: c,
            a_diag: a,
            b_diag: b,
        }
    }

    fn to_free(&self) -> Vec<f64> {
        let n = self.n();
        let mut u = Vec::with_capacity(Self::n_free(n));
        for i in 0..n {
            for j in 0..=i {
                let c = self.c_lower[(i, j)];
                u.push(if i == j { c.max(1e-300).ln() } else { c });
            }
        }
        for i in 0..n {
            let (v, w) = optimizer::radial_pair_inverse(self.a_diag[i], self.b_diag[i]);
            u.push(v);
            u.push(w);
        }
        u
    }
}

/// Sequence of conditional covariance matrices H_1..H_T.
#[derive(Debug, Clone, PartialEq)]
pub struct CovPath {
    pub h: Vec<DMatrix<f64>>,
}

impl CovPath {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }
}

fn check_eps(eps: &DMatrix<f64>, n: usize) -> Result<()> {
    if eps.ncols() != n {
        return Err(Error::shape(format!("returns have {} columns, model has {n} assets", eps.ncols())));
    }
    Ok(())
}

/// Advances H in place to the next period given last period's shock.
fn step(h: &mut DMatrix<f64>, cc: &DMatrix<f64>, a: &[f64], b: &[f64], shock: impl Fn(usize) -> f64) {
    let n = a.len();
    for j in 0..n {
        let ej = shock(j);
        for i in j..n {
            let v = cc[(i, j)] + a[i] * a[j] * shock(i) * ej + b[i] * b[j] * h[(i, j)];
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
}

/// Runs the recursion from H_1 = `h1`, calling `visit(t, H_t)` for every
/// period (t zero-based).
fn run_filter(
    eps: &DMatrix<f64>,
    p: &BekkParams,
    h1: &DMatrix<f64>,
    mut visit: impl FnMut(usize, &DMatrix<f64>) -> Result<()>,
) -> Result<()> {
    let cc = p.cc();
    let mut h = h1.clone();
    for t in 0..eps.nrows() {
        if t > 0 {
            step(&mut h, &cc, &p.a_diag, &p.b_diag, |i| eps[(t - 1, i)]);
            if h.iter().any(|v| !v.is_finite()) {
                return Err(Error::Overflow { t: t + 1 });
            }
        }
        visit(t, &h)?;
    }
    Ok(())
}

pub fn bekk_filter(eps: &DMatrix<f64>, p: &BekkParams, h1: &SymMatrix) -> Result<CovPath> {
    p.validate()?;
    check_eps(eps, p.n())?;
    if h1.dim() != p.n() {
        return Err(Error::shape("H_1 dimension differs from the model"));
    }
    cholesky(h1)?;
    let mut out = Vec::with_capacity(eps.nrows());
    run_filter(eps, p, h1.as_matrix(), |_, h| {
        out.push(h.clone());
        Ok(())
    })?;
    Ok(CovPath { h: out })
}

/// Per-path sums accumulated in a single pass over the filter.
#[derive(Debug, Clone, Copy, Default)]
struct PathSums {
    /// Σ_t (ln|H_t| + ε_tᵀ H_t⁻¹ ε_t)
    gaussian: f64,
    /// Σ_t KL(Σ̂, H_t), zero without a target.
    penalty: f64,
}

struct TargetFactor {
    lower: DMatrix<f64>,
    logdet: f64,
}

impl TargetFactor {
    fn new(m: &SymMatrix) -> Result<Self> {
        let f = cholesky(m)?;
        Ok(Self {
            logdet: f.logdet(),
            lower: f.lower().clone(),
        })
    }
}

fn path_sums(eps: &DMatrix<f64>, p: &BekkParams, h1: &DMatrix<f64>, target: Option<&TargetFactor>) -> Result<PathSums> {
    let n = p.n();
    let mut l = DMatrix::zeros(n, n);
    let mut y = vec![0.0; n];
    let mut sums = PathSums::default();
    run_filter(eps, p, h1, |t, h| {
        l.copy_from(h);
        let logdet = cholesky_in_place(&mut l)?;
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = eps[(t, i)];
        }
        forward_solve_in_place(&l, &mut y);
        let quad: f64 = y.iter().map(|v| v * v).sum();
        sums.gaussian += logdet + quad;
        if let Some(tf) = target {
            let tr = trace_inv_gram(&l, &tf.lower, &mut y);
            sums.penalty += 0.5 * (logdet - tf.logdet + tr - n as f64);
        }
        Ok(())
    })?;
    Ok(sums)
}

fn gaussian_loglik(sums: &PathSums, t: usize, n: usize) -> f64 {
    -0.5 * (t * n) as f64 * LN_2PI - 0.5 * sums.gaussian
}

fn default_h1(eps: &DMatrix<f64>) -> DMatrix<f64> {
    sample_covariance(eps)
}

/// Gaussian log-likelihood with H_1 set to the sample covariance of `eps`.
pub fn bekk_loglik(eps: &DMatrix<f64>, p: &BekkParams) -> Result<f64> {
    bekk_loglik_with_h1(eps, p, &SymMatrix::symmetrize(default_h1(eps)))
}

pub fn bekk_loglik_with_h1(eps: &DMatrix<f64>, p: &BekkParams, h1: &SymMatrix) -> Result<f64> {
    p.validate()?;
    check_eps(eps, p.n())?;
    let sums = path_sums(eps, p, h1.as_matrix(), None)?;
    Ok(gaussian_loglik(&sums, eps.nrows(), p.n()))
}

/// Σ_t KL(Σ̂, H_t) along the filtered path (H_1 = sample covariance).
pub fn bekk_penalty(eps: &DMatrix<f64>, p: &BekkParams, target: &TargetSpec) -> Result<f64> {
    bekk_penalty_with_h1(eps, p, target, &SymMatrix::symmetrize(default_h1(eps)))
}

pub fn bekk_penalty_with_h1(eps: &DMatrix<f64>, p: &BekkParams, target: &TargetSpec, h1: &SymMatrix) -> Result<f64> {
    p.validate()?;
    check_eps(eps, p.n())?;
    if target.dim() != p.n() {
        return Err(Error::shape("target dimension differs from the model"));
    }
    let tf = TargetFactor::new(&target.sigma_hat)?;
    Ok(path_sums(eps, p, h1.as_matrix(), Some(&tf))?.penalty)
}

/// Log-likelihood minus Σ_t KL(Σ̂, H_t).
pub fn bekk_modified_loglik(eps: &DMatrix<f64>, p: &BekkParams, target: &TargetSpec) -> Result<f64> {
    p.validate()?;
    check_eps(eps, p.n())?;
    if target.dim() != p.n() {
        return Err(Error::shape("target dimension differs from the model"));
    }
    let tf = TargetFactor::new(&target.sigma_hat)?;
    let sums = path_sums(eps, p, &default_h1(eps), Some(&tf))?;
    Ok(gaussian_loglik(&sums, eps.nrows(), p.n()) - sums.penalty)
}

#[derive(Debug, Clone)]
pub struct BekkFit {
    pub params: BekkParams,
    pub h1: SymMatrix,
    pub target: Option<TargetInfo>,
    pub penalty_weight: f64,
    pub report: FitReport,
}

/// Maximizes the BEKK likelihood, or its KL-penalised version when a target
/// is given.
pub fn bekk_fit(eps: &DMatrix<f64>, target: Option<&TargetSpec>, opts: &OptimizerOptions) -> Result<BekkFit> {
    bekk_fit_weighted(eps, target, 1.0, opts)
}

/// As [`bekk_fit`], with the penalty scaled by `weight`.
pub fn bekk_fit_weighted(
    eps: &DMatrix<f64>,
    target: Option<&TargetSpec>,
    weight: f64,
    opts: &OptimizerOptions,
) -> Result<BekkFit> {
    let (t_len, n) = eps.shape();
    let k = BekkParams::n_free(n);
    if n == 0 || t_len < k + OBS_BUFFER {
        return Err(Error::InsufficientData(format!(
            "{t_len} observations for {k} BEKK parameters (need at least {})",
            k + OBS_BUFFER
        )));
    }
    if let Some(t) = target {
        if t.dim() != n {
            return Err(Error::shape("target dimension differs from the data"));
        }
    }
    let h1 = default_h1(eps);
    let sd: Vec<f64> = (0..n).map(|i| h1[(i, i)].sqrt()).collect();
    if let Some(j) = sd.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::DegenerateSeries(format!("column {j}")));
    }

    // Fit on per-asset standardized data; diagonal BEKK is equivariant under
    // diagonal rescaling and the KL penalty is invariant under congruence.
    let scaled = DMatrix::from_fn(t_len, n, |t, i| eps[(t, i)] / sd[i]);
    let h1_scaled = DMatrix::from_fn(n, n, |i, j| h1[(i, j)] / (sd[i] * sd[j]));
    let target_scaled = match target {
        Some(t) => {
            let s = t.sigma_hat.as_matrix();
            Some(TargetFactor::new(&SymMatrix::symmetrize(DMatrix::from_fn(n, n, |i, j| {
                s[(i, j)] / (sd[i] * sd[j])
            })))?)
        }
        None => None,
    };

    let start = {
        let shrink = 1.0 - START_A * START_A - START_B * START_B;
        let c = cholesky(&SymMatrix::symmetrize(&h1_scaled * shrink))?.lower().clone();
        BekkParams {
            c_lower: c,
            a_diag: vec![START_A; n],
            b_diag: vec![START_B; n],
        }
    };
    let starts = perturbed_starts(&start.to_free(), opts.n_starts, opts.seed, START_SPREAD);

    let objective = |u: &[f64]| {
        let p = BekkParams::from_free(u, n);
        match path_sums(&scaled, &p, &h1_scaled, target_scaled.as_ref()) {
            Ok(s) => gaussian_loglik(&s, t_len, n) - weight * s.penalty,
            Err(_) => f64::NAN,
        }
    };
    let best = maximize(objective, &starts, opts)?;

    let fitted = BekkParams::from_free(&best.point, n);
    let c = DMatrix::from_fn(n, n, |i, j| fitted.c_lower[(i, j)] * sd[i]);
    let params = BekkParams::new(c, fitted.a_diag, fitted.b_diag)?;

    let shift = t_len as f64 * sd.iter().map(|s| s.ln()).sum::<f64>();
    let mut report = best.report;
    report.objective -= shift;
    for s in &mut report.per_start {
        if let Some(v) = s.objective.as_mut() {
            *v -= shift;
        }
    }
    Ok(BekkFit {
        params,
        h1: SymMatrix::symmetrize(h1),
        target: target.map(TargetSpec::info),
        penalty_weight: if target.is_some() { weight } else { 0.0 },
        report,
    })
}

/// Simulates T periods: H_1 = `h1`, ε_t = chol(H_t) η_t with seeded standard
/// normal η_t, r_t = μ + ε_t.
pub fn bekk_simulate(
    p: &BekkParams,
    mu: &[f64],
    t_len: usize,
    seed: u64,
    h1: &SymMatrix,
    labels: Vec<String>,
) -> Result<ReturnPanel> {
    p.validate()?;
    let n = p.n();
    if mu.len() != n || h1.dim() != n {
        return Err(Error::shape("mu or H_1 dimension differs from the model"));
    }
    let cc = p.cc();
    let mut rng = rng::seeded(seed);
    let mut eta = vec![0.0; n];
    let mut h = h1.as_matrix().clone();
    let mut l = DMatrix::zeros(n, n);
    let mut out = DMatrix::zeros(t_len, n);
    let mut eps = DVector::zeros(n);
    for t in 0..t_len {
        if t > 0 {
            step(&mut h, &cc, &p.a_diag, &p.b_diag, |i| eps[i]);
            if h.iter().any(|v| !v.is_finite()) {
                return Err(Error::Overflow { t: t + 1 });
            }
        }
        l.copy_from(&h);
        cholesky_in_place(&mut l)?;
        rng::fill_standard_normal(&mut rng, &mut eta);
        eps = &l * DVector::from_column_slice(&eta);
        for i in 0..n {
            out[(t, i)] = mu[i] + eps[i];
        }
    }
    ReturnPanel::new(labels, out)
}

/// Serialized form of a fitted BEKK model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BekkRecord {
    pub n: usize,
    pub labels: Vec<String>,
    /// Row-major lower triangle of C.
    pub c_lower: Vec<f64>,
    pub a_diag: Vec<f64>,
    pub b_diag: Vec<f64>,
    pub target: Option<TargetInfo>,
    pub mu: Vec<f64>,
    pub h1: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty_weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitReport>,
}

impl BekkRecord {
    pub fn from_fit(fit: &BekkFit, panel: &ReturnPanel) -> Self {
        let n = fit.params.n();
        let c = &fit.params.c_lower;
        let h1 = fit.h1.as_matrix();
        Self {
            n,
            labels: panel.labels().to_vec(),
            c_lower: (0..n).flat_map(|i| (0..=i).map(move |j| c[(i, j)])).collect(),
            a_diag: fit.params.a_diag.clone(),
            b_diag: fit.params.b_diag.clone(),
            target: fit.target,
            mu: panel.mean().iter().copied().collect(),
            h1: (0..n).map(|i| h1.row(i).iter().copied().collect()).collect(),
            penalty_weight: fit.target.map(|_| fit.penalty_weight),
            fit: Some(fit.report.clone()),
        }
    }

    pub fn params(&self) -> Result<BekkParams> {
        let n = self.n;
        if self.c_lower.len() != n * (n + 1) / 2 {
            return Err(Error::shape("c_lower length does not match n"));
        }
        let mut c = DMatrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in 0..=i {
                c[(i, j)] = self.c_lower[k];
                k += 1;
            }
        }
        BekkParams::new(c, self.a_diag.clone(), self.b_diag.clone())
    }

    pub fn h1(&self) -> Result<SymMatrix> {
        if self.h1.len() != self.n || self.h1.iter().any(|r| r.len() != self.n) {
            return Err(Error::shape("h1 is not n x n"));
        }
        SymMatrix::new(DMatrix::from_fn(self.n, self.n, |i, j| self.h1[i][j]))
    }
}
