//! Multi-start maximizer shared by every likelihood in the crate.
//!
//! Each start runs a Nelder-Mead phase followed by BFGS polishing with
//! central finite-difference gradients. Constraints are handled by the
//! callers through smooth bijections onto the feasible set; the helpers at
//! the bottom of this module provide the ones the models need.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerOptions {
    pub max_iters: usize,
    pub tol_obj: f64,
    pub tol_step: f64,
    pub n_starts: usize,
    pub seed: u64,
    /// Relative central-difference step.
    pub fd_step: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            tol_obj: 1e-8,
            tol_step: 1e-8,
            n_starts: 5,
            seed: 0,
            fd_step: 1e-5,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_starts == 0 {
            return Err(Error::domain("n_starts must be at least 1"));
        }
        if !(self.tol_obj > 0.0 && self.tol_step > 0.0 && self.fd_step > 0.0) {
            return Err(Error::domain("optimizer tolerances must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::domain("max_iters must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartOutcome {
    /// `None` when the objective was not finite at the start.
    pub objective: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub start_winner: usize,
    pub converged: bool,
    pub per_start: Vec<StartOutcome>,
}

#[derive(Debug, Clone)]
pub struct Optimum {
    pub point: Vec<f64>,
    pub report: FitReport,
}

/// Smooth bijection from ℝⁿ onto a constraint set.
pub trait Transform: Sync {
    fn to_constrained(&self, u: &[f64]) -> Vec<f64>;
    fn to_unconstrained(&self, x: &[f64]) -> Vec<f64>;
}

pub struct Identity;

impl Transform for Identity {
    fn to_constrained(&self, u: &[f64]) -> Vec<f64> {
        u.to_vec()
    }
    fn to_unconstrained(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}

/// Coordinate-wise x = exp(u).
pub struct Positive;

impl Transform for Positive {
    fn to_constrained(&self, u: &[f64]) -> Vec<f64> {
        u.iter().map(|v| v.exp()).collect()
    }
    fn to_unconstrained(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| v.ln()).collect()
    }
}

/// Central differences with per-coordinate step `step · max(|x_i|, 1)`.
pub fn fd_gradient<F>(f: F, x: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = step * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::Estimation(format!(
                "objective not finite when probing coordinate {i}"
            )));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// The base point followed by `n_starts − 1` Gaussian perturbations of it,
/// all drawn from `seed`.
pub fn perturbed_starts(base: &[f64], n_starts: usize, seed: u64, scale: f64) -> Vec<Vec<f64>> {
    let mut rng = rng::seeded(seed);
    let mut noise = vec![0.0; base.len()];
    let mut starts = vec![base.to_vec()];
    for _ in 1..n_starts {
        rng::fill_standard_normal(&mut rng, &mut noise);
        starts.push(base.iter().zip(&noise).map(|(b, e)| b + scale * e).collect());
    }
    starts
}

/// Maximizes `objective` over ℝⁿ from each start, returning the best point.
pub fn maximize<F>(objective: F, starts: &[Vec<f64>], opts: &OptimizerOptions) -> Result<Optimum>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    opts.validate()?;
    if starts.is_empty() {
        return Err(Error::domain("no starting points"));
    }
    let runs: Vec<Option<StartRun>> = starts
        .par_iter()
        .map(|x0| run_start(&objective, x0, opts))
        .collect();

    let mut best: Option<(usize, &StartRun)> = None;
    for (k, run) in runs.iter().enumerate() {
        if let Some(run) = run {
            if best.is_none_or(|(_, b)| run.value > b.value) {
                best = Some((k, run));
            }
        }
    }
    let Some((winner, run)) = best else {
        return Err(Error::Estimation(format!(
            "objective is not finite at any of the {} starts",
            starts.len()
        )));
    };
    let grad_norm = fd_gradient(&objective, &run.point, opts.fd_step)
        .map(|g| g.iter().map(|v| v * v).sum::<f64>().sqrt())
        .unwrap_or(f64::NAN);
    let per_start = runs
        .iter()
        .map(|r| match r {
            Some(r) => StartOutcome {
                objective: Some(r.value),
                converged: r.converged,
                iterations: r.iterations,
            },
            None => StartOutcome {
                objective: None,
                converged: false,
                iterations: 0,
            },
        })
        .collect();
    Ok(Optimum {
        point: run.point.clone(),
        report: FitReport {
            objective: run.value,
            grad_norm,
            iterations: runs.iter().flatten().map(|r| r.iterations).sum(),
            start_winner: winner,
            converged: run.converged,
            per_start,
        },
    })
}

/// Maximizes `objective` over the image of `transform`; starts and the
/// returned point are in constrained coordinates.
pub fn maximize_constrained<F, T>(
    objective: F,
    transform: &T,
    starts: &[Vec<f64>],
    opts: &OptimizerOptions,
) -> Result<Optimum>
where
    F: Fn(&[f64]) -> f64 + Sync,
    T: Transform,
{
    let free: Vec<Vec<f64>> = starts.iter().map(|x| transform.to_unconstrained(x)).collect();
    let mut opt = maximize(|u: &[f64]| objective(&transform.to_constrained(u)), &free, opts)?;
    opt.point = transform.to_constrained(&opt.point);
    Ok(opt)
}

struct StartRun {
    point: Vec<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
    /// Best objective after each iteration, both phases.
    #[cfg_attr(not(test), allow(dead_code))]
    trace: Vec<f64>,
}

fn run_start<F>(objective: &F, x0: &[f64], opts: &OptimizerOptions) -> Option<StartRun>
where
    F: Fn(&[f64]) -> f64,
{
    let f0 = objective(x0);
    if !f0.is_finite() {
        return None;
    }
    // Both phases minimize the negated objective.
    let cost = |x: &[f64]| {
        let v = objective(x);
        if v.is_finite() {
            -v
        } else {
            f64::INFINITY
        }
    };
    let mut trace = vec![f0];
    let nm = nelder_mead(&cost, x0, opts, &mut trace);
    let polish = bfgs(&cost, nm.point, nm.value, opts, &mut trace);
    Some(StartRun {
        point: polish.point,
        value: -polish.value,
        iterations: nm.iterations + polish.iterations,
        converged: nm.converged || polish.converged,
        trace,
    })
}

struct Phase {
    point: Vec<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Adaptive Nelder-Mead (dimension-dependent coefficients). Stops on a flat
/// simplex (relative spread below `max(tol_obj, 1e-10)`) or on the budget.
fn nelder_mead<F>(cost: &F, x0: &[f64], opts: &OptimizerOptions, trace: &mut Vec<f64>) -> Phase
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    if n == 0 {
        return Phase {
            point: vec![],
            value: cost(x0),
            iterations: 0,
            converged: true,
        };
    }
    let nf = n as f64;
    let (alpha, gamma, rho, sigma) = if n > 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), cost(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += 0.1 * x[i].abs().max(1.0);
        let v = cost(&x);
        simplex.push((x, v));
    }

    let order = |s: &mut Vec<(Vec<f64>, f64)>| {
        s.sort_by(|a, b| a.1.total_cmp(&b.1));
    };
    order(&mut simplex);

    let mut iterations = 0;
    let mut converged = false;
    let spread_tol = opts.tol_obj.max(1e-10);
    while iterations < opts.max_iters {
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| inf_norm(&x.iter().zip(&simplex[0].0).map(|(a, b)| a - b).collect::<Vec<_>>()))
            .fold(0.0, f64::max);
        if (worst - best).abs() <= spread_tol * (1.0 + best.abs())
            && diameter <= opts.tol_step.max(1e-6) * (1.0 + inf_norm(&simplex[0].0))
        {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / nf;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(alpha);
        let fr = cost(&xr);
        if fr < simplex[0].1 {
            let xe = along(alpha * gamma);
            let fe = cost(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(alpha * rho);
                let fc = cost(&xc);
                (xc, fc)
            } else {
                let xc = along(-rho);
                let fc = cost(&xc);
                (xc, fc)
            };
            if fc < fr.min(simplex[n].1) {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for (x, v) in simplex.iter_mut().skip(1) {
                    for (xi, bi) in x.iter_mut().zip(&x_best) {
                        *xi = bi + sigma * (*xi - bi);
                    }
                    *v = cost(x);
                }
            }
        }
        order(&mut simplex);
        trace.push(-simplex[0].1);
    }
    let (point, value) = simplex.swap_remove(0);
    Phase {
        point,
        value,
        iterations,
        converged,
    }
}

fn bfgs<F>(cost: &F, x0: Vec<f64>, f0: f64, opts: &OptimizerOptions, trace: &mut Vec<f64>) -> Phase
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut fx = f0;
    let Ok(mut g) = fd_gradient(cost, &x, opts.fd_step) else {
        return Phase {
            point: x,
            value: fx,
            iterations: 0,
            converged: false,
        };
    };
    let mut hinv = nalgebra::DMatrix::<f64>::identity(n, n);
    let mut iterations = 0;
    let mut converged = false;
    let grad_tol = |f: f64| 1e-4 * (1.0 + f.abs());

    while iterations < opts.max_iters {
        if inf_norm(&g) <= 1e-12 * (1.0 + fx.abs()) {
            converged = true;
            break;
        }
        iterations += 1;
        let gv = nalgebra::DVector::from_column_slice(&g);
        let mut dir = -(&hinv * &gv);
        let mut slope = dir.dot(&gv);
        if !(slope < 0.0) {
            hinv.fill_with_identity();
            dir = -gv.clone();
            slope = dir.dot(&gv);
        }

        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-12 {
            let trial: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, d)| a + t * d).collect();
            let ft = cost(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * t * slope {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            converged = inf_norm(&g) <= grad_tol(fx);
            break;
        };
        let Ok(g_new) = fd_gradient(cost, &x_new, opts.fd_step) else {
            // Keep the improved point; its neighbourhood is not evaluable.
            x = x_new;
            fx = f_new;
            trace.push(-fx);
            break;
        };

        let step: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let small_change = (fx - f_new).abs() <= opts.tol_obj * (1.0 + fx.abs());
        let small_step = inf_norm(&step) <= opts.tol_step * (1.0 + inf_norm(&x));

        let s = nalgebra::DVector::from_vec(step);
        let y = nalgebra::DVector::from_iterator(n, g_new.iter().zip(&g).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            hinv += (&s * s.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }

        x = x_new;
        fx = f_new;
        g = g_new;
        trace.push(-fx);
        if small_change && (small_step || inf_norm(&g) <= grad_tol(fx)) {
            converged = true;
            break;
        }
    }
    Phase {
        point: x,
        value: fx,
        iterations,
        converged,
    }
}

const EXP_CAP: f64 = 20.0;
const EXP_FLOOR: f64 = -60.0;
/// Largest radius in `radial_pair`; keeps a² + b² below 1 − 1e-9.
const RADIUS_MAX: f64 = 1.0 - 1e-9;

pub fn logistic(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-15, 1.0 - 1e-15);
    (p / (1.0 - p)).ln()
}

/// Maps ℝ² onto {α > 0, β > 0, α + β < 1} via a three-way softmax with a
/// fixed zero logit; 1 − α − β stays above ~1e-9.
pub fn simplex_pair(u1: f64, u2: f64) -> (f64, f64) {
    let e1 = u1.clamp(EXP_FLOOR, EXP_CAP).exp();
    let e2 = u2.clamp(EXP_FLOOR, EXP_CAP).exp();
    let d = 1.0 + e1 + e2;
    (e1 / d, e2 / d)
}

pub fn simplex_pair_inverse(a: f64, b: f64) -> (f64, f64) {
    let a = a.max(1e-12);
    let b = b.max(1e-12);
    let rest = (1.0 - a - b).max(1e-12);
    ((a / rest).ln(), (b / rest).ln())
}

/// Maps ℝ² onto the quarter disc {a ≥ 0, b ≥ 0, a² + b² < 1} by polar
/// coordinates with logistic radius and angle.
pub fn radial_pair(v: f64, w: f64) -> (f64, f64) {
    let r = RADIUS_MAX * logistic(v);
    let phi = std::f64::consts::FRAC_PI_2 * logistic(w);
    (r * phi.cos(), r * phi.sin())
}

pub fn radial_pair_inverse(a: f64, b: f64) -> (f64, f64) {
    let r = (a * a + b * b).sqrt();
    let phi = b.atan2(a);
    (logit(r / RADIUS_MAX), logit(phi / std::f64::consts::FRAC_PI_2))
}
