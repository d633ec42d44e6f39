//! Fit, simulate and compare: the evaluation pipeline behind the CLI.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bekk::{bekk_filter, bekk_fit, bekk_simulate, BekkRecord, CovPath};
use crate::dcc::{dcc_cov_path, dcc_fit, dcc_simulate, DccRecord};
use crate::error::{Error, Result};
use crate::linalg::{frobenius_path_loss, kl_divergence, SymMatrix};
use crate::market_data::{sample_moments, ReturnPanel, SampleMoments};
use crate::netgraph::{build_graph, compare_graphs, maximal_cliques, GraphComparison};
use crate::optimizer::{FitReport, OptimizerOptions};
use crate::targeting::{build_target, TargetSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Bekk,
    BekkMod,
    Dcc,
    DccMod,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Bekk, ModelKind::BekkMod, ModelKind::Dcc, ModelKind::DccMod];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Bekk => "bekk",
            ModelKind::BekkMod => "bekk_mod",
            ModelKind::Dcc => "dcc",
            ModelKind::DccMod => "dcc_mod",
        }
    }

    pub fn is_modified(self) -> bool {
        matches!(self, ModelKind::BekkMod | ModelKind::DccMod)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown model `{s}` (expected bekk, bekk_mod, dcc or dcc_mod)")))
    }
}

/// Fitted parameters of either family, tagged by `model`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelParams {
    Bekk(BekkRecord),
    Dcc(DccRecord),
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Bekk(r) if r.target.is_some() => ModelKind::BekkMod,
            ModelParams::Bekk(_) => ModelKind::Bekk,
            ModelParams::Dcc(r) if r.target.is_some() => ModelKind::DccMod,
            ModelParams::Dcc(_) => ModelKind::Dcc,
        }
    }

    pub fn labels(&self) -> &[String] {
        match self {
            ModelParams::Bekk(r) => &r.labels,
            ModelParams::Dcc(r) => &r.labels,
        }
    }

    pub fn fit_report(&self) -> Option<&FitReport> {
        match self {
            ModelParams::Bekk(r) => r.fit.as_ref(),
            ModelParams::Dcc(r) => r.fit.as_ref(),
        }
    }

    /// In-sample conditional covariances on `panel`.
    pub fn cov_path(&self, panel: &ReturnPanel) -> Result<CovPath> {
        if panel.labels() != self.labels() {
            return Err(Error::shape("panel labels differ from the fitted model"));
        }
        match self {
            ModelParams::Bekk(r) => bekk_filter(&panel.demeaned(), &r.params()?, &r.h1()?),
            ModelParams::Dcc(r) => dcc_cov_path(panel, &r.params()?, &r.h1),
        }
    }

    pub fn simulate(&self, t_len: usize, seed: u64) -> Result<ReturnPanel> {
        match self {
            ModelParams::Bekk(r) => bekk_simulate(&r.params()?, &r.mu, t_len, seed, &r.h1()?, r.labels.clone()),
            ModelParams::Dcc(r) => dcc_simulate(&r.params()?, &r.mu, t_len, seed, Some(&r.h1), r.labels.clone()),
        }
    }
}

/// Fits one model variant. Modified variants need `target`.
pub fn fit_model(
    kind: ModelKind,
    panel: &ReturnPanel,
    target: Option<&TargetSpec>,
    opts: &OptimizerOptions,
) -> Result<ModelParams> {
    let target = if kind.is_modified() {
        Some(target.ok_or_else(|| Error::domain(format!("{kind} needs a threshold delta")))?)
    } else {
        None
    };
    match kind {
        ModelKind::Bekk | ModelKind::BekkMod => {
            let fit = bekk_fit(&panel.demeaned(), target, opts)?;
            Ok(ModelParams::Bekk(BekkRecord::from_fit(&fit, panel)))
        }
        ModelKind::Dcc | ModelKind::DccMod => {
            let fit = dcc_fit(panel, target, opts)?;
            Ok(ModelParams::Dcc(DccRecord::from_fit(&fit, panel)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub models: Vec<ModelKind>,
    pub delta: f64,
    /// Simulated path length; the in-sample length when `None`.
    pub sim_len: Option<usize>,
    pub seed: u64,
    pub optimizer: OptimizerOptions,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            models: ModelKind::ALL.to_vec(),
            delta: 0.5,
            sim_len: None,
            seed: 0,
            optimizer: OptimizerOptions::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::domain("no models requested"));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::domain(format!("threshold {} is outside [0, 1)", self.delta)));
        }
        if self.sim_len.is_some_and(|n| n < 2) {
            return Err(Error::domain("sim_len must be at least 2"));
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub start_winner: usize,
    pub converged: bool,
}

impl From<&FitReport> for Diagnostics {
    fn from(r: &FitReport) -> Self {
        Self {
            objective: r.objective,
            grad_norm: r.grad_norm,
            iterations: r.iterations,
            start_winner: r.start_winner,
            converged: r.converged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: ModelKind,
    pub delta: f64,
    /// Frobenius loss of the in-sample path against the thresholded target Σ̂.
    pub f_loss_target: f64,
    /// Frobenius loss of the in-sample path against the sample covariance.
    pub f_loss_sample: f64,
    /// KL between Σ̂ and the simulated sample covariance Σ̂_S.
    pub kl_loss: f64,
    pub simulated_cliques: Vec<Vec<String>>,
    pub comparison: GraphComparison,
    pub pd_adjusted: bool,
    pub diagnostics: Option<Diagnostics>,
    pub params: ModelParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub labels: Vec<String>,
    pub n_obs: usize,
    pub delta: f64,
    pub sim_len: usize,
    pub seed: u64,
    pub pd_adjusted: bool,
    pub observed_edges: Vec<(usize, usize, f64)>,
    pub observed_cliques: Vec<Vec<String>>,
    pub models: Vec<ModelReport>,
}

/// ½[ln(|Σ̂_S| / |Σ̂|) + Tr(Σ̂_S⁻¹ Σ̂) − N].
pub fn simulated_kl(sigma_hat: &SymMatrix, simulated_cov: &SymMatrix) -> Result<f64> {
    kl_divergence(sigma_hat, simulated_cov)
}

/// Losses, simulation and graph comparison for already fitted parameters.
pub fn assess_model(
    params: &ModelParams,
    panel: &ReturnPanel,
    moments: &SampleMoments,
    target: &TargetSpec,
    sim_len: usize,
    seed: u64,
) -> Result<ModelReport> {
    let path = params.cov_path(panel)?;
    let f_loss_target = frobenius_path_loss(&path.h, &target.sigma_hat)?;
    let f_loss_sample = frobenius_path_loss(&path.h, &SymMatrix::symmetrize(moments.cov.clone()))?;

    let sim = params.simulate(sim_len, seed)?;
    let sim_moments = sample_moments(&sim)?;
    let kl_loss = simulated_kl(&target.sigma_hat, &SymMatrix::symmetrize(sim_moments.cov.clone()))?;

    let labels = panel.labels();
    let observed = build_graph(&moments.corr, labels, target.delta)?;
    let simulated = build_graph(&sim_moments.corr, labels, target.delta)?;
    Ok(ModelReport {
        model: params.kind(),
        delta: target.delta,
        f_loss_target,
        f_loss_sample,
        kl_loss,
        simulated_cliques: maximal_cliques(&simulated).to_labels(labels),
        comparison: compare_graphs(&observed, &simulated)?,
        pd_adjusted: target.pd_adjusted,
        diagnostics: params.fit_report().map(Diagnostics::from),
        params: params.clone(),
    })
}

/// Fits every requested model (concurrently) and assembles the report. All
/// models share the simulation seed so their simulated paths use the same
/// Gaussian draws.
pub fn evaluate(panel: &ReturnPanel, cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let moments = sample_moments(panel)?;
    let target = build_target(&moments, cfg.delta)?;
    let sim_len = cfg.sim_len.unwrap_or(panel.n_obs());
    let opts = OptimizerOptions {
        seed: cfg.seed,
        ..cfg.optimizer.clone()
    };
    let models = cfg
        .models
        .par_iter()
        .map(|&kind| {
            let params = fit_model(kind, panel, Some(&target), &opts)?;
            if let Some(r) = params.fit_report() {
                log::debug!("{kind}: objective {} after {} iterations", r.objective, r.iterations);
            }
            assess_model(&params, panel, &moments, &target, sim_len, cfg.seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let observed = build_graph(&moments.corr, panel.labels(), cfg.delta)?;
    Ok(EvalReport {
        labels: panel.labels().to_vec(),
        n_obs: panel.n_obs(),
        delta: cfg.delta,
        sim_len,
        seed: cfg.seed,
        pd_adjusted: target.pd_adjusted,
        observed_edges: observed.edges().to_vec(),
        observed_cliques: maximal_cliques(&observed).to_labels(panel.labels()),
        models,
    })
}

fn clique_text(cliques: &[Vec<String>]) -> String {
    cliques
        .iter()
        .map(|c| format!("{{{}}}", c.join(",")))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Plain-text loss table, one row per model.
pub fn render_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "delta = {}   T = {}   simulated T = {}   seed = {}{}",
        report.delta,
        report.n_obs,
        report.sim_len,
        report.seed,
        if report.pd_adjusted { "   (target PD-adjusted)" } else { "" }
    );
    let _ = writeln!(out, "observed cliques: {}", clique_text(&report.observed_cliques));
    let _ = writeln!(
        out,
        "{:<10} {:>6} {:>12} {:>12} {:>12} {:>8}  simulated cliques",
        "model", "delta", "F(target)", "F(sample)", "KL", "edge J"
    );
    for m in &report.models {
        let _ = writeln!(
            out,
            "{:<10} {:>6} {:>12.4e} {:>12.4e} {:>12.4e} {:>8.3}  {}",
            m.model.name(),
            m.delta,
            m.f_loss_target,
            m.f_loss_sample,
            m.kl_loss,
            m.comparison.edge_jaccard,
            clique_text(&m.simulated_cliques)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bekk::BekkParams;
    use nalgebra::DMatrix;

    fn panel(t: usize, seed: u64) -> ReturnPanel {
        let c = DMatrix::from_row_slice(3, 3, &[0.1, 0.0, 0.0, 0.05, 0.1, 0.0, 0.04, 0.03, 0.1]);
        let p = BekkParams::new(c, vec![0.3, 0.3, 0.3], vec![0.9, 0.9, 0.9]).unwrap();
        let h1 = p.unconditional_cov();
        bekk_simulate(&p, &[0.0; 3], t, seed, &h1, vec!["A".into(), "B".into(), "C".into()]).unwrap()
    }

    fn quick() -> EvalConfig {
        EvalConfig {
            delta: 0.2,
            optimizer: OptimizerOptions {
                n_starts: 2,
                max_iters: 300,
                ..OptimizerOptions::default()
            },
            ..EvalConfig::default()
        }
    }

    #[test]
    fn model_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        assert!("garch".parse::<ModelKind>().is_err());
    }

    #[test]
    fn modified_models_need_a_target() {
        let p = panel(200, 1);
        let err = fit_model(ModelKind::DccMod, &p, None, &OptimizerOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn report_has_one_row_per_model() {
        let p = panel(300, 2);
        let report = evaluate(&p, &quick()).unwrap();
        assert_eq!(report.models.len(), 4);
        for (m, k) in report.models.iter().zip(ModelKind::ALL) {
            assert_eq!(m.model, k);
            assert!(m.f_loss_target >= 0.0 && m.f_loss_sample >= 0.0 && m.kl_loss >= 0.0);
        }
        let table = render_table(&report);
        assert_eq!(table.lines().count(), 3 + 4);
    }

    #[test]
    fn params_json_tags_model_family() {
        let p = panel(200, 3);
        let fit = fit_model(ModelKind::Bekk, &p, None, &quick().optimizer).unwrap();
        let v: serde_json::Value = serde_json::to_value(&fit).unwrap();
        assert_eq!(v["model"], "bekk");
        assert!(v["target"].is_null());
        let back: ModelParams = serde_json::from_value(v).unwrap();
        assert_eq!(back, fit);
    }

    #[test]
    fn losses_recompute_from_serialized_params() {
        let p = panel(300, 4);
        let report = evaluate(&p, &quick()).unwrap();
        let moments = sample_moments(&p).unwrap();
        let target = build_target(&moments, 0.2).unwrap();
        for m in &report.models {
            let text = serde_json::to_string(&m.params).unwrap();
            let params: ModelParams = serde_json::from_str(&text).unwrap();
            let path = params.cov_path(&p).unwrap();
            let f = frobenius_path_loss(&path.h, &target.sigma_hat).unwrap();
            assert!((f - m.f_loss_target).abs() <= 1e-10 * f.max(1.0));
        }
    }
}
