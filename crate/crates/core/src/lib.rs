//! Multivariate GARCH covariance estimation with Kullback-Leibler targeting.
//!
//! The crate fits diagonal BEKK(1,1) and two-stage DCC(1,1) models, optionally
//! penalising the log-likelihood by the divergence between each conditional
//! matrix and a thresholded long-run target. Fitted models are evaluated by
//! simulating new return paths and comparing the threshold correlation graphs
//! (and their maximal cliques) of observed and simulated data.

pub mod bekk;
pub mod clustering;
pub mod dcc;
pub mod error;
pub mod eval;
pub mod garch;
pub mod linalg;
pub mod market_data;
pub mod netgraph;
pub mod optimizer;
pub mod targeting;

mod rng;

#[cfg(test)]
#[path = "../tests/common/fixtures.rs"]
mod fixtures;

pub use bekk::{BekkFit, BekkParams, CovPath};
pub use clustering::Dendrogram;
pub use dcc::{CorrPath, DccFit, DccParams};
pub use error::{Error, Result};
pub use eval::{EvalConfig, EvalReport, ModelKind};
pub use garch::{Garch11Params, VariancePath};
pub use linalg::{CholFactor, SymMatrix};
pub use market_data::{PricePanel, ReturnPanel, SampleMoments};
pub use netgraph::{CliqueSet, GraphComparison, ThresholdGraph};
pub use optimizer::{FitReport, OptimizerOptions};
pub use targeting::TargetSpec;

pub use nalgebra::{DMatrix, DVector};
