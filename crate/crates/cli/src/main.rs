//! `mgarch`: fit, simulate and evaluate multivariate GARCH models from the
//! command line.

mod config;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use mgarch_core::clustering::{complete_linkage, corr_distance, cut_tree};
use mgarch_core::eval::{evaluate, fit_model, render_table, EvalConfig, ModelParams};
use mgarch_core::market_data::{load_matrix, load_panel, sample_moments};
use mgarch_core::netgraph::{build_graph, maximal_cliques, GraphJson, ThresholdGraph};
use mgarch_core::targeting::build_target;
use mgarch_core::{DMatrix, ModelKind};

use config::Settings;

#[derive(Debug, Parser)]
#[command(name = "mgarch", version, about = "Multivariate GARCH estimation with KL covariance targeting")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Price CSV (`date,TICKER,…`) or returns CSV starting with `#returns`.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Directory for output files (default: current directory).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Correlation threshold δ in [0, 1).
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// Model variants, comma separated: bekk, bekk_mod, dcc, dcc_mod.
    #[arg(long, global = true, value_delimiter = ',')]
    model: Vec<ModelKind>,
    /// Length of simulated paths (default: in-sample length).
    #[arg(long, global = true)]
    sim_len: Option<usize>,
    /// Optimizer starts per fit.
    #[arg(long, global = true)]
    starts: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// TOML file with defaults for any of the flags above.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Dot,
    Csv,
    Text,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Complete-linkage dendrogram on the 1 − ρ distance.
    Cluster {
        /// Also cut the tree into this many clusters.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Fit the requested models and write one params file each.
    Fit,
    /// Simulate returns from a params file.
    Simulate {
        #[arg(long)]
        params: PathBuf,
    },
    /// Threshold correlation graph G(δ).
    Graph {
        /// Labelled correlation matrix CSV used instead of --input.
        #[arg(long)]
        corr: Option<PathBuf>,
    },
    /// Maximal cliques of a graph.
    Cliques {
        /// Graph JSON as written by `graph`.
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        corr: Option<PathBuf>,
    },
    /// Fit, simulate and compare every requested model.
    Evaluate,
}

#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("MGARCH_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        2
    } else if e.downcast_ref::<mgarch_core::Error>().is_some_and(|e| e.is_estimation_failure()) {
        4
    } else {
        3
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let s = Settings::resolve(&cli.global)?;
    match cli.command {
        Command::Cluster { k } => cmd_cluster(&s, k),
        Command::Fit => cmd_fit(&s),
        Command::Simulate { params } => cmd_simulate(&s, &params),
        Command::Graph { corr } => cmd_graph(&s, corr.as_deref()),
        Command::Cliques { graph, corr } => cmd_cliques(&s, graph.as_deref(), corr.as_deref()),
        Command::Evaluate => cmd_evaluate(&s),
    }
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(&path).map_err(|e| e.error)?;
    log::info!("wrote {}", path.display());
    Ok(path)
}

fn to_json<T: Serialize>(value: &T) -> anyhow::Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

fn check_format(s: &Settings, allowed: &[Format], default: Format) -> anyhow::Result<Format> {
    let f = s.format.unwrap_or(default);
    if !allowed.contains(&f) {
        return Err(usage(format!("format {f:?} is not available for this command")));
    }
    Ok(f)
}

fn input_correlation(s: &Settings, corr: Option<&Path>) -> anyhow::Result<(Vec<String>, DMatrix<f64>)> {
    match corr {
        Some(p) => Ok(load_matrix(p)?),
        None => {
            let panel = load_panel(s.input()?)?;
            let m = sample_moments(&panel)?;
            Ok((panel.labels().to_vec(), m.corr))
        }
    }
}

fn cmd_cluster(s: &Settings, k: Option<usize>) -> anyhow::Result<()> {
    let format = check_format(s, &[Format::Json, Format::Text], Format::Text)?;
    let (labels, corr) = input_correlation(s, None)?;
    let dend = complete_linkage(&corr_distance(&corr)?, &labels)?;
    write_atomic(&s.out_dir, "dendrogram.json", &to_json(&dend)?)?;
    let newick = dend.to_newick();
    write_atomic(&s.out_dir, "dendrogram.nwk", format!("{newick}\n").as_bytes())?;
    let clusters = match k {
        Some(k) => {
            let assign = cut_tree(&dend, k).map_err(|e| usage(e.to_string()))?;
            let groups: Vec<Vec<String>> = (0..k)
                .map(|c| (0..labels.len()).filter(|&i| assign[i] == c).map(|i| labels[i].clone()).collect())
                .collect();
            write_atomic(&s.out_dir, "clusters.json", &to_json(&groups)?)?;
            Some(groups)
        }
        None => None,
    };
    if format == Format::Text {
        println!("{newick}");
        for (i, g) in clusters.iter().flatten().enumerate() {
            println!("cluster {}: {}", i + 1, g.join(" "));
        }
    } else {
        println!("{}", serde_json::to_string(&dend)?);
    }
    Ok(())
}

fn cmd_fit(s: &Settings) -> anyhow::Result<()> {
    let panel = load_panel(s.input()?)?;
    let models = match &s.models {
        Some(m) => m.clone(),
        None if s.delta.is_some() => ModelKind::ALL.to_vec(),
        None => vec![ModelKind::Bekk, ModelKind::Dcc],
    };
    let target = match s.delta {
        Some(d) => Some(build_target(&sample_moments(&panel)?, d)?),
        None => {
            if let Some(m) = models.iter().find(|m| m.is_modified()) {
                return Err(usage(format!("{m} needs --delta")));
            }
            None
        }
    };
    for kind in models {
        let params = fit_model(kind, &panel, target.as_ref(), &s.optimizer)?;
        if params.fit_report().is_some_and(|r| !r.converged) {
            log::warn!("{kind}: optimizer did not meet the convergence tolerances");
        }
        let path = write_atomic(&s.out_dir, &format!("params.{kind}.json"), &to_json(&params)?)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_simulate(s: &Settings, params_path: &Path) -> anyhow::Result<()> {
    check_format(s, &[Format::Csv], Format::Csv)?;
    let text = std::fs::read_to_string(params_path).with_context(|| format!("reading {}", params_path.display()))?;
    let params: ModelParams = serde_json::from_str(&text).map_err(mgarch_core::Error::from)?;
    let t_len = match (s.sim_len, &s.input) {
        (Some(n), _) => n,
        (None, Some(p)) => load_panel(p)?.n_obs(),
        (None, None) => return Err(usage("simulate needs --sim-len or --input")),
    };
    let panel = params.simulate(t_len, s.seed)?;
    let mut buf = Vec::new();
    panel.write_csv(&mut buf)?;
    let path = write_atomic(&s.out_dir, &format!("simulated.{}.csv", params.kind()), &buf)?;
    println!("{}", path.display());
    Ok(())
}

fn graph_from_source(s: &Settings, corr: Option<&Path>) -> anyhow::Result<ThresholdGraph> {
    let delta = s.delta("graph construction")?;
    let (labels, corr) = input_correlation(s, corr)?;
    Ok(build_graph(&corr, &labels, delta)?)
}

fn cmd_graph(s: &Settings, corr: Option<&Path>) -> anyhow::Result<()> {
    let format = check_format(s, &[Format::Json, Format::Dot], Format::Json)?;
    let g = graph_from_source(s, corr)?;
    let path = match format {
        Format::Dot => write_atomic(&s.out_dir, "graph.dot", g.to_dot().as_bytes())?,
        _ => write_atomic(&s.out_dir, "graph.json", &to_json(&g.to_json())?)?,
    };
    println!("{}", path.display());
    Ok(())
}

fn cmd_cliques(s: &Settings, graph: Option<&Path>, corr: Option<&Path>) -> anyhow::Result<()> {
    let format = check_format(s, &[Format::Json, Format::Text], Format::Json)?;
    let g = match graph {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let json: GraphJson = serde_json::from_str(&text).map_err(mgarch_core::Error::from)?;
            ThresholdGraph::from_json(json)?
        }
        None => graph_from_source(s, corr)?,
    };
    let cliques = maximal_cliques(&g).to_labels(g.labels());
    write_atomic(&s.out_dir, "cliques.json", &to_json(&cliques)?)?;
    match format {
        Format::Text => {
            for c in &cliques {
                println!("{{{}}}", c.join(", "));
            }
        }
        _ => println!("{}", serde_json::to_string(&cliques)?),
    }
    Ok(())
}

fn cmd_evaluate(s: &Settings) -> anyhow::Result<()> {
    let format = check_format(s, &[Format::Json, Format::Text], Format::Text)?;
    let panel = load_panel(s.input()?)?;
    let cfg = EvalConfig {
        models: s.models.clone().unwrap_or_else(|| ModelKind::ALL.to_vec()),
        delta: s.delta("evaluate")?,
        sim_len: s.sim_len,
        seed: s.seed,
        optimizer: s.optimizer.clone(),
    };
    let report = evaluate(&panel, &cfg)?;
    let table = render_table(&report);
    write_atomic(&s.out_dir, "report.json", &to_json(&report)?)?;
    write_atomic(&s.out_dir, "report.txt", table.as_bytes())?;
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        _ => print!("{table}"),
    }
    Ok(())
}
