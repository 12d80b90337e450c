//! Scenario runner behind the `crosslab` command.
//!
//! ```text
//! crosslab [--config <path>] [--out <dir>] [--deterministic] [--threads <n>] <subcommand>
//! ```
//!
//! The subcommand selects the experiment kind; the TOML file supplies the
//! model and numeric parameters (see [`ScenarioConfig`]).

mod config;
mod emit;
mod run;

use std::path::PathBuf;

use anyhow::bail;
use clap::{Parser, Subcommand};

pub use config::{ConfigError, ModelSection, OutputSection, ParamSection, RunKind, RunSection, ScenarioConfig};
pub use emit::{
    decode_wigner, encode_wigner, sha256_hex, svg_heatmap, svg_line_plot, Cell, CsvTable, EmittedFile, Emitter,
    RunManifest, WIGNER_HEADER_LEN, WIGNER_MAGIC,
};
pub use run::{run, RunOutcome, RunSettings};

use crate::exec::{configure_threads, Exec};

#[derive(Debug, Parser)]
#[command(name = "crosslab", version, about = "Semiclassical matrix Schrödinger laboratory")]
pub struct Cli {
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Single-threaded, reproducible run.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Worker threads for data-parallel loops.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Propagate a coherent state and record mode masses.
    Simulate,
    /// Mode-transfer experiment on `degenerate_k`.
    Transfer,
    /// Integrate one classical trajectory.
    Trajectory,
    /// Contact order and nondegeneracy at a crossing point.
    Classify,
    /// Escape test on energy shells.
    Nontrap,
    /// Weighted resolvent norm sweep and ε-scaling fit.
    Resolvent,
    /// Discrete Wigner function of a (propagated) coherent state.
    Wigner,
}

impl Command {
    pub fn kind(self) -> RunKind {
        match self {
            Command::Simulate => RunKind::Simulate,
            Command::Transfer => RunKind::Transfer,
            Command::Trajectory => RunKind::Trajectory,
            Command::Classify => RunKind::Classify,
            Command::Nontrap => RunKind::Nontrap,
            Command::Resolvent => RunKind::Resolvent,
            Command::Wigner => RunKind::Wigner,
        }
    }
}

/// Parses the configuration, reconciles it with the subcommand and runs it.
pub fn execute(cli: &Cli) -> anyhow::Result<RunOutcome> {
    let mut config = match &cli.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    let kind = cli.command.kind();
    match config.run.kind {
        Some(k) if k != kind => bail!("config declares run.kind = \"{k}\" but the subcommand is `{kind}`"),
        _ => config.run.kind = Some(kind),
    }
    if cli.deterministic {
        configure_threads(1);
    } else if let Some(n) = cli.threads {
        configure_threads(n);
    }
    let settings = RunSettings {
        out_dir: cli.out.clone(),
        exec: Exec::default(),
    };
    run(&config, &settings)
}
