#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

mod commands;
mod config;

use commands::RunContext;
use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "hmmclust",
    version,
    about = "Clustering and classification in hidden Markov models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment config; relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Size of the worker pool (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a trajectory from the model.
    Simulate,
    /// Spectral estimate of the model from observations.
    Estimate,
    /// Cluster observations with the configured methods.
    Cluster,
    /// Exact risks by enumeration for short sequences.
    Exact,
    /// Evaluate the risk bounds for the model.
    Bounds,
    /// Regenerate a reference experiment.
    Reproduce {
        /// table1, example1, example2 or prop1
        target: String,
    },
}

fn run(cli: Cli) -> anyhow::Result<serde_json::Value> {
    let (mut cfg, base) = ExperimentConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.spectral.seed = seed;
    }
    let problems = cfg.problems(base.as_deref());
    if !problems.is_empty() {
        anyhow::bail!("invalid config:\n  {}", problems.join("\n  "));
    }
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()?;
    }
    let ctx = RunContext {
        cfg,
        base,
        out: cli.out,
    };
    match cli.command {
        Command::Simulate => commands::simulate(&ctx),
        Command::Estimate => commands::estimate(&ctx),
        Command::Cluster => commands::cluster(&ctx),
        Command::Exact => commands::exact(&ctx),
        Command::Bounds => commands::bounds(&ctx),
        Command::Reproduce { target } => commands::reproduce(&ctx, &target),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(v) => {
            println!("{}", hmmclust::io::to_json_string(&v).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let causes: Vec<String> = e.chain().skip(1).map(|c| c.to_string()).collect();
            eprintln!("{}", json!({ "error": e.to_string(), "causes": causes }));
            ExitCode::FAILURE
        }
    }
}
