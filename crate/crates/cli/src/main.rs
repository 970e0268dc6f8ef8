//! `topic-bandit`: experiment harness for budget-constrained topic search.
//!
//! Exit status: 0 success, 1 other failure, 2 config error, 3 world error,
//! 4 missing or corrupt artifacts.

mod commands;
mod config;
mod error;
mod matrix;
mod report;
mod world;

use clap::{Parser, Subcommand};
use error::CliResult;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "topic-bandit",
    version,
    about = "Find the most difficult topics under a sampling budget"
)]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed; overrides `master_seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the run matrix; defaults to one per core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world and optionally export it as a replay dataset.
    GenWorld,
    /// Run every strategy × k × seed cell and aggregate the trajectories.
    Simulate,
    /// Expected oracle top-k difficulty against topic-set size.
    Scaling {
        /// Fail unless the curve is strictly increasing.
        #[arg(long)]
        assert_increasing: bool,
    },
    /// Dollar cost of a number of sampling requests.
    Cost {
        /// Request counts, overriding the config.
        #[arg(long, value_delimiter = ',')]
        requests: Option<Vec<u64>>,
    },
    /// Compare test subsets by how well they separate models.
    RankUtility,
    /// Average position of one dimension's top-k in another's ranking.
    CrossRank,
    /// Summarize a simulation directory.
    Report {
        /// Run directory; defaults to the output directory.
        dir: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    if let Command::Report { dir } = &cli.command {
        let dir = dir.clone().or(cli.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
        return report::report(&dir);
    }
    let (mut cfg, src) = config::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out_dir.as_ref().map(|d| src.base_dir().join(d)))
        .unwrap_or_else(|| PathBuf::from("out"));
    let workers = cli.workers.or(cfg.workers);
    match cli.command {
        Command::GenWorld => commands::gen_world(&cfg, &src, &out),
        Command::Simulate => matrix::simulate(&cfg, &src, &out, workers),
        Command::Scaling { assert_increasing } => commands::scaling(&cfg, &src, &out, assert_increasing),
        Command::Cost { requests } => commands::cost(&cfg, &src, &out, requests),
        Command::RankUtility => commands::rank_utility_cmd(&cfg, &src, &out),
        Command::CrossRank => commands::cross_rank_cmd(&cfg, &src, &out),
        Command::Report { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TOPIC_BANDIT_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("topic-bandit: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
