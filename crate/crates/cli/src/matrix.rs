//! Strategy × k × seed runs over one world, and their aggregation.

use crate::config::{ConfigSource, ExperimentConfig, WorldSpec};
use crate::error::{CliError, CliResult};
use crate::world::{load_world, LoadedWorld, WorldSnapshot};
use rayon::prelude::*;
use std::collections::BTreeSet;
use std::path::Path;
use topic_bandit::evaluation::oracle_from_means;
use topic_bandit::format::sig9;
use topic_bandit::rng::cell_seed;
use topic_bandit::{run_bandit, BudgetConfig, RunError, RunResult, StrategyConfig};

const Z_975: f64 = 1.959963984540054;

pub const AGGREGATE_HEADER: [&str; 7] = ["strategy", "k", "step", "mean", "std", "ci95", "seeds"];

#[derive(Debug, Clone, Copy)]
struct Cell {
    strategy: usize,
    k: usize,
    seed_index: u64,
}

/// File stem for one run; strategy names are reduced to `[A-Za-z0-9._-]`.
pub fn run_stem(strategy: &str, k: usize, seed_index: u64) -> String {
    format!("{}_k{k}_seed{seed_index}", file_safe(strategy))
}

pub fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Checks that depend on the loaded world.
fn validate_against_world(config: &ExperimentConfig, src: &ConfigSource, world: &LoadedWorld) -> CliResult<()> {
    let n = world.as_world().n_topics();
    for (i, s) in config.strategies.iter().enumerate() {
        s.validate(n).map_err(|e| src.error_at("kind", i, e))?;
    }
    if let Some(&k) = config.k.iter().find(|&&k| k > n) {
        return Err(src.error_at("k", 0, format!("k = {k} exceeds the {n} topics in the world")));
    }
    let mut stems = BTreeSet::new();
    for (i, s) in config.strategies.iter().enumerate() {
        if !stems.insert(file_safe(&s.display_name())) {
            return Err(src.error_at(
                "kind",
                i,
                format!(
                    "strategy name {:?} collides with another in file names",
                    s.display_name()
                ),
            ));
        }
    }
    if let (LoadedWorld::Replay(replay), Some(WorldSpec::Replay(spec))) = (world, &config.world) {
        let min = replay.min_records_per_topic();
        if !spec.allow_cap_above_records {
            for (i, s) in config.strategies.iter().enumerate() {
                if s.cap.bound().is_none_or(|c| c as usize > min) {
                    return Err(src.error_at(
                        "cap",
                        i,
                        format!(
                            "cap {} exceeds the smallest per-topic record count {min}; set \"allow_cap_above_records\"",
                            s.cap
                        ),
                    ));
                }
            }
        }
    }
    Ok(())
}

fn run_error(src: &ConfigSource, strategy: usize, e: RunError) -> CliError {
    match e {
        RunError::K { .. } | RunError::Budget | RunError::Strategy(_) => src.error_at("kind", strategy, e),
        other => CliError::World(other.to_string()),
    }
}

fn write_run(dir: &Path, stem: &str, run: &RunResult) -> CliResult<()> {
    let json = dir.join(format!("{stem}.json"));
    std::fs::write(&json, run.to_json()).map_err(|e| CliError::write(&json, e))?;
    let csv = dir.join(format!("{stem}.pulls.csv"));
    let file = std::fs::File::create(&csv).map_err(|e| CliError::write(&csv, e))?;
    let mut out = std::io::BufWriter::new(file);
    run.write_pull_log(&mut out).map_err(|e| CliError::write(&csv, e))?;
    std::io::Write::flush(&mut out).map_err(|e| CliError::write(&csv, e))
}

pub fn budget_config(config: &ExperimentConfig, k: usize) -> BudgetConfig {
    let mut b = BudgetConfig::new(config.budget.unwrap_or(0), k);
    b.checkpoint_every = config.checkpoint_every;
    if let Some(m) = config.max_failed_rounds {
        b.max_failed_rounds = m;
    }
    b
}

/// Runs every cell, writes per-run files under `out/runs`, then the
/// aggregate curves, the oracle reference and a world snapshot.
pub fn simulate(config: &ExperimentConfig, src: &ConfigSource, out: &Path, workers: Option<usize>) -> CliResult<()> {
    config.validate_matrix(src)?;
    let world = load_world(config.world.as_ref(), src, config.master_seed)?;
    validate_against_world(config, src, &world)?;
    let w = world.as_world();

    let runs_dir = out.join("runs");
    std::fs::create_dir_all(&runs_dir).map_err(|e| CliError::write(&runs_dir, e))?;
    let seeds = config.seeds.indices();
    let mut cells = Vec::new();
    for strategy in 0..config.strategies.len() {
        for &k in &config.k {
            for &seed_index in &seeds {
                cells.push(Cell {
                    strategy,
                    k,
                    seed_index,
                });
            }
        }
    }
    log::info!("running {} cells over {} topics", cells.len(), w.n_topics());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Failed(format!("cannot start worker pool: {e}")))?;
    let results: Vec<RunResult> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let s: &StrategyConfig = &config.strategies[cell.strategy];
                let name = s.display_name();
                let seed = cell_seed(config.master_seed, &name, cell.seed_index);
                let run = run_bandit(w, s, &budget_config(config, cell.k), seed)
                    .map_err(|e| run_error(src, cell.strategy, e))?;
                if run.budget_unspent {
                    log::warn!(
                        "{name} k={} seed {} stopped after {} pulls ({:?})",
                        cell.k,
                        cell.seed_index,
                        run.total_pulls,
                        run.stop_reason
                    );
                }
                write_run(&runs_dir, &run_stem(&name, cell.k, cell.seed_index), &run)?;
                log::debug!("{name} k={} seed {} done", cell.k, cell.seed_index);
                Ok(run)
            })
            .collect::<CliResult<Vec<_>>>()
    })?;

    write_aggregate(&out.join("aggregate.csv"), config, &results, seeds.len())?;
    if let Some(means) = w.true_means() {
        write_oracle(&out.join("oracle.csv"), means, &config.k)?;
    }
    write_json(&out.join("world.json"), &WorldSnapshot::of(w))?;
    let mut resolved = config.clone();
    resolved.out_dir = None;
    resolved.workers = None;
    write_json(&out.join("experiment.json"), &resolved)?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::write(path, e))? + "\n";
    std::fs::write(path, text).map_err(|e| CliError::write(path, e))
}

/// Point of one aggregate curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub step: u64,
    pub mean: f64,
    pub std: f64,
    pub seeds: usize,
}

impl CurvePoint {
    pub fn ci95(&self) -> f64 {
        Z_975 * self.std / (self.seeds as f64).sqrt()
    }
}

/// Averages achieved top-k over runs at every checkpoint step any of them
/// recorded.
///
/// A run contributes its latest checkpoint at or before the step, which is
/// its selection at that point (a run that stopped early keeps its final
/// selection). Steps where some run has no value yet are left out, so every
/// point averages the same runs. Values enter at the precision they are
/// written to the run files.
pub fn aggregate_curve(runs: &[&RunResult]) -> Vec<CurvePoint> {
    let steps: BTreeSet<u64> = runs.iter().flat_map(|r| r.trajectory.iter().map(|c| c.step)).collect();
    let mut out = Vec::new();
    'steps: for step in steps {
        let mut values = Vec::with_capacity(runs.len());
        for r in runs {
            let at = r.trajectory.iter().take_while(|c| c.step <= step).last();
            match at.and_then(|c| c.achieved_topk) {
                Some(v) => values.push(sig9(v)),
                None => continue 'steps,
            }
        }
        if values.is_empty() {
            continue;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        out.push(CurvePoint {
            step,
            mean,
            std,
            seeds: values.len(),
        });
    }
    out
}

fn write_aggregate(path: &Path, config: &ExperimentConfig, results: &[RunResult], per_cell: usize) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::write(path, e))?;
    w.write_record(AGGREGATE_HEADER).map_err(|e| CliError::write(path, e))?;
    // results are in cell order: strategy, then k, then seed
    for (group, runs) in results.chunks(per_cell).enumerate() {
        let strategy = config.strategies[group / config.k.len()].display_name();
        let k = config.k[group % config.k.len()];
        let refs: Vec<&RunResult> = runs.iter().collect();
        for p in aggregate_curve(&refs) {
            w.write_record([
                strategy.clone(),
                k.to_string(),
                p.step.to_string(),
                p.mean.to_string(),
                p.std.to_string(),
                p.ci95().to_string(),
                p.seeds.to_string(),
            ])
            .map_err(|e| CliError::write(path, e))?;
        }
    }
    w.flush().map_err(|e| CliError::write(path, e))
}

fn write_oracle(path: &Path, means: &[f64], ks: &[usize]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::write(path, e))?;
    w.write_record(["k", "oracle_topk"])
        .map_err(|e| CliError::write(path, e))?;
    for &k in ks {
        let (_, value) = oracle_from_means(means, k).map_err(|e| CliError::Failed(e.to_string()))?;
        w.write_record([k.to_string(), value.to_string()])
            .map_err(|e| CliError::write(path, e))?;
    }
    w.flush().map_err(|e| CliError::write(path, e))
}
