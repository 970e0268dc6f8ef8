//! Summary of a simulation directory, recomputed from its artifacts.

use crate::error::{CliError, CliResult};
use crate::world::WorldSnapshot;
use std::collections::BTreeMap;
use std::path::Path;
use topic_bandit::evaluation::{mean_of, oracle_from_means};
use topic_bandit::RunResult;

pub const REPORT_HEADER: [&str; 8] = [
    "strategy",
    "k",
    "seeds",
    "achieved",
    "regret",
    "topics_sampled",
    "median_pulls",
    "max_pulls",
];

/// One (strategy, k) row of the report.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub strategy: String,
    pub k: usize,
    pub seeds: usize,
    pub achieved: Option<f64>,
    pub regret: Option<f64>,
    /// Mean over runs of the number of topics pulled at least once.
    pub topics_sampled: f64,
    /// Median and maximum pull count over every (run, pulled topic) pair.
    pub median_pulls: f64,
    pub max_pulls: u32,
    /// Pull count -> number of (run, topic) pairs with that count.
    pub histogram: BTreeMap<u32, usize>,
}

impl Summary {
    pub fn line(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.3}"));
        format!(
            "{} k={}: seeds {}, achieved {}, regret {}, topics sampled {:.1}, pulls per sampled topic median {} max {}",
            self.strategy,
            self.k,
            self.seeds,
            opt(self.achieved),
            opt(self.regret),
            self.topics_sampled,
            self.median_pulls,
            self.max_pulls
        )
    }
}

fn corrupt(path: &Path, what: impl std::fmt::Display) -> CliError {
    CliError::Artifact(format!("{}: {what}", path.display()))
}

fn read_runs(dir: &Path) -> CliResult<Vec<RunResult>> {
    let runs_dir = dir.join("runs");
    let entries = std::fs::read_dir(&runs_dir).map_err(|e| corrupt(&runs_dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| corrupt(&runs_dir, e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(corrupt(&runs_dir, "no run files"));
    }
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| corrupt(p, e))?;
            let run: RunResult = serde_json::from_str(&text).map_err(|e| corrupt(p, e))?;
            if run.pull_log.len() as u64 != run.total_pulls {
                return Err(corrupt(
                    p,
                    format!(
                        "{} pulls logged but total_pulls is {}",
                        run.pull_log.len(),
                        run.total_pulls
                    ),
                ));
            }
            if run.selected.len() != run.k {
                return Err(corrupt(
                    p,
                    format!("{} topics selected for k = {}", run.selected.len(), run.k),
                ));
            }
            Ok(run)
        })
        .collect()
}

fn read_world(dir: &Path) -> CliResult<Option<WorldSnapshot>> {
    let path = dir.join("world.json");
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| corrupt(&path, e))?;
    serde_json::from_str(&text).map(Some).map_err(|e| corrupt(&path, e))
}

fn median(sorted: &[u32]) -> f64 {
    match sorted.len() {
        0 => 0.0,
        n if n % 2 == 1 => sorted[n / 2] as f64,
        n => (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0,
    }
}

pub fn summarize(dir: &Path) -> CliResult<(Vec<Summary>, BTreeMap<usize, f64>)> {
    let runs = read_runs(dir)?;
    let world = read_world(dir)?;
    let means = world.as_ref().and_then(|w| w.true_means.as_deref());
    let n_topics = match &world {
        Some(w) => w.topics.len(),
        None => runs
            .iter()
            .flat_map(|r| r.pull_log.iter().map(|o| o.topic_id + 1))
            .max()
            .unwrap_or(0),
    };

    let mut groups: BTreeMap<(String, usize), Vec<&RunResult>> = BTreeMap::new();
    for r in &runs {
        let bad = r
            .selected
            .iter()
            .chain(r.pull_log.iter().map(|o| &o.topic_id))
            .find(|&&t| t >= n_topics);
        if let Some(t) = bad {
            return Err(CliError::Artifact(format!(
                "run {} seed {} names topic {t} outside the world",
                r.strategy, r.seed
            )));
        }
        groups.entry((r.strategy.clone(), r.k)).or_default().push(r);
    }

    let mut oracle = BTreeMap::new();
    let mut out = Vec::new();
    for ((strategy, k), group) in groups {
        let oracle_k = match means {
            Some(m) => Some(
                oracle_from_means(m, k)
                    .map_err(|e| CliError::Artifact(e.to_string()))?
                    .1,
            ),
            None => None,
        };
        if let Some(v) = oracle_k {
            oracle.insert(k, v);
        }
        let achieved = match means {
            Some(m) => Some(group.iter().map(|r| mean_of(&r.selected, m)).sum::<f64>() / group.len() as f64),
            None => group
                .iter()
                .map(|r| r.final_achieved())
                .sum::<Option<f64>>()
                .map(|s| s / group.len() as f64),
        };
        let mut pulled = Vec::new();
        let mut sampled_total = 0usize;
        for r in &group {
            let mut counts = vec![0u32; n_topics];
            for o in &r.pull_log {
                counts[o.topic_id] += 1;
            }
            let before = pulled.len();
            pulled.extend(counts.into_iter().filter(|&c| c > 0));
            sampled_total += pulled.len() - before;
        }
        pulled.sort_unstable();
        let mut histogram = BTreeMap::new();
        for &c in &pulled {
            *histogram.entry(c).or_insert(0) += 1;
        }
        out.push(Summary {
            seeds: group.len(),
            achieved,
            regret: oracle_k.zip(achieved).map(|(o, a)| o - a),
            topics_sampled: sampled_total as f64 / group.len() as f64,
            median_pulls: median(&pulled),
            max_pulls: pulled.last().copied().unwrap_or(0),
            histogram,
            strategy,
            k,
        });
    }
    Ok((out, oracle))
}

/// Prints one line per (strategy, k) and writes `report.csv` (with an
/// `oracle` row per k when true means are known) and `pulls_histogram.csv`.
pub fn report(dir: &Path) -> CliResult<()> {
    let (summaries, oracle) = summarize(dir)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());

    let path = dir.join("report.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::write(&path, e))?;
    w.write_record(REPORT_HEADER).map_err(|e| CliError::write(&path, e))?;
    for (k, v) in &oracle {
        w.write_record([
            "oracle".to_string(),
            k.to_string(),
            String::new(),
            v.to_string(),
            "0".into(),
            String::new(),
            String::new(),
            String::new(),
        ])
        .map_err(|e| CliError::write(&path, e))?;
    }
    for s in &summaries {
        w.write_record([
            s.strategy.clone(),
            s.k.to_string(),
            s.seeds.to_string(),
            opt(s.achieved),
            opt(s.regret),
            s.topics_sampled.to_string(),
            s.median_pulls.to_string(),
            s.max_pulls.to_string(),
        ])
        .map_err(|e| CliError::write(&path, e))?;
    }
    w.flush().map_err(|e| CliError::write(&path, e))?;

    let path = dir.join("pulls_histogram.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::write(&path, e))?;
    w.write_record(["strategy", "k", "pulls", "topics"])
        .map_err(|e| CliError::write(&path, e))?;
    for s in &summaries {
        for (pulls, topics) in &s.histogram {
            w.write_record([
                s.strategy.clone(),
                s.k.to_string(),
                pulls.to_string(),
                topics.to_string(),
            ])
            .map_err(|e| CliError::write(&path, e))?;
        }
    }
    w.flush().map_err(|e| CliError::write(&path, e))?;

    for s in &summaries {
        println!("{}", s.line());
    }
    Ok(())
}
