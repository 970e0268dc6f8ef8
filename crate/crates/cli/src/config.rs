//! The experiment config file: one JSON document describing the world, the
//! strategy grid and the optional studies.

use crate::error::{CliError, CliResult};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use topic_bandit::evaluation::{CostSheet, SubsetStrategy};
use topic_bandit::samplers::{AdapterConfig, GmmParams, SyntheticWorldConfig};
use topic_bandit::StrategyConfig;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world: Option<WorldSpec>,
    #[serde(default)]
    pub strategies: Vec<StrategyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_failed_rounds: Option<u32>,
    #[serde(default = "default_k")]
    pub k: Vec<usize>,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<ScalingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_utility: Option<RankUtilitySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_rank: Option<CrossRankSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub export: Option<ExportSpec>,
}

fn default_k() -> Vec<usize> {
    vec![10]
}

/// Either a seed count (`20` means indices 0..20) or explicit seed indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::List(Vec::new())
    }
}

impl Seeds {
    pub fn indices(&self) -> Vec<u64> {
        match self {
            Seeds::Count(n) => (0..*n).collect(),
            Seeds::List(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldSpec {
    Synthetic(SyntheticSpec),
    Replay(ReplaySpec),
    External(ExternalSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    #[serde(flatten)]
    pub config: SyntheticWorldConfig,
    /// Seed for the topic means; derived from the master seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplaySpec {
    pub path: PathBuf,
    /// Permit caps above the smallest per-topic record count.
    #[serde(default)]
    pub allow_cap_above_records: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExternalSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topics: Option<Vec<String>>,
    /// One topic name per line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topics_file: Option<PathBuf>,
    #[serde(flatten)]
    pub adapter: AdapterConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    #[serde(default = "CostSheet::calibrated")]
    pub sheet: CostSheet,
    #[serde(default = "default_requests")]
    pub requests: Vec<u64>,
}

impl Default for CostSpec {
    fn default() -> Self {
        Self {
            sheet: CostSheet::calibrated(),
            requests: default_requests(),
        }
    }
}

pub fn default_requests() -> Vec<u64> {
    vec![20_000, 200_000, 2_000_000]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSpec {
    pub sizes: Vec<usize>,
    #[serde(default = "default_scaling_k")]
    pub k: usize,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gmm: Option<GmmParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
}

fn default_scaling_k() -> usize {
    10
}

fn default_reps() -> usize {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankUtilitySpec {
    pub sizes: Vec<usize>,
    #[serde(default = "default_rank_reps")]
    pub reps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_budget: Option<u64>,
    #[serde(default = "default_subset_strategies")]
    pub strategies: Vec<SubsetStrategy>,
}

fn default_rank_reps() -> usize {
    10
}

fn default_subset_strategies() -> Vec<SubsetStrategy> {
    SubsetStrategy::ALL.to_vec()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossRankSpec {
    /// QE dimensions to compare; all dimensions in the dataset when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimensions: Option<Vec<String>>,
    #[serde(default = "default_scaling_k")]
    pub k: usize,
}

impl Default for CrossRankSpec {
    fn default() -> Self {
        Self {
            dimensions: None,
            k: 10,
        }
    }
}

/// Replay dataset written by `gen-world` from a synthetic world.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportSpec {
    pub records_per_topic: usize,
    /// QE offset per `pair/model` dimension added to `100 - difficulty`.
    #[serde(default = "default_models")]
    pub models: BTreeMap<String, f64>,
    /// Std-dev of independent per-model, per-record score noise.
    #[serde(default)]
    pub model_noise: f64,
    #[serde(default = "default_export_file")]
    pub file: String,
}

fn default_models() -> BTreeMap<String, f64> {
    [("xx-yy/model".to_string(), 0.0)].into_iter().collect()
}

fn default_export_file() -> String {
    "dataset.jsonl".into()
}

/// The raw config text, kept to attach line numbers to semantic errors.
#[derive(Debug, Clone)]
pub struct ConfigSource {
    pub path: Option<PathBuf>,
    pub text: String,
}

impl ConfigSource {
    /// Line (1-based) of the `nth` occurrence of `"key"`.
    pub fn line_of(&self, key: &str, nth: usize) -> Option<usize> {
        let needle = format!("\"{key}\"");
        self.text
            .lines()
            .enumerate()
            .flat_map(|(i, line)| std::iter::repeat_n(i + 1, line.matches(&needle).count()))
            .nth(nth)
    }

    /// A config error pointing at the `nth` occurrence of `key`.
    pub fn error_at(&self, key: &str, nth: usize, message: impl std::fmt::Display) -> CliError {
        let name = self.display_name();
        match self.line_of(key, nth) {
            Some(line) => CliError::Config(format!("{name}:{line}: {message}")),
            None => CliError::Config(format!("{name}: {message}")),
        }
    }

    fn display_name(&self) -> String {
        self.path
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| "<no config>".into())
    }

    /// Directory against which relative paths in the config resolve.
    pub fn base_dir(&self) -> PathBuf {
        self.path
            .as_ref()
            .and_then(|p| p.parent())
            .map(Path::to_path_buf)
            .unwrap_or_default()
    }
}

pub fn load(path: Option<&Path>) -> CliResult<(ExperimentConfig, ConfigSource)> {
    let Some(path) = path else {
        let src = ConfigSource {
            path: None,
            text: String::new(),
        };
        return Ok((
            ExperimentConfig {
                k: default_k(),
                ..Default::default()
            },
            src,
        ));
    };
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let config = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column())))?;
    Ok((
        config,
        ConfigSource {
            path: Some(path.to_path_buf()),
            text,
        },
    ))
}

impl ExperimentConfig {
    /// Checks that need no world: a simulation grid must be complete.
    pub fn validate_matrix(&self, src: &ConfigSource) -> CliResult<()> {
        if self.world.is_none() {
            return Err(src.error_at("world", 0, "a world is required"));
        }
        if self.strategies.is_empty() {
            return Err(src.error_at("strategies", 0, "at least one strategy is required"));
        }
        if self.seeds.indices().is_empty() {
            return Err(src.error_at("seeds", 0, "at least one seed is required"));
        }
        let mut distinct = BTreeSet::new();
        for s in self.seeds.indices() {
            if !distinct.insert(s) {
                return Err(src.error_at("seeds", 0, format!("seed index {s} is listed twice")));
            }
        }
        match self.budget {
            None => return Err(src.error_at("budget", 0, "a budget is required")),
            Some(0) => return Err(src.error_at("budget", 0, "budget must be at least 1")),
            Some(_) => {}
        }
        if self.checkpoint_every == Some(0) {
            return Err(src.error_at("checkpoint_every", 0, "checkpoint_every must be at least 1"));
        }
        if self.k.is_empty() || self.k.contains(&0) {
            return Err(src.error_at("k", 0, "k must be a non-empty list of positive integers"));
        }
        let mut names = BTreeSet::new();
        for (i, s) in self.strategies.iter().enumerate() {
            let name = s.display_name();
            if !names.insert(name.clone()) {
                return Err(src.error_at("kind", i, format!("strategy name {name:?} is used twice; set \"name\"")));
            }
        }
        Ok(())
    }
}
