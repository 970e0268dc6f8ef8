use crate::config::{ConfigSource, WorldSpec};
use crate::error::{CliError, CliResult};
use serde::{Deserialize, Serialize};
use std::path::Path;
use topic_bandit::rng::rep_seed;
use topic_bandit::samplers::{ExternalWorld, ReplayWorld, SamplerError, SyntheticWorld};
use topic_bandit::{TopicMeta, World, WorldKind};

pub enum LoadedWorld {
    Synthetic(SyntheticWorld),
    Replay(ReplayWorld),
    External(ExternalWorld),
}

impl LoadedWorld {
    pub fn as_world(&self) -> &dyn World {
        match self {
            LoadedWorld::Synthetic(w) => w,
            LoadedWorld::Replay(w) => w,
            LoadedWorld::External(w) => w,
        }
    }
}

pub fn world_seed(spec_seed: Option<u64>, master_seed: u64) -> u64 {
    spec_seed.unwrap_or_else(|| rep_seed(master_seed, "world", 0))
}

fn sampler_error(src: &ConfigSource, key: &str, e: SamplerError) -> CliError {
    match e {
        SamplerError::Config(_) => src.error_at(key, 0, e),
        other => CliError::World(other.to_string()),
    }
}

pub fn load_world(spec: Option<&WorldSpec>, src: &ConfigSource, master_seed: u64) -> CliResult<LoadedWorld> {
    let Some(spec) = spec else {
        return Err(src.error_at("world", 0, "a world is required"));
    };
    let base = src.base_dir();
    match spec {
        WorldSpec::Synthetic(s) => SyntheticWorld::generate(s.config.clone(), world_seed(s.seed, master_seed))
            .map(LoadedWorld::Synthetic)
            .map_err(|e| sampler_error(src, "synthetic", e)),
        WorldSpec::Replay(r) => {
            let path = base.join(&r.path);
            log::info!("loading replay dataset {}", path.display());
            ReplayWorld::load(&path)
                .map(LoadedWorld::Replay)
                .map_err(|e| CliError::World(e.to_string()))
        }
        WorldSpec::External(x) => {
            let names = match (&x.topics, &x.topics_file) {
                (Some(t), None) => t.clone(),
                (None, Some(f)) => read_topic_file(&base.join(f))?,
                _ => return Err(src.error_at("external", 0, "give exactly one of \"topics\" and \"topics_file\"")),
            };
            if x.adapter.command.is_empty() {
                return Err(src.error_at("command", 0, "adapter command is empty"));
            }
            ExternalWorld::new(names, x.adapter.clone())
                .map(LoadedWorld::External)
                .map_err(|e| sampler_error(src, "external", e))
        }
    }
}

fn read_topic_file(path: &Path) -> CliResult<Vec<String>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::World(format!("cannot read {}: {e}", path.display())))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

/// The `world.json` artifact: topics and, when known, true means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSnapshot {
    pub kind: WorldKind,
    pub topics: Vec<TopicMeta>,
    pub true_means: Option<Vec<f64>>,
}

impl WorldSnapshot {
    pub fn of(world: &dyn World) -> Self {
        Self {
            kind: world.kind(),
            topics: world.topics().to_vec(),
            true_means: world.true_means().map(<[f64]>::to_vec),
        }
    }
}
