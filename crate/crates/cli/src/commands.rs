//! `gen-world`, `scaling`, `cost`, `rank-utility` and `cross-rank`.

use crate::config::{ConfigSource, CostSpec, ExperimentConfig, WorldSpec};
use crate::error::{CliError, CliResult};
use crate::matrix::write_json;
use crate::world::{load_world, world_seed, LoadedWorld, WorldSnapshot};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeMap;
use std::path::Path;
use topic_bandit::evaluation::{
    cost_estimate, cross_rank_matrix, rank_utility, scaling_study, CostEstimate, EvalError, RankUtilityConfig,
    RankUtilityReport,
};
use topic_bandit::rng::{rep_seed, RunRng};
use topic_bandit::samplers::{default_gmm, write_replay, ReplayRecord, ReplayWorld, SyntheticWorld, DEFAULT_SIGMA2};
use topic_bandit::World;

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::write(path, e))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))
}

/// Writes `world.json` for a synthetic world and, when the config has an
/// `export` section, a replay dataset drawn from it.
pub fn gen_world(config: &ExperimentConfig, src: &ConfigSource, out: &Path) -> CliResult<()> {
    let Some(WorldSpec::Synthetic(spec)) = &config.world else {
        return Err(src.error_at("world", 0, "gen-world needs a synthetic world"));
    };
    let world = SyntheticWorld::generate(spec.config.clone(), world_seed(spec.seed, config.master_seed))
        .map_err(|e| src.error_at("synthetic", 0, e))?;
    create_dir(out)?;
    write_json(&out.join("world.json"), &WorldSnapshot::of(&world))?;
    if let Some(export) = &config.export {
        if export.records_per_topic == 0 || export.models.is_empty() {
            return Err(src.error_at("export", 0, "records_per_topic and models must be non-empty"));
        }
        let noise = Normal::new(0.0, export.model_noise).map_err(|_| {
            src.error_at(
                "model_noise",
                0,
                format!("model_noise must be non-negative, got {}", export.model_noise),
            )
        })?;
        let seed = rep_seed(config.master_seed, "gen-world/records", 0);
        let records = replay_records(&world, export.records_per_topic, &export.models, noise, seed);
        let path = out.join(&export.file);
        write_replay(&path, &records).map_err(|e| CliError::write(&path, e))?;
        println!(
            "wrote {} records for {} topics to {}",
            records.len(),
            world.n_topics(),
            path.display()
        );
    }
    Ok(())
}

/// `per_topic` draws per topic; model `m` scores `100 - draw + offset[m]`
/// plus `noise`, clamped to `[0, 100]`, and the record's difficulty is
/// recomputed from those scores.
pub fn replay_records(
    world: &SyntheticWorld,
    per_topic: usize,
    offsets: &BTreeMap<String, f64>,
    noise: Normal<f64>,
    seed: u64,
) -> Vec<ReplayRecord> {
    let mut rng = RunRng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(world.n_topics() * per_topic);
    for meta in world.topics() {
        for s in 0..per_topic {
            let d = world.draw(meta.id, &mut rng);
            let qe: BTreeMap<String, f64> = offsets
                .iter()
                .map(|(m, off)| (m.clone(), (100.0 - d + off + noise.sample(&mut rng)).clamp(0.0, 100.0)))
                .collect();
            out.push(ReplayRecord {
                topic_id: meta.id as i64,
                topic_name: meta.name.clone(),
                keywords: meta.keywords.iter().cloned().collect(),
                sample_id: s as i64,
                difficulty: ReplayRecord::recompute_difficulty(&qe).expect("at least one model"),
                qe,
                text: None,
                source_url: None,
            });
        }
    }
    out
}

fn eval_error(src: &ConfigSource, key: &str, e: EvalError) -> CliError {
    match e {
        EvalError::Config(_) | EvalError::Selection(_) => src.error_at(key, 0, e),
        other => CliError::World(other.to_string()),
    }
}

pub fn scaling(config: &ExperimentConfig, src: &ConfigSource, out: &Path, assert_increasing: bool) -> CliResult<()> {
    let Some(spec) = &config.scaling else {
        return Err(src.error_at("scaling", 0, "the config has no scaling section"));
    };
    let gmm = spec.gmm.clone().unwrap_or_else(default_gmm);
    let curve = scaling_study(
        &gmm,
        spec.sigma2.unwrap_or(DEFAULT_SIGMA2),
        &spec.sizes,
        spec.k,
        spec.reps,
        config.master_seed,
    )
    .map_err(|e| eval_error(src, "scaling", e))?;
    create_dir(out)?;
    let csv = curve.to_csv();
    write_text(&out.join("scaling.csv"), &csv)?;
    print!("{csv}");
    if assert_increasing {
        if let Some(w) = curve
            .points
            .windows(2)
            .find(|w| w[1].expected_topk_difficulty <= w[0].expected_topk_difficulty)
        {
            return Err(CliError::Failed(format!(
                "top-{} difficulty does not increase from {} topics ({}) to {} topics ({})",
                curve.k, w[0].n_topics, w[0].expected_topk_difficulty, w[1].n_topics, w[1].expected_topk_difficulty
            )));
        }
    }
    Ok(())
}

pub fn cost(config: &ExperimentConfig, src: &ConfigSource, out: &Path, requests: Option<Vec<u64>>) -> CliResult<()> {
    let spec = config.cost.clone().unwrap_or_default();
    spec.sheet.validate().map_err(|e| src.error_at("cost", 0, e))?;
    let table = cost_table(&spec, requests.unwrap_or_else(|| spec.requests.clone()));
    create_dir(out)?;
    write_text(&out.join("cost.csv"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn cost_table(spec: &CostSpec, requests: Vec<u64>) -> String {
    let mut s = format!("{}\n", CostEstimate::CSV_HEADER);
    for n in requests {
        s.push_str(&cost_estimate(n, &spec.sheet).csv_row());
        s.push('\n');
    }
    s
}

fn replay_world(config: &ExperimentConfig, src: &ConfigSource, what: &str) -> CliResult<ReplayWorld> {
    match load_world(config.world.as_ref(), src, config.master_seed)? {
        LoadedWorld::Replay(w) => Ok(w),
        _ => Err(src.error_at("world", 0, format!("{what} needs a replay world"))),
    }
}

pub fn rank_utility_cmd(config: &ExperimentConfig, src: &ConfigSource, out: &Path) -> CliResult<()> {
    let Some(spec) = &config.rank_utility else {
        return Err(src.error_at("rank_utility", 0, "the config has no rank_utility section"));
    };
    let world = replay_world(config, src, "rank-utility")?;
    let mut rc = RankUtilityConfig::new(spec.sizes.clone(), spec.reps, config.master_seed);
    rc.permutations = spec.permutations.unwrap_or(rc.permutations);
    rc.alpha = spec.alpha.unwrap_or(rc.alpha);
    rc.epsilon = spec.epsilon.unwrap_or(rc.epsilon);
    rc.search_budget = spec.search_budget;
    let reports: Vec<RankUtilityReport> = spec
        .strategies
        .iter()
        .map(|&s| rank_utility(&world, s, &rc).map_err(|e| eval_error(src, "rank_utility", e)))
        .collect::<CliResult<_>>()?;
    create_dir(out)?;
    let mut csv = format!("{}\n", RankUtilityReport::CSV_HEADER);
    for r in &reports {
        for row in r.csv_rows() {
            csv.push_str(&row);
            csv.push('\n');
        }
    }
    write_text(&out.join("rank_utility.csv"), &csv)?;
    write_json(&out.join("rank_utility.json"), &reports)?;
    print!("{csv}");
    Ok(())
}

pub fn cross_rank_cmd(config: &ExperimentConfig, src: &ConfigSource, out: &Path) -> CliResult<()> {
    let spec = config.cross_rank.clone().unwrap_or_default();
    let world = replay_world(config, src, "cross-rank")?;
    let dims: Vec<String> = spec
        .dimensions
        .clone()
        .unwrap_or_else(|| world.dimensions().into_iter().collect());
    let matrix = cross_rank_matrix(&world, &dims, spec.k).map_err(|e| eval_error(src, "cross_rank", e))?;
    create_dir(out)?;
    let path = out.join("cross_rank.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::write(&path, e))?;
    w.write_record(["dim_a", "dim_b", "k", "avg_position"])
        .map_err(|e| CliError::write(&path, e))?;
    for (a, row) in dims.iter().zip(&matrix) {
        for (b, v) in dims.iter().zip(row) {
            w.write_record([a.clone(), b.clone(), spec.k.to_string(), v.to_string()])
                .map_err(|e| CliError::write(&path, e))?;
            println!("{a} -> {b}: {v}");
        }
    }
    w.flush().map_err(|e| CliError::write(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_table_rows() {
        let table = cost_table(&CostSpec::default(), vec![20_000, 0]);
        assert_eq!(
            table,
            "requests,search,translation,qe,total\n20000,87,2,15,104\n0,0,0,0,0\n"
        );
    }

    #[test]
    fn exported_difficulty_matches_model_scores() {
        let world = SyntheticWorld::from_means(vec![20.0, 60.0], 4.0, [0.0, 100.0]).unwrap();
        let offsets: BTreeMap<String, f64> = [("a/x".to_string(), 3.0), ("a/y".to_string(), -3.0)]
            .into_iter()
            .collect();
        let records = replay_records(&world, 4, &offsets, Normal::new(0.0, 0.0).unwrap(), 1);
        assert_eq!(records.len(), 8);
        for r in &records {
            let x = r.qe["a/x"];
            let y = r.qe["a/y"];
            assert!((x - y - 6.0).abs() < 1e-9 || x == 100.0 || y == 0.0);
            assert!((r.difficulty - (100.0 - (x + y) / 2.0)).abs() < 1e-9);
        }
    }
}
