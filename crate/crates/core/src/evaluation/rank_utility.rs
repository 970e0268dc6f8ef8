//! How useful a subset of a scored dataset is for telling models apart.
//!
//! Dimensions are named `<language>/<model>`; a sample's score for a model is
//! its mean QE across that model's languages. A dimension without `/` is a
//! model of its own.

use super::EvalError;
use crate::engine::{run_bandit, BudgetConfig};
use crate::format::{fmt9, ser_sig9};
use crate::rng::{rep_seed, RunRng};
use crate::samplers::{ReplayWorld, World};
use crate::strategies::{Cap, StrategyConfig};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetStrategy {
    Random,
    Difficult,
    HighVariance,
}

impl SubsetStrategy {
    pub const ALL: [SubsetStrategy; 3] = [
        SubsetStrategy::Random,
        SubsetStrategy::Difficult,
        SubsetStrategy::HighVariance,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SubsetStrategy::Random => "random",
            SubsetStrategy::Difficult => "difficult",
            SubsetStrategy::HighVariance => "high_variance",
        }
    }
}

impl fmt::Display for SubsetStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

fn default_permutations() -> usize {
    10_000
}
fn default_alpha() -> f64 {
    0.05
}
fn default_epsilon() -> f64 {
    0.7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankUtilityConfig {
    pub sizes: Vec<usize>,
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Exploration rate of the search that finds the difficult topics.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Pulls given to that search; defaults to half the dataset.
    #[serde(default)]
    pub search_budget: Option<u64>,
}

impl RankUtilityConfig {
    pub fn new(sizes: Vec<usize>, reps: usize, seed: u64) -> Self {
        Self {
            sizes,
            reps,
            seed,
            permutations: default_permutations(),
            alpha: default_alpha(),
            epsilon: default_epsilon(),
            search_budget: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankUtilityRow {
    pub size: usize,
    #[serde(serialize_with = "ser_sig9")]
    pub power: f64,
    #[serde(serialize_with = "ser_sig9")]
    pub avg_difficulty: f64,
    #[serde(serialize_with = "ser_sig9")]
    pub avg_adjacent_gap: f64,
    #[serde(serialize_with = "ser_sig9")]
    pub rank_similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankUtilityReport {
    pub strategy: SubsetStrategy,
    pub reps: usize,
    /// Models ordered best first on the full dataset.
    pub full_ranking: Vec<String>,
    pub rows: Vec<RankUtilityRow>,
}

impl RankUtilityReport {
    pub const CSV_HEADER: &'static str = "strategy,size,power,avg_difficulty,avg_adjacent_gap,rank_similarity";

    pub fn csv_rows(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{},{},{}",
                    self.strategy,
                    r.size,
                    fmt9(r.power),
                    fmt9(r.avg_difficulty),
                    fmt9(r.avg_adjacent_gap),
                    fmt9(r.rank_similarity)
                )
            })
            .collect()
    }
}

/// Per-sample, per-model scores with the sample's difficulty.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelScores {
    pub models: Vec<String>,
    /// `scores[sample][model]`.
    pub scores: Vec<Vec<f64>>,
    pub difficulty: Vec<f64>,
    /// Dense topic of each sample.
    pub topic: Vec<usize>,
}

fn model_of(dim: &str) -> &str {
    dim.rsplit_once('/').map_or(dim, |(_, m)| m)
}

impl ModelScores {
    pub fn from_world(world: &ReplayWorld) -> Result<Self, EvalError> {
        let mut models: Vec<String> = world.dimensions().iter().map(|d| model_of(d).to_string()).collect();
        models.sort();
        models.dedup();
        if models.len() < 2 {
            return Err(EvalError::Config(format!(
                "need scores for at least 2 models, found {}",
                models.len()
            )));
        }
        let index: BTreeMap<&str, usize> = models.iter().enumerate().map(|(i, m)| (m.as_str(), i)).collect();
        let mut out = ModelScores {
            scores: Vec::new(),
            difficulty: Vec::new(),
            topic: Vec::new(),
            models: models.clone(),
        };
        for t in 0..world.n_topics() {
            for r in world.records(t) {
                let mut sum = vec![0.0; models.len()];
                let mut cnt = vec![0usize; models.len()];
                for (dim, q) in &r.qe {
                    let m = index[model_of(dim)];
                    sum[m] += q;
                    cnt[m] += 1;
                }
                if let Some(m) = cnt.iter().position(|&c| c == 0) {
                    return Err(EvalError::Config(format!(
                        "sample {} of topic {:?} has no score for model {}",
                        r.sample_id, r.topic_name, models[m]
                    )));
                }
                out.scores
                    .push(sum.iter().zip(&cnt).map(|(s, &c)| s / c as f64).collect());
                out.difficulty.push(r.difficulty);
                out.topic.push(t);
            }
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    fn model_means(&self, subset: &[usize]) -> Vec<f64> {
        let mut means = vec![0.0; self.models.len()];
        for &i in subset {
            for (m, s) in self.scores[i].iter().enumerate() {
                means[m] += s;
            }
        }
        means.iter().map(|s| s / subset.len() as f64).collect()
    }

    fn model_variance(&self, sample: usize) -> f64 {
        let row = &self.scores[sample];
        let mean = row.iter().sum::<f64>() / row.len() as f64;
        row.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / row.len() as f64
    }
}

/// Kendall's tau-b between two paired score vectors.
///
/// When either side is entirely tied the coefficient is undefined; it is
/// reported as 1 if both are entirely tied and 0 otherwise.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (mut concordant, mut discordant, mut tie_x, mut tie_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let dx = x[i].total_cmp(&x[j]) as i64;
            let dy = y[i].total_cmp(&y[j]) as i64;
            match (dx, dy) {
                (0, 0) => {}
                (0, _) => tie_x += 1,
                (_, 0) => tie_y += 1,
                _ if dx == dy => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let nx = (concordant + discordant + tie_y) as f64;
    let ny = (concordant + discordant + tie_x) as f64;
    if nx == 0.0 || ny == 0.0 {
        return if nx == ny { 1.0 } else { 0.0 };
    }
    (concordant - discordant) as f64 / (nx * ny).sqrt()
}

/// Two-sided paired sign-flip permutation test on the differences `d`.
///
/// Returns `(1 + #{|sum s_i d_i| >= |sum d_i|}) / (1 + permutations)`.
pub fn paired_permutation_p(d: &[f64], permutations: usize, rng: &mut RunRng) -> f64 {
    let observed = d.iter().sum::<f64>().abs();
    let scale: f64 = d.iter().map(|v| v.abs()).sum();
    let threshold = observed - 1e-12 * scale;
    let mut hits = 0usize;
    let mut bits = 0u64;
    for _ in 0..permutations {
        let mut s = 0.0;
        for (i, v) in d.iter().enumerate() {
            if i % 64 == 0 {
                bits = rng.random();
            }
            if bits >> (i % 64) & 1 == 1 {
                s += v;
            } else {
                s -= v;
            }
        }
        if s.abs() >= threshold {
            hits += 1;
        }
    }
    (1 + hits) as f64 / (1 + permutations) as f64
}

/// Samples ordered hardest first (ties by position) from the topics an
/// epsilon-greedy search picked as most difficult.
fn difficult_pool(
    world: &ReplayWorld,
    data: &ModelScores,
    config: &RankUtilityConfig,
) -> Result<Vec<usize>, EvalError> {
    let max_size = config.sizes.iter().copied().max().unwrap_or(0);
    let min_records = world.min_records_per_topic().max(1);
    let k = max_size.div_ceil(min_records).clamp(1, world.n_topics());
    let total = world.record_count() as u64;
    let budget = config
        .search_budget
        .unwrap_or_else(|| (total / 2).max(2 * k as u64).min(total));
    let strategy = StrategyConfig::epsilon_greedy(config.epsilon, Cap::Unbounded);
    let run = run_bandit(
        world,
        &strategy,
        &BudgetConfig::new(budget, k),
        rep_seed(config.seed, "rank-utility/search", 0),
    )?;
    let mut chosen = vec![false; world.n_topics()];
    for &t in &run.selected {
        chosen[t] = true;
    }
    let mut pool: Vec<usize> = (0..data.len()).filter(|&i| chosen[data.topic[i]]).collect();
    pool.sort_by(|&a, &b| data.difficulty[b].total_cmp(&data.difficulty[a]).then(a.cmp(&b)));
    Ok(pool)
}

fn high_variance_pool(data: &ModelScores) -> Vec<usize> {
    let var: Vec<f64> = (0..data.len()).map(|i| data.model_variance(i)).collect();
    let mut pool: Vec<usize> = (0..data.len()).collect();
    pool.sort_by(|&a, &b| var[b].total_cmp(&var[a]).then(a.cmp(&b)));
    pool
}

fn evaluate_subset(
    data: &ModelScores,
    subset: &[usize],
    full_means: &[f64],
    full_order: &[usize],
    config: &RankUtilityConfig,
    rng: &mut RunRng,
) -> [f64; 4] {
    let means = data.model_means(subset);
    let mut significant = 0usize;
    let mut gap = 0.0;
    for pair in full_order.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let d: Vec<f64> = subset.iter().map(|&i| data.scores[i][a] - data.scores[i][b]).collect();
        if paired_permutation_p(&d, config.permutations, rng) < config.alpha {
            significant += 1;
        }
        gap += (means[a] - means[b]).abs();
    }
    let pairs = (full_order.len() - 1) as f64;
    let difficulty = subset.iter().map(|&i| data.difficulty[i]).sum::<f64>() / subset.len() as f64;
    [
        significant as f64 / pairs,
        difficulty,
        gap / pairs,
        kendall_tau_b(full_means, &means),
    ]
}

/// Power, difficulty, adjacent-model gap and rank agreement of subsets of
/// each requested size, averaged over `config.reps` repetitions.
pub fn rank_utility(
    world: &ReplayWorld,
    strategy: SubsetStrategy,
    config: &RankUtilityConfig,
) -> Result<RankUtilityReport, EvalError> {
    let data = ModelScores::from_world(world)?;
    if config.reps == 0 || config.permutations == 0 {
        return Err(EvalError::Config("reps and permutations must be at least 1".into()));
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(EvalError::Config(format!(
            "alpha must lie in (0, 1), got {}",
            config.alpha
        )));
    }
    for &s in &config.sizes {
        if s == 0 || s > data.len() {
            return Err(EvalError::Config(format!(
                "subset size {s} with {} samples",
                data.len()
            )));
        }
    }
    let everything: Vec<usize> = (0..data.len()).collect();
    let full_means = data.model_means(&everything);
    let mut full_order: Vec<usize> = (0..data.models.len()).collect();
    full_order.sort_by(|&a, &b| full_means[b].total_cmp(&full_means[a]).then(a.cmp(&b)));

    let pool = match strategy {
        SubsetStrategy::Random => None,
        SubsetStrategy::Difficult => Some(difficult_pool(world, &data, config)?),
        SubsetStrategy::HighVariance => Some(high_variance_pool(&data)),
    };

    let mut rows = Vec::with_capacity(config.sizes.len());
    for &size in &config.sizes {
        if let Some(p) = &pool {
            if p.len() < size {
                return Err(EvalError::Config(format!(
                    "only {} samples available to the {strategy} subset, size {size} requested",
                    p.len()
                )));
            }
        }
        let mut acc = [0.0; 4];
        for rep in 0..config.reps {
            let label = format!("rank-utility/{strategy}/{size}");
            let mut rng = RunRng::seed_from_u64(rep_seed(config.seed, &label, rep as u64));
            let subset = match &pool {
                Some(p) => p[..size].to_vec(),
                None => crate::select::sample_distinct(everything.clone(), size, &mut rng),
            };
            let m = evaluate_subset(&data, &subset, &full_means, &full_order, config, &mut rng);
            for (a, v) in acc.iter_mut().zip(m) {
                *a += v;
            }
        }
        let r = config.reps as f64;
        rows.push(RankUtilityRow {
            size,
            power: acc[0] / r,
            avg_difficulty: acc[1] / r,
            avg_adjacent_gap: acc[2] / r,
            rank_similarity: acc[3] / r,
        });
    }
    Ok(RankUtilityReport {
        strategy,
        reps: config.reps,
        full_ranking: full_order.iter().map(|&m| data.models[m].clone()).collect(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::ReplayRecord;

    fn dataset(
        topics: usize,
        per_topic: usize,
        score: impl Fn(usize, usize) -> Vec<(&'static str, f64)>,
    ) -> ReplayWorld {
        let mut records = Vec::new();
        for t in 0..topics {
            for s in 0..per_topic {
                let qe: BTreeMap<String, f64> = score(t, s).into_iter().map(|(k, v)| (k.to_string(), v)).collect();
                records.push(ReplayRecord {
                    topic_id: t as i64,
                    topic_name: format!("topic {t}"),
                    keywords: vec![],
                    sample_id: s as i64,
                    difficulty: ReplayRecord::recompute_difficulty(&qe).unwrap(),
                    qe,
                    text: None,
                    source_url: None,
                });
            }
        }
        ReplayWorld::from_records(records).unwrap()
    }

    #[test]
    fn tau_b_cases() {
        assert_eq!(kendall_tau_b(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0);
        assert_eq!(kendall_tau_b(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
        // one tie in y: C=2, D=0, tie_y=1 -> 2 / sqrt(3 * 2)
        let t = kendall_tau_b(&[1.0, 2.0, 3.0], &[1.0, 1.0, 2.0]);
        assert!((t - 2.0 / 6f64.sqrt()).abs() < 1e-12);
        assert_eq!(kendall_tau_b(&[1.0, 1.0], &[2.0, 2.0]), 1.0);
    }

    #[test]
    fn permutation_p_null_and_planted() {
        let mut rng = RunRng::seed_from_u64(1);
        assert_eq!(paired_permutation_p(&[0.0; 40], 1000, &mut rng), 1.0);
        let p = paired_permutation_p(&[2.0; 30], 1000, &mut rng);
        assert!(p < 0.002, "{p}");
    }

    #[test]
    fn full_subset_is_identity() {
        let w = dataset(6, 5, |t, s| {
            vec![
                ("de/a", 50.0 + (t * s) as f64 % 7.0),
                ("de/b", 40.0 + s as f64),
                ("de/c", 60.0 - t as f64),
            ]
        });
        let mut cfg = RankUtilityConfig::new(vec![30], 2, 3);
        cfg.permutations = 200;
        let r = rank_utility(&w, SubsetStrategy::Random, &cfg).unwrap();
        let mean: f64 = w.all_records().map(|r| r.difficulty).sum::<f64>() / 30.0;
        assert_eq!(r.rows[0].rank_similarity, 1.0);
        assert!((r.rows[0].avg_difficulty - mean).abs() < 1e-9);
        assert!(rank_utility(&w, SubsetStrategy::Random, &RankUtilityConfig::new(vec![31], 1, 0)).is_err());
    }

    #[test]
    fn identical_models() {
        let w = dataset(4, 10, |t, s| {
            let q = 30.0 + (t * 7 + s * 3) as f64 % 11.0;
            vec![("de/a", q), ("de/b", q)]
        });
        let mut cfg = RankUtilityConfig::new(vec![20], 1, 0);
        cfg.permutations = 500;
        let r = rank_utility(&w, SubsetStrategy::HighVariance, &cfg).unwrap();
        assert_eq!(r.rows[0].avg_adjacent_gap, 0.0);
        assert_eq!(r.rows[0].power, 0.0);
    }

    #[test]
    fn single_model_rejected() {
        let w = dataset(2, 2, |_, _| vec![("de/a", 1.0), ("fr/a", 2.0)]);
        assert!(matches!(ModelScores::from_world(&w), Err(EvalError::Config(_))));
    }
}
