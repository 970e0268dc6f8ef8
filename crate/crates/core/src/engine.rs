//! The bandit loop: spend the budget through a chooser, then name the top-k
//! topics by empirical mean.

use crate::format::{fmt9, ser_sig9_opt, ser_sig9_vec};
use crate::ledger::{Ledger, LedgerError, Observation, TopicId};
use crate::rng::{RunRng, RunStreams};
use crate::samplers::{DrawError, SamplerError, World};
use crate::select::top_b;
use crate::strategies::{ArmIndex, ArmView, StrategyConfig, StrategyError};
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

/// Consecutive failed rounds (every pull in the batch failed with a transient
/// adapter error) after which a run gives up.
pub const DEFAULT_MAX_FAILED_ROUNDS: u32 = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetConfig {
    /// Total pulls.
    pub budget: u64,
    /// Number of topics to select.
    pub k: usize,
    /// Pulls between trajectory checkpoints; `None` means `ceil(budget / 200)`.
    #[serde(default)]
    pub checkpoint_every: Option<u64>,
    #[serde(default = "default_max_failed_rounds")]
    pub max_failed_rounds: u32,
}

fn default_max_failed_rounds() -> u32 {
    DEFAULT_MAX_FAILED_ROUNDS
}

impl BudgetConfig {
    pub fn new(budget: u64, k: usize) -> Self {
        Self {
            budget,
            k,
            checkpoint_every: None,
            max_failed_rounds: DEFAULT_MAX_FAILED_ROUNDS,
        }
    }

    pub fn with_checkpoint_every(mut self, every: u64) -> Self {
        self.checkpoint_every = Some(every);
        self
    }

    pub fn checkpoint_interval(&self) -> u64 {
        self.checkpoint_every
            .unwrap_or_else(|| self.budget.div_ceil(200))
            .max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Every unit of budget was spent.
    BudgetExhausted,
    /// All topics capped or exhausted before the budget ran out.
    NoEligibleTopic,
    /// The adapter kept failing.
    AdapterFailures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub step: u64,
    /// Mean true difficulty of the current top-k selection; `None` when the
    /// world has no true means or fewer than k topics were sampled.
    #[serde(serialize_with = "ser_sig9_opt")]
    pub achieved_topk: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawFailure {
    /// Pulls completed when the failure happened.
    pub after_step: u64,
    pub topic_id: TopicId,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub strategy: String,
    pub seed: u64,
    pub budget: u64,
    pub k: usize,
    pub selected: Vec<TopicId>,
    #[serde(serialize_with = "ser_sig9_vec")]
    pub empirical_means: Vec<f64>,
    pub total_pulls: u64,
    pub stop_reason: StopReason,
    /// `true` when the run ended before spending the whole budget.
    pub budget_unspent: bool,
    pub trajectory: Vec<Checkpoint>,
    pub pull_log: Vec<Observation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<DrawFailure>,
}

impl RunResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run result serializes") + "\n"
    }

    /// `step,topic_id,difficulty` rows with a header.
    pub fn write_pull_log<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "step,topic_id,difficulty")?;
        for o in &self.pull_log {
            writeln!(out, "{},{},{}", o.step, o.topic_id, fmt9(o.difficulty))?;
        }
        Ok(())
    }

    /// Rebuilds the ledger from the pull log.
    pub fn ledger(&self, n_topics: usize) -> Result<Ledger, LedgerError> {
        let mut l = Ledger::new(n_topics);
        for o in &self.pull_log {
            l.record(o)?;
        }
        Ok(l)
    }

    pub fn final_achieved(&self) -> Option<f64> {
        self.trajectory.last().and_then(|c| c.achieved_topk)
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("k = {k} must lie in [1, {topics}]")]
    K { k: usize, topics: usize },
    #[error("budget must be at least 1")]
    Budget,
    #[error("only {sampled} topics were sampled, cannot select {k}")]
    InsufficientData { sampled: usize, k: usize },
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    World(#[from] SamplerError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// The `k` sampled topics with the highest empirical mean, best first; ties
/// broken uniformly with `rng`.
pub fn select_topk(ledger: &Ledger, k: usize, rng: &mut RunRng) -> Result<Vec<TopicId>, RunError> {
    let scored: Vec<(TopicId, f64)> = (0..ledger.n_topics())
        .filter_map(|t| ledger.mean_unchecked(t).map(|m| (t, m)))
        .collect();
    if scored.len() < k {
        return Err(RunError::InsufficientData {
            sampled: scored.len(),
            k,
        });
    }
    Ok(top_b(&scored, k, rng))
}

fn achieved(true_means: Option<&[f64]>, ledger: &Ledger, k: usize, rng: &mut RunRng) -> Option<f64> {
    let means = true_means?;
    let picked = select_topk(ledger, k, rng).ok()?;
    Some(crate::evaluation::mean_of(&picked, means))
}

/// Runs one strategy against one world until the budget is spent or no topic
/// is eligible.
///
/// Decisions, draws, selection tie-breaks and strategy setup use separate
/// streams derived from `seed`, so identical inputs give identical results.
pub fn run_bandit(
    world: &dyn World,
    strategy: &StrategyConfig,
    budget: &BudgetConfig,
    seed: u64,
) -> Result<RunResult, RunError> {
    let n = world.n_topics();
    if budget.k == 0 || budget.k > n {
        return Err(RunError::K { k: budget.k, topics: n });
    }
    if budget.budget == 0 {
        return Err(RunError::Budget);
    }
    let mut streams = RunStreams::new(seed);
    let mut chooser = strategy.build(world.topics(), &mut streams.setup)?;
    let mut sampler = world.sampler()?;
    let true_means = world.true_means();

    let mut ledger = Ledger::new(n);
    let mut blocked = vec![false; n];
    let mut index = ArmIndex::new(&ledger, strategy.cap, &blocked);
    let mut pull_log = Vec::with_capacity(budget.budget.min(1 << 24) as usize);
    let mut trajectory = Vec::new();
    let mut failures = Vec::new();
    let interval = budget.checkpoint_interval();
    let mut next_checkpoint = interval;
    let mut failed_rounds = 0u32;
    let mut stop_reason = StopReason::BudgetExhausted;

    while ledger.total_pulls() < budget.budget {
        let remaining = (budget.budget - ledger.total_pulls()) as usize;
        let want = strategy.batch.min(remaining);
        let picks = {
            let view = ArmView::with_index(&ledger, strategy.cap, &blocked, &index);
            chooser.choose_batch(&view, want, &mut streams.decision)
        };
        if picks.is_empty() {
            stop_reason = StopReason::NoEligibleTopic;
            break;
        }
        let outcomes = sampler.draw_batch(&picks, &mut streams.draw);
        let mut progressed = false;
        for (&topic, outcome) in picks.iter().zip(outcomes) {
            match outcome {
                Ok(d) => {
                    let obs = Observation {
                        step: ledger.total_pulls() + 1,
                        topic_id: topic,
                        difficulty: d,
                    };
                    ledger.record(&obs)?;
                    index.refresh(topic, &ledger, strategy.cap, &blocked);
                    pull_log.push(obs);
                    progressed = true;
                }
                Err(DrawError::Exhausted(_)) => {
                    blocked[topic] = true;
                    index.refresh(topic, &ledger, strategy.cap, &blocked);
                    progressed = true;
                }
                Err(e) => {
                    log::warn!("pull of topic {topic} failed: {e}");
                    failures.push(DrawFailure {
                        after_step: ledger.total_pulls(),
                        topic_id: topic,
                        error: e.to_string(),
                    });
                }
            }
        }
        if progressed {
            failed_rounds = 0;
        } else {
            failed_rounds += 1;
            if failed_rounds >= budget.max_failed_rounds {
                stop_reason = StopReason::AdapterFailures;
                break;
            }
        }
        if ledger.total_pulls() >= next_checkpoint {
            trajectory.push(Checkpoint {
                step: ledger.total_pulls(),
                achieved_topk: achieved(true_means, &ledger, budget.k, &mut streams.select),
            });
            next_checkpoint = (ledger.total_pulls() / interval + 1) * interval;
        }
    }

    let total = ledger.total_pulls();
    if total > 0 && trajectory.last().is_none_or(|c| c.step != total) {
        trajectory.push(Checkpoint {
            step: total,
            achieved_topk: achieved(true_means, &ledger, budget.k, &mut streams.select),
        });
    }
    let selected = select_topk(&ledger, budget.k, &mut streams.select)?;
    let empirical_means = selected
        .iter()
        .map(|&t| ledger.mean_unchecked(t).expect("selected topics are sampled"))
        .collect();
    if let Some(last) = trajectory.last_mut() {
        // the final checkpoint reports the returned selection
        last.achieved_topk = true_means.map(|m| crate::evaluation::mean_of(&selected, m));
    }

    Ok(RunResult {
        strategy: strategy.display_name(),
        seed,
        budget: budget.budget,
        k: budget.k,
        selected,
        empirical_means,
        total_pulls: total,
        stop_reason,
        budget_unspent: total < budget.budget,
        trajectory,
        pull_log,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::SyntheticWorld;
    use crate::strategies::Cap;
    use rand::SeedableRng;

    fn world(means: Vec<f64>) -> SyntheticWorld {
        SyntheticWorld::from_means(means, 4.0, [0.0, 100.0]).unwrap()
    }

    #[test]
    fn single_arm() {
        let w = world(vec![30.0]);
        let r = run_bandit(
            &w,
            &StrategyConfig::greedy(Cap::Bounded(5)),
            &BudgetConfig::new(5, 1),
            1,
        )
        .unwrap();
        assert_eq!(r.selected, vec![0]);
        assert_eq!(r.total_pulls, 5);
        assert_eq!(r.stop_reason, StopReason::BudgetExhausted);
        assert!(!r.budget_unspent);
    }

    #[test]
    fn brute_saturates_cap() {
        let w = world(vec![10.0, 20.0, 30.0, 40.0]);
        let r = run_bandit(
            &w,
            &StrategyConfig::brute(Cap::Bounded(3)),
            &BudgetConfig::new(12, 2),
            4,
        )
        .unwrap();
        let l = r.ledger(4).unwrap();
        assert!(l.counts().iter().all(|&c| c == 3));
    }

    #[test]
    fn early_stop_when_everything_capped() {
        let w = world(vec![10.0, 20.0]);
        let r = run_bandit(
            &w,
            &StrategyConfig::greedy(Cap::Bounded(2)),
            &BudgetConfig::new(10, 1),
            4,
        )
        .unwrap();
        assert_eq!(r.total_pulls, 4);
        assert!(r.budget_unspent);
        assert_eq!(r.stop_reason, StopReason::NoEligibleTopic);
        assert_eq!(r.trajectory.last().unwrap().step, 4);
    }

    #[test]
    fn k_out_of_range() {
        let w = world(vec![10.0, 20.0]);
        let s = StrategyConfig::greedy(Cap::Bounded(2));
        assert!(matches!(
            run_bandit(&w, &s, &BudgetConfig::new(4, 3), 0),
            Err(RunError::K { .. })
        ));
        assert!(matches!(
            run_bandit(&w, &s, &BudgetConfig::new(4, 0), 0),
            Err(RunError::K { .. })
        ));
        assert!(matches!(
            run_bandit(&w, &s, &BudgetConfig::new(0, 1), 0),
            Err(RunError::Budget)
        ));
    }

    #[test]
    fn deterministic() {
        let w = world((0..40).map(|i| i as f64).collect());
        let s = StrategyConfig::epsilon_greedy(0.7, Cap::Bounded(5));
        let a = run_bandit(&w, &s, &BudgetConfig::new(150, 5), 9).unwrap();
        let b = run_bandit(&w, &s, &BudgetConfig::new(150, 5), 9).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let c = run_bandit(&w, &s, &BudgetConfig::new(150, 5), 10).unwrap();
        assert_ne!(a.pull_log, c.pull_log);
    }

    #[test]
    fn checkpoints_default_grid() {
        let w = world((0..30).map(|i| i as f64).collect());
        let s = StrategyConfig::greedy(Cap::Bounded(20));
        let r = run_bandit(&w, &s, &BudgetConfig::new(450, 3), 2).unwrap();
        // ceil(450 / 200) = 3
        assert_eq!(r.trajectory.len(), 150);
        assert!(r.trajectory.iter().all(|c| c.step % 3 == 0));
        assert_eq!(r.trajectory.last().unwrap().step, 450);
        assert!(r.trajectory.windows(2).all(|w| w[0].step < w[1].step));
    }

    #[test]
    fn select_topk_forced() {
        let mut l = Ledger::new(3);
        l.record_value(0, 10.0).unwrap();
        l.record_value(1, 20.0).unwrap();
        l.record_value(2, 15.0).unwrap();
        let mut rng = RunRng::seed_from_u64(0);
        assert_eq!(select_topk(&l, 1, &mut rng).unwrap(), vec![1]);
        assert_eq!(select_topk(&l, 2, &mut rng).unwrap(), vec![1, 2]);
        let mut sparse = Ledger::new(3);
        sparse.record_value(0, 1.0).unwrap();
        assert!(matches!(
            select_topk(&sparse, 2, &mut rng),
            Err(RunError::InsufficientData { sampled: 1, k: 2 })
        ));
    }

    #[test]
    fn pull_log_csv() {
        let w = world(vec![10.0, 20.0]);
        let r = run_bandit(&w, &StrategyConfig::brute(Cap::Bounded(2)), &BudgetConfig::new(3, 1), 0).unwrap();
        let mut buf = Vec::new();
        r.write_pull_log(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("step,topic_id,difficulty"));
        assert_eq!(lines.count(), 3);
    }
}
