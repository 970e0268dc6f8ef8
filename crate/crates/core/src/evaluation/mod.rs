//! Scoring runs and datasets against the truth.

mod cost;
mod cross_rank;
mod rank_utility;
mod scaling;

pub use cost::{
    cost_estimate, derive_search_request_cost, CostBreakdown, CostEstimate, CostSheet, Money, SearchCostParams,
    TokenCost,
};
pub use cross_rank::{cross_rank, cross_rank_matrix, dimension_ranking};
pub use rank_utility::{
    kendall_tau_b, paired_permutation_p, rank_utility, ModelScores, RankUtilityConfig, RankUtilityReport,
    RankUtilityRow, SubsetStrategy,
};
pub use scaling::{sample_topic_means, scaling_study, ScalingCurve, ScalingPoint};

use crate::engine::RunError;
use crate::ledger::TopicId;
use crate::samplers::World;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("world has no true means to evaluate against")]
    UnsupportedWorld,
    #[error("invalid selection: {0}")]
    Selection(String),
    #[error("invalid evaluation config: {0}")]
    Config(String),
    #[error(transparent)]
    Run(#[from] RunError),
}

/// Mean of `means[id]` over `ids`, summed in descending order of value.
///
/// Summing in a fixed order makes the oracle value an exact upper bound of
/// any other selection of the same size, so regret is never negative.
pub fn mean_of(ids: &[TopicId], means: &[f64]) -> f64 {
    let mut vals: Vec<f64> = ids.iter().map(|&t| means[t]).collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    vals.iter().sum::<f64>() / vals.len() as f64
}

fn true_means(world: &dyn World) -> Result<&[f64], EvalError> {
    world.true_means().ok_or(EvalError::UnsupportedWorld)
}

/// Ids of the `k` largest true means (ties by id) and their average.
pub fn oracle_topk(world: &dyn World, k: usize) -> Result<(Vec<TopicId>, f64), EvalError> {
    let means = true_means(world)?;
    oracle_from_means(means, k)
}

pub fn oracle_from_means(means: &[f64], k: usize) -> Result<(Vec<TopicId>, f64), EvalError> {
    if k == 0 || k > means.len() {
        return Err(EvalError::Selection(format!("k = {k} with {} topics", means.len())));
    }
    let mut ids: Vec<TopicId> = (0..means.len()).collect();
    ids.sort_by(|&a, &b| means[b].total_cmp(&means[a]).then(a.cmp(&b)));
    ids.truncate(k);
    let value = mean_of(&ids, means);
    Ok((ids, value))
}

fn check_selection(selected: &[TopicId], n: usize) -> Result<(), EvalError> {
    if selected.is_empty() {
        return Err(EvalError::Selection("empty selection".into()));
    }
    let mut seen = vec![false; n];
    for &t in selected {
        if t >= n {
            return Err(EvalError::Selection(format!("topic {t} out of range")));
        }
        if std::mem::replace(&mut seen[t], true) {
            return Err(EvalError::Selection(format!("topic {t} selected twice")));
        }
    }
    Ok(())
}

/// Average true mean of the selected topics.
pub fn achieved_difficulty(selected: &[TopicId], world: &dyn World) -> Result<f64, EvalError> {
    let means = true_means(world)?;
    check_selection(selected, means.len())?;
    Ok(mean_of(selected, means))
}

/// Oracle top-k value minus the selection's achieved value.
pub fn regret(selected: &[TopicId], world: &dyn World, k: usize) -> Result<f64, EvalError> {
    let means = true_means(world)?;
    regret_from_means(selected, means, k)
}

pub fn regret_from_means(selected: &[TopicId], means: &[f64], k: usize) -> Result<f64, EvalError> {
    if selected.len() != k {
        return Err(EvalError::Selection(format!(
            "{} topics selected, expected {k}",
            selected.len()
        )));
    }
    check_selection(selected, means.len())?;
    let (_, oracle) = oracle_from_means(means, k)?;
    Ok(oracle - mean_of(selected, means))
}
