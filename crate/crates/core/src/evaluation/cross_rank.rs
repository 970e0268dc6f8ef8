//! Do topics that are hard along one quality dimension stay hard along another?

use super::EvalError;
use crate::ledger::TopicId;
use crate::samplers::ReplayWorld;

/// Topics ordered hardest first by their mean `100 - qe[dim]`, ties by id.
/// Topics without any score for `dim` are left out.
pub fn dimension_ranking(world: &ReplayWorld, dim: &str) -> Result<Vec<TopicId>, EvalError> {
    let mut scored = Vec::new();
    for t in 0..crate::samplers::World::n_topics(world) {
        let vals: Vec<f64> = world
            .records(t)
            .iter()
            .filter_map(|r| r.qe.get(dim))
            .map(|q| 100.0 - q)
            .collect();
        if !vals.is_empty() {
            scored.push((t, vals.iter().sum::<f64>() / vals.len() as f64));
        }
    }
    if scored.is_empty() {
        return Err(EvalError::Config(format!(
            "dimension {dim:?} not present in the dataset"
        )));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().map(|(t, _)| t).collect())
}

fn average_position(top: &[TopicId], ranking: &[TopicId], n_topics: usize) -> Result<f64, EvalError> {
    let mut position = vec![None; n_topics];
    for (i, &t) in ranking.iter().enumerate() {
        position[t] = Some(i + 1);
    }
    let mut sum = 0usize;
    for &t in top {
        sum +=
            position[t].ok_or_else(|| EvalError::Config(format!("topic {t} has no score in the second dimension")))?;
    }
    Ok(sum as f64 / top.len() as f64)
}

/// Average 1-based position, in `dim_b`'s ranking, of `dim_a`'s `k` hardest topics.
pub fn cross_rank(world: &ReplayWorld, dim_a: &str, dim_b: &str, k: usize) -> Result<f64, EvalError> {
    let a = dimension_ranking(world, dim_a)?;
    let b = dimension_ranking(world, dim_b)?;
    if k == 0 || k > a.len() {
        return Err(EvalError::Config(format!("k = {k} with {} ranked topics", a.len())));
    }
    average_position(&a[..k], &b, crate::samplers::World::n_topics(world))
}

/// `cross_rank` for every ordered pair of `dims`; row = source dimension.
pub fn cross_rank_matrix(world: &ReplayWorld, dims: &[String], k: usize) -> Result<Vec<Vec<f64>>, EvalError> {
    let n = crate::samplers::World::n_topics(world);
    let rankings = dims
        .iter()
        .map(|d| dimension_ranking(world, d))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::with_capacity(dims.len());
    for a in &rankings {
        if k == 0 || k > a.len() {
            return Err(EvalError::Config(format!("k = {k} with {} ranked topics", a.len())));
        }
        out.push(
            rankings
                .iter()
                .map(|b| average_position(&a[..k], b, n))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }
    Ok(out)
}
