//! Ranking and uniform-sampling primitives with seeded tie-breaking.
//!
//! Every chooser and the final top-k selection go through these helpers, so a
//! batch of size one always consumes randomness exactly like a single pick.

use crate::ledger::TopicId;
use rand::Rng;

/// Picks `m` distinct items uniformly from `items` (partial Fisher-Yates).
///
/// Returns all items in shuffled order when `m >= items.len()`.
pub fn sample_distinct<R: Rng + ?Sized>(mut items: Vec<TopicId>, m: usize, rng: &mut R) -> Vec<TopicId> {
    let m = m.min(items.len());
    for i in 0..m {
        let j = rng.random_range(i..items.len());
        items.swap(i, j);
    }
    items.truncate(m);
    items
}

/// Argmax over `(id, score)` pairs; ties are broken uniformly.
///
/// Candidates must be supplied in ascending id order for reproducibility.
pub fn argmax<R, I>(candidates: I, rng: &mut R) -> Option<TopicId>
where
    R: Rng + ?Sized,
    I: Iterator<Item = (TopicId, f64)> + Clone,
{
    let mut best = f64::NEG_INFINITY;
    let mut ties = 0usize;
    let mut first = None;
    for (id, score) in candidates.clone() {
        if first.is_none() || score > best {
            best = score;
            ties = 1;
            first = Some(id);
        } else if score == best {
            ties += 1;
        }
    }
    let first = first?;
    if ties == 1 {
        return Some(first);
    }
    let pick = rng.random_range(0..ties);
    candidates.filter(|&(_, s)| s == best).nth(pick).map(|(id, _)| id)
}

/// The `b` highest-scoring ids in descending score order.
///
/// Ties at the cut-off are resolved by a uniform draw among the tied ids and
/// runs of equal scores inside the result are shuffled. For `b == 1` this
/// consumes randomness exactly like [`argmax`].
pub fn top_b<R: Rng + ?Sized>(scored: &[(TopicId, f64)], b: usize, rng: &mut R) -> Vec<TopicId> {
    if b == 0 || scored.is_empty() {
        return Vec::new();
    }
    if b == 1 {
        return argmax(scored.iter().copied(), rng).into_iter().collect();
    }
    let b = b.min(scored.len());
    let mut scores: Vec<f64> = scored.iter().map(|&(_, s)| s).collect();
    let (_, threshold, _) = scores.select_nth_unstable_by(b - 1, |a, c| c.total_cmp(a));
    let threshold = *threshold;

    let mut chosen: Vec<(TopicId, f64)> = scored.iter().copied().filter(|&(_, s)| s > threshold).collect();
    let tied: Vec<TopicId> = scored
        .iter()
        .filter(|&&(_, s)| s == threshold)
        .map(|&(id, _)| id)
        .collect();
    let need = b - chosen.len();
    if need == 1 && tied.len() > 1 {
        chosen.push((tied[rng.random_range(0..tied.len())], threshold));
    } else if need == tied.len() {
        chosen.extend(tied.into_iter().map(|id| (id, threshold)));
    } else {
        chosen.extend(sample_distinct(tied, need, rng).into_iter().map(|id| (id, threshold)));
    }

    chosen.sort_by(|a, c| c.1.total_cmp(&a.1).then(a.0.cmp(&c.0)));
    let mut start = 0;
    while start < chosen.len() {
        let mut end = start + 1;
        while end < chosen.len() && chosen[end].1 == chosen[start].1 {
            end += 1;
        }
        if end - start > 1 {
            for i in start..end - 1 {
                let j = rng.random_range(i..end);
                chosen.swap(i, j);
            }
        }
        start = end;
    }
    chosen.into_iter().map(|(id, _)| id).collect()
}
