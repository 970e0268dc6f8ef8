use super::{ArmView, Chooser};
use crate::ledger::{Ledger, TopicId, TopicMeta};
use crate::rng::RunRng;
use crate::select::{sample_distinct, top_b};
use std::collections::{BTreeSet, HashMap};

/// `|a ∩ b| / |a ∪ b|`, with two empty sets scoring 0.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let shared = a.intersection(b).count();
    let union = a.len() + b.len() - shared;
    if union == 0 {
        0.0
    } else {
        shared as f64 / union as f64
    }
}

/// Sparse all-pairs keyword similarity: only positive entries are stored,
/// neighbors sorted by id, no self-edges.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimilarityIndex {
    neighbors: Vec<Vec<(TopicId, f64)>>,
}

impl SimilarityIndex {
    pub fn build(topics: &[TopicMeta]) -> Self {
        let mut postings: HashMap<&str, Vec<TopicId>> = HashMap::new();
        for t in topics {
            for k in &t.keywords {
                postings.entry(k.as_str()).or_default().push(t.id);
            }
        }
        let mut neighbors = vec![Vec::new(); topics.len()];
        let mut shared: HashMap<TopicId, usize> = HashMap::new();
        for t in topics {
            shared.clear();
            for k in &t.keywords {
                for &o in &postings[k.as_str()] {
                    if o != t.id {
                        *shared.entry(o).or_insert(0) += 1;
                    }
                }
            }
            let mut list: Vec<(TopicId, f64)> = shared
                .iter()
                .map(|(&o, &s)| {
                    let union = t.keywords.len() + topics[o].keywords.len() - s;
                    (o, s as f64 / union as f64)
                })
                .collect();
            list.sort_by_key(|&(o, _)| o);
            neighbors[t.id] = list;
        }
        Self { neighbors }
    }

    /// An index with no edges over `n` topics.
    pub fn empty(n: usize) -> Self {
        Self {
            neighbors: vec![Vec::new(); n],
        }
    }

    pub fn from_lists(neighbors: Vec<Vec<(TopicId, f64)>>) -> Self {
        Self { neighbors }
    }

    pub fn neighbors(&self, t: TopicId) -> &[(TopicId, f64)] {
        &self.neighbors[t]
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }
}

/// Own mean blended with a softmax-over-similarity average of sampled
/// neighbors' means. `None` marks an unscoreable topic: unsampled with fewer
/// than two sampled neighbors.
///
/// The own-mean weight is 0, 0.5 or 1 for 0, 1, or at least 2 own pulls. With
/// weight 0 the own term contributes nothing. A topic with one pull and no
/// sampled neighbor scores its own mean.
pub fn contextual_score(topic: TopicId, ledger: &Ledger, index: &SimilarityIndex, temperature: f64) -> Option<f64> {
    let own_n = ledger.count(topic);
    if own_n >= 2 {
        return ledger.mean_unchecked(topic);
    }
    let sampled: Vec<(f64, f64)> = index
        .neighbors(topic)
        .iter()
        .filter(|&&(o, sim)| sim > 0.0 && ledger.is_sampled(o))
        .map(|&(o, sim)| (sim, ledger.mean_unchecked(o).unwrap_or_default()))
        .collect();
    if own_n == 0 && sampled.len() < 2 {
        return None;
    }
    if sampled.is_empty() {
        return ledger.mean_unchecked(topic);
    }
    let top = sampled
        .iter()
        .map(|&(s, _)| s / temperature)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut norm = 0.0;
    let mut acc = 0.0;
    for &(sim, mean) in &sampled {
        let w = (sim / temperature - top).exp();
        norm += w;
        acc += w * mean;
    }
    let neighbor_term = acc / norm;
    if own_n == 0 {
        Some(neighbor_term)
    } else {
        let own = ledger.mean_unchecked(topic).unwrap_or_default();
        Some(0.5 * own + 0.5 * neighbor_term)
    }
}

pub fn contextual_choose(
    view: &ArmView<'_>,
    index: &SimilarityIndex,
    temperature: f64,
    rng: &mut RunRng,
) -> Option<TopicId> {
    ContextualChooser::new(index.clone(), temperature).choose(view, rng)
}

/// While any topic is unscoreable, explore uniformly among unsampled topics;
/// afterwards (and for batch slots left over) exploit the best contextual
/// score below the cap.
#[derive(Debug, Clone)]
pub struct ContextualChooser {
    index: SimilarityIndex,
    temperature: f64,
}

impl ContextualChooser {
    pub fn new(index: SimilarityIndex, temperature: f64) -> Self {
        Self { index, temperature }
    }

    pub fn index(&self) -> &SimilarityIndex {
        &self.index
    }
}

impl Chooser for ContextualChooser {
    fn choose_batch(&mut self, view: &ArmView<'_>, b: usize, rng: &mut RunRng) -> Vec<TopicId> {
        let n = view.n_topics();
        let scores: Vec<Option<f64>> = (0..n)
            .map(|t| contextual_score(t, view.ledger, &self.index, self.temperature))
            .collect();
        let mut out = Vec::new();
        if scores.iter().any(Option::is_none) {
            out = sample_distinct(view.unsampled(), b, rng);
            if out.len() == b {
                return out;
            }
        }
        let taken: BTreeSet<TopicId> = out.iter().copied().collect();
        let scored: Vec<(TopicId, f64)> = (0..n)
            .filter(|&t| view.eligible(t) && !taken.contains(&t))
            .filter_map(|t| scores[t].map(|s| (t, s)))
            .collect();
        out.extend(top_b(&scored, b - out.len(), rng));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategies::{greedy_choose, Cap};
    use rand::SeedableRng;

    fn set(words: &[&str]) -> BTreeSet<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn jaccard_cases() {
        assert_eq!(jaccard(&set(&["a", "b"]), &set(&["a", "b"])), 1.0);
        assert_eq!(jaccard(&set(&["a"]), &set(&["b"])), 0.0);
        assert_eq!(jaccard(&set(&["a", "b", "c"]), &set(&["b", "c", "d"])), 0.5);
        assert_eq!(jaccard(&set(&[]), &set(&[])), 0.0);
    }

    #[test]
    fn index_is_symmetric_without_self_edges() {
        let topics: Vec<TopicMeta> = [&["a", "b"][..], &["b", "c"], &["x"], &["a", "c", "b"]]
            .iter()
            .enumerate()
            .map(|(i, w)| TopicMeta {
                id: i,
                name: format!("t{i}"),
                keywords: set(w),
            })
            .collect();
        let idx = SimilarityIndex::build(&topics);
        assert!(idx.neighbors(2).is_empty());
        for a in 0..4 {
            for &(b, s) in idx.neighbors(a) {
                assert_ne!(a, b);
                assert!(idx.neighbors(b).contains(&(a, s)));
                assert_eq!(s, jaccard(&topics[a].keywords, &topics[b].keywords));
            }
        }
        assert_eq!(idx.neighbors(0), &[(1, 1.0 / 3.0), (3, 2.0 / 3.0)]);
    }

    fn star() -> (Ledger, SimilarityIndex) {
        // topic 0 is scored; neighbors 1 (sim 0.5, mean 30) and 2 (sim 0.25, mean 10)
        let idx = SimilarityIndex::from_lists(vec![vec![(1, 0.5), (2, 0.25)], vec![(0, 0.5)], vec![(0, 0.25)]]);
        let mut l = Ledger::new(3);
        l.record_value(0, 20.0).unwrap();
        l.record_value(1, 30.0).unwrap();
        l.record_value(2, 10.0).unwrap();
        (l, idx)
    }

    #[test]
    fn hand_computed_blend() {
        let (l, idx) = star();
        let s = contextual_score(0, &l, &idx, 1.0).unwrap();
        assert!((s - 20.622).abs() < 1e-3, "{s}");
    }

    #[test]
    fn saturated_topic_scores_own_mean() {
        let (mut l, idx) = star();
        l.record_value(0, 40.0).unwrap();
        assert_eq!(contextual_score(0, &l, &idx, 1.0), Some(30.0));
    }

    #[test]
    fn one_sampled_neighbor_is_unscoreable() {
        let idx = SimilarityIndex::from_lists(vec![vec![(1, 0.5)], vec![(0, 0.5)]]);
        let mut l = Ledger::new(2);
        l.record_value(1, 30.0).unwrap();
        assert_eq!(contextual_score(0, &l, &idx, 1.0), None);
    }

    #[test]
    fn isolated_index_matches_greedy() {
        let mut l = Ledger::new(4);
        l.record_value(1, 3.0).unwrap();
        l.record_value(3, 3.0).unwrap();
        let blocked = vec![false; 4];
        let view = ArmView::new(&l, Cap::Bounded(3), &blocked);
        let idx = SimilarityIndex::empty(4);
        for seed in 0..50 {
            let a = contextual_choose(&view, &idx, 1.0, &mut RunRng::seed_from_u64(seed));
            let b = greedy_choose(&view, &mut RunRng::seed_from_u64(seed));
            assert_eq!(a, b);
        }
    }
}
