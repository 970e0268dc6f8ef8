//! Arm metadata, observations, and the per-topic draw statistics every
//! strategy reads.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

/// Dense topic index in `0..|T|`.
pub type TopicId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicMeta {
    pub id: TopicId,
    pub name: String,
    /// Lowercase tokens; empty for worlds without context.
    #[serde(default)]
    pub keywords: BTreeSet<String>,
}

impl TopicMeta {
    pub fn new(id: TopicId, name: impl Into<String>) -> Self {
        Self {
            id,
            name: name.into(),
            keywords: BTreeSet::new(),
        }
    }
}

/// Lowercases `name` and splits it on runs of non-alphanumeric characters.
pub fn keywords_from_name(name: &str) -> BTreeSet<String> {
    name.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Checks that topic ids are exactly `0..len` in order.
pub fn check_contiguous(topics: &[TopicMeta]) -> Result<(), LedgerError> {
    match topics.iter().enumerate().find(|(i, t)| t.id != *i) {
        Some((i, t)) => Err(LedgerError::NonContiguous { position: i, id: t.id }),
        None => Ok(()),
    }
}

/// One pull: which topic, what difficulty, and its 1-based position in the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub step: u64,
    pub topic_id: TopicId,
    #[serde(serialize_with = "crate::format::ser_sig9")]
    pub difficulty: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum LedgerError {
    #[error("invalid topic id {id} (ledger has {len} topics)")]
    InvalidTopic { id: TopicId, len: usize },
    #[error("difficulty {0} is not a finite value")]
    NonFinite(f64),
    #[error("topic at position {position} has id {id}; ids must be contiguous from 0")]
    NonContiguous { position: usize, id: TopicId },
}

/// Count, sum and sum of squares per topic, plus the total pull count.
#[derive(Debug, Clone, PartialEq)]
pub struct Ledger {
    counts: Vec<u32>,
    sums: Vec<f64>,
    sum_squares: Vec<f64>,
    total_pulls: u64,
}

impl Ledger {
    pub fn new(n_topics: usize) -> Self {
        Self {
            counts: vec![0; n_topics],
            sums: vec![0.0; n_topics],
            sum_squares: vec![0.0; n_topics],
            total_pulls: 0,
        }
    }

    pub fn n_topics(&self) -> usize {
        self.counts.len()
    }

    pub fn total_pulls(&self) -> u64 {
        self.total_pulls
    }

    fn check(&self, topic: TopicId) -> Result<(), LedgerError> {
        if topic < self.counts.len() {
            Ok(())
        } else {
            Err(LedgerError::InvalidTopic {
                id: topic,
                len: self.counts.len(),
            })
        }
    }

    pub fn record(&mut self, obs: &Observation) -> Result<(), LedgerError> {
        self.record_value(obs.topic_id, obs.difficulty)
    }

    pub fn record_value(&mut self, topic: TopicId, difficulty: f64) -> Result<(), LedgerError> {
        self.check(topic)?;
        if !difficulty.is_finite() {
            return Err(LedgerError::NonFinite(difficulty));
        }
        self.counts[topic] += 1;
        self.sums[topic] += difficulty;
        self.sum_squares[topic] += difficulty * difficulty;
        self.total_pulls += 1;
        Ok(())
    }

    pub fn count(&self, topic: TopicId) -> u32 {
        self.counts[topic]
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn sum(&self, topic: TopicId) -> f64 {
        self.sums[topic]
    }

    pub fn sum_squares(&self, topic: TopicId) -> f64 {
        self.sum_squares[topic]
    }

    /// `s_t / n_t`, or `None` for a topic that has never been pulled.
    pub fn empirical_mean(&self, topic: TopicId) -> Result<Option<f64>, LedgerError> {
        self.check(topic)?;
        Ok(self.mean_unchecked(topic))
    }

    /// Same as [`Ledger::empirical_mean`] for an id already known to be valid.
    #[inline]
    pub fn mean_unchecked(&self, topic: TopicId) -> Option<f64> {
        match self.counts[topic] {
            0 => None,
            n => Some(self.sums[topic] / f64::from(n)),
        }
    }

    pub fn is_sampled(&self, topic: TopicId) -> bool {
        self.counts[topic] > 0
    }

    pub fn sampled_count(&self) -> usize {
        self.counts.iter().filter(|&&n| n > 0).count()
    }

    /// Applies `d -> scale * d + shift` to every recorded observation.
    pub fn affine(&self, scale: f64, shift: f64) -> Ledger {
        let mut out = self.clone();
        for t in 0..self.counts.len() {
            let n = f64::from(self.counts[t]);
            let s = self.sums[t];
            out.sums[t] = scale * s + shift * n;
            out.sum_squares[t] = scale * scale * self.sum_squares[t] + 2.0 * scale * shift * s + shift * shift * n;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn obs(step: u64, topic_id: TopicId, difficulty: f64) -> Observation {
        Observation {
            step,
            topic_id,
            difficulty,
        }
    }

    #[test]
    fn single_insertion() {
        let mut l = Ledger::new(5);
        l.record(&obs(1, 3, 20.0)).unwrap();
        assert_eq!(l.count(3), 1);
        assert_eq!(l.sum(3), 20.0);
        assert_eq!(l.total_pulls(), 1);
        for t in [0, 1, 2, 4] {
            assert_eq!(l.count(t), 0);
            assert_eq!(l.sum(t), 0.0);
        }
    }

    #[test]
    fn additive() {
        let mut l = Ledger::new(5);
        l.record(&obs(1, 3, 20.0)).unwrap();
        l.record(&obs(2, 3, 10.0)).unwrap();
        assert_eq!(l.count(3), 2);
        assert_eq!(l.sum(3), 30.0);
        assert_eq!(l.sum_squares(3), 500.0);
        assert_eq!(l.empirical_mean(3).unwrap(), Some(15.0));
    }

    #[test]
    fn unknown_topic_rejected() {
        let mut l = Ledger::new(2);
        assert_eq!(
            l.record(&obs(1, 2, 1.0)),
            Err(LedgerError::InvalidTopic { id: 2, len: 2 })
        );
        assert_eq!(l.total_pulls(), 0);
        assert!(l.empirical_mean(9).is_err());
    }

    #[test]
    fn unsampled_mean_is_undefined() {
        let l = Ledger::new(3);
        assert_eq!(l.empirical_mean(0).unwrap(), None);
    }

    #[test]
    fn random_records_match_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 17;
        let mut l = Ledger::new(n);
        let mut log = Vec::new();
        for step in 1..=1000 {
            let o = obs(step, rng.random_range(0..n), rng.random_range(0.0..100.0));
            l.record(&o).unwrap();
            log.push(o);
        }
        assert_eq!(l.total_pulls(), 1000);
        for t in 0..n {
            let xs: Vec<f64> = log.iter().filter(|o| o.topic_id == t).map(|o| o.difficulty).collect();
            assert_eq!(l.count(t) as usize, xs.len());
            let s: f64 = xs.iter().sum();
            assert!((l.sum(t) - s).abs() < 1e-9);
            if !xs.is_empty() {
                let m = s / xs.len() as f64;
                assert!((l.empirical_mean(t).unwrap().unwrap() - m).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn keywords_split_on_non_alphanumeric() {
        let k = keywords_from_name("Harpsichord in Baroque-music (1700s)");
        let v: Vec<&str> = k.iter().map(String::as_str).collect();
        assert_eq!(v, ["1700s", "baroque", "harpsichord", "in", "music"]);
        assert!(keywords_from_name("  --  ").is_empty());
    }

    #[test]
    fn affine_transform_of_means() {
        let mut l = Ledger::new(2);
        l.record_value(0, 10.0).unwrap();
        l.record_value(0, 20.0).unwrap();
        let t = l.affine(2.0, 5.0);
        assert_eq!(t.mean_unchecked(0), Some(35.0));
        assert_eq!(t.mean_unchecked(1), None);
    }
}
