//! Policies that decide which topic(s) to pull next.
//!
//! A chooser sees an [`ArmView`]: the ledger, the per-topic cap, and a mask of
//! topics the run has blocked (exhausted replay topics). A topic is eligible
//! when it is not blocked and its pull count is below the cap. Every chooser
//! returns distinct, eligible ids, or an empty batch when nothing is eligible.

mod basic;
mod contextual;
mod index;

pub use basic::{
    brute_choose, epsilon_greedy_choose, greedy_choose, subset_greedy_choose, BruteChooser, EpsilonGreedyChooser,
    GreedyChooser, SubsetGreedyChooser,
};
pub use contextual::{contextual_choose, contextual_score, jaccard, ContextualChooser, SimilarityIndex};
pub use index::ArmIndex;

use crate::ledger::{Ledger, TopicId, TopicMeta};
use crate::rng::RunRng;
use crate::select::{argmax, sample_distinct};
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Maximum pulls per topic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Cap {
    Bounded(u32),
    #[default]
    Unbounded,
}

impl Cap {
    #[inline]
    pub fn allows(self, count: u32) -> bool {
        match self {
            Cap::Bounded(c) => count < c,
            Cap::Unbounded => true,
        }
    }

    pub fn bound(self) -> Option<u32> {
        match self {
            Cap::Bounded(c) => Some(c),
            Cap::Unbounded => None,
        }
    }
}

impl std::fmt::Display for Cap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cap::Bounded(c) => write!(f, "{c}"),
            Cap::Unbounded => f.write_str("unbounded"),
        }
    }
}

// Serialized as an integer, or the string "unbounded" / null for no cap.
impl Serialize for Cap {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Cap::Bounded(c) => s.serialize_u32(*c),
            Cap::Unbounded => s.serialize_str("unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for Cap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u32),
            Text(String),
            Null(()),
        }
        match Raw::deserialize(d)? {
            Raw::Int(c) => Ok(Cap::Bounded(c)),
            Raw::Text(t) if matches!(t.as_str(), "unbounded" | "inf" | "infinity") => Ok(Cap::Unbounded),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("invalid cap {t:?}"))),
            Raw::Null(_) => Ok(Cap::Unbounded),
        }
    }
}

/// Which policy to run, with the parameters only that policy needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategyKind {
    Brute,
    Greedy,
    EpsilonGreedy {
        epsilon: f64,
    },
    SubsetGreedy {
        rho: f64,
    },
    Contextual {
        #[serde(default = "default_temperature")]
        softmax_temperature: f64,
    },
}

fn default_temperature() -> f64 {
    1.0
}

fn default_batch() -> usize {
    1
}

impl StrategyKind {
    pub fn label(&self) -> &'static str {
        match self {
            StrategyKind::Brute => "brute",
            StrategyKind::Greedy => "greedy",
            StrategyKind::EpsilonGreedy { .. } => "epsilon_greedy",
            StrategyKind::SubsetGreedy { .. } => "subset_greedy",
            StrategyKind::Contextual { .. } => "contextual",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    /// Display name; defaults to the kind label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub kind: StrategyKind,
    pub cap: Cap,
    #[serde(default = "default_batch")]
    pub batch: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum StrategyError {
    #[error("epsilon must lie in [0, 1], got {0}")]
    Epsilon(f64),
    #[error("rho must lie in (0, 1], got {0}")]
    Rho(f64),
    #[error("softmax temperature must be positive, got {0}")]
    Temperature(f64),
    #[error("cap must be at least 1")]
    ZeroCap,
    #[error("batch size must lie in [1, {topics}], got {batch}")]
    Batch { batch: usize, topics: usize },
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind, cap: Cap) -> Self {
        Self {
            name: None,
            kind,
            cap,
            batch: 1,
        }
    }

    pub fn brute(cap: Cap) -> Self {
        Self::new(StrategyKind::Brute, cap)
    }

    pub fn greedy(cap: Cap) -> Self {
        Self::new(StrategyKind::Greedy, cap)
    }

    pub fn epsilon_greedy(epsilon: f64, cap: Cap) -> Self {
        Self::new(StrategyKind::EpsilonGreedy { epsilon }, cap)
    }

    pub fn subset_greedy(rho: f64, cap: Cap) -> Self {
        Self::new(StrategyKind::SubsetGreedy { rho }, cap)
    }

    pub fn contextual(softmax_temperature: f64, cap: Cap) -> Self {
        Self::new(StrategyKind::Contextual { softmax_temperature }, cap)
    }

    pub fn with_batch(mut self, batch: usize) -> Self {
        self.batch = batch;
        self
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.label().to_string())
    }

    pub fn validate(&self, n_topics: usize) -> Result<(), StrategyError> {
        if self.cap == Cap::Bounded(0) {
            return Err(StrategyError::ZeroCap);
        }
        if self.batch == 0 || self.batch > n_topics {
            return Err(StrategyError::Batch {
                batch: self.batch,
                topics: n_topics,
            });
        }
        match self.kind {
            StrategyKind::EpsilonGreedy { epsilon } if !(0.0..=1.0).contains(&epsilon) => {
                Err(StrategyError::Epsilon(epsilon))
            }
            StrategyKind::SubsetGreedy { rho } if !(rho > 0.0 && rho <= 1.0) => Err(StrategyError::Rho(rho)),
            StrategyKind::Contextual { softmax_temperature } if !(softmax_temperature > 0.0) => {
                Err(StrategyError::Temperature(softmax_temperature))
            }
            _ => Ok(()),
        }
    }

    /// Builds the per-run chooser. Subset draws use `setup_rng` so they never
    /// perturb the decision stream.
    pub fn build(&self, topics: &[TopicMeta], setup_rng: &mut RunRng) -> Result<Box<dyn Chooser>, StrategyError> {
        self.validate(topics.len())?;
        Ok(match self.kind {
            StrategyKind::Brute => Box::new(BruteChooser),
            StrategyKind::Greedy => Box::new(GreedyChooser),
            StrategyKind::EpsilonGreedy { epsilon } => Box::new(EpsilonGreedyChooser { epsilon }),
            StrategyKind::SubsetGreedy { rho } => Box::new(SubsetGreedyChooser::new(topics.len(), rho, setup_rng)),
            StrategyKind::Contextual { softmax_temperature } => Box::new(ContextualChooser::new(
                SimilarityIndex::build(topics),
                softmax_temperature,
            )),
        })
    }
}

/// What a chooser is allowed to look at.
#[derive(Clone, Copy)]
pub struct ArmView<'a> {
    pub ledger: &'a Ledger,
    pub cap: Cap,
    /// `true` for topics the run can no longer draw from.
    pub blocked: &'a [bool],
    index: Option<&'a ArmIndex>,
}

impl<'a> ArmView<'a> {
    pub fn new(ledger: &'a Ledger, cap: Cap, blocked: &'a [bool]) -> Self {
        debug_assert_eq!(ledger.n_topics(), blocked.len());
        Self {
            ledger,
            cap,
            blocked,
            index: None,
        }
    }

    /// A view backed by an index the caller keeps in step with `ledger`,
    /// `cap` and `blocked`.
    pub fn with_index(ledger: &'a Ledger, cap: Cap, blocked: &'a [bool], index: &'a ArmIndex) -> Self {
        Self {
            index: Some(index),
            ..Self::new(ledger, cap, blocked)
        }
    }

    pub fn n_topics(&self) -> usize {
        self.ledger.n_topics()
    }

    #[inline]
    pub fn eligible(&self, t: TopicId) -> bool {
        !self.blocked[t] && self.cap.allows(self.ledger.count(t))
    }

    /// Eligible topics with no pulls yet, ascending.
    pub fn unsampled(&self) -> Vec<TopicId> {
        match self.index {
            Some(ix) => ix.unsampled_ids(),
            None => (0..self.n_topics())
                .filter(|&t| !self.ledger.is_sampled(t) && self.eligible(t))
                .collect(),
        }
    }

    pub fn unsampled_count(&self) -> usize {
        match self.index {
            Some(ix) => ix.unsampled_len(),
            None => (0..self.n_topics())
                .filter(|&t| !self.ledger.is_sampled(t) && self.eligible(t))
                .count(),
        }
    }

    pub fn has_unsampled(&self) -> bool {
        match self.index {
            Some(ix) => ix.unsampled_len() > 0,
            None => (0..self.n_topics()).any(|t| !self.ledger.is_sampled(t) && self.eligible(t)),
        }
    }

    /// `(id, empirical mean)` for sampled, eligible topics, ascending by id.
    pub fn exploit_candidates(&self) -> impl Iterator<Item = (TopicId, f64)> + Clone + '_ {
        (0..self.n_topics()).filter_map(move |t| {
            if self.eligible(t) {
                self.ledger.mean_unchecked(t).map(|m| (t, m))
            } else {
                None
            }
        })
    }

    pub fn eligible_ids(&self) -> Vec<TopicId> {
        match self.index {
            Some(ix) => ix.eligible_ids(),
            None => (0..self.n_topics()).filter(|&t| self.eligible(t)).collect(),
        }
    }

    /// Same as `sample_distinct(self.unsampled(), 1, rng)`.
    pub fn pick_unsampled(&self, rng: &mut RunRng) -> Option<TopicId> {
        match self.index {
            Some(ix) => match ix.unsampled_len() {
                0 => None,
                len => ix.unsampled_nth(rng.random_range(0..len)),
            },
            None => sample_distinct(self.unsampled(), 1, rng).pop(),
        }
    }

    /// Same as `sample_distinct(self.eligible_ids(), 1, rng)`.
    pub fn pick_eligible(&self, rng: &mut RunRng) -> Option<TopicId> {
        match self.index {
            Some(ix) => match ix.eligible_len() {
                0 => None,
                len => ix.eligible_nth(rng.random_range(0..len)),
            },
            None => sample_distinct(self.eligible_ids(), 1, rng).pop(),
        }
    }

    /// Same as `argmax(self.exploit_candidates(), rng)`.
    pub fn pick_best(&self, rng: &mut RunRng) -> Option<TopicId> {
        match self.index {
            Some(ix) => {
                let (_, ties) = ix.best()?;
                let k = if ties > 1 { rng.random_range(0..ties) } else { 0 };
                ix.best_nth(k)
            }
            None => argmax(self.exploit_candidates(), rng),
        }
    }
}

/// A ChooseToSample policy. `choose_batch` returns up to `b` distinct eligible
/// ids; an empty result means no topic is eligible and the run ends.
pub trait Chooser: Send {
    fn choose_batch(&mut self, view: &ArmView<'_>, b: usize, rng: &mut RunRng) -> Vec<TopicId>;

    fn choose(&mut self, view: &ArmView<'_>, rng: &mut RunRng) -> Option<TopicId> {
        self.choose_batch(view, 1, rng).into_iter().next()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cap_serde_forms() {
        let c: Cap = serde_json::from_str("25").unwrap();
        assert_eq!(c, Cap::Bounded(25));
        let c: Cap = serde_json::from_str("\"unbounded\"").unwrap();
        assert_eq!(c, Cap::Unbounded);
        let c: Cap = serde_json::from_str("null").unwrap();
        assert_eq!(c, Cap::Unbounded);
        assert!(serde_json::from_str::<Cap>("\"lots\"").is_err());
        assert_eq!(serde_json::to_string(&Cap::Bounded(3)).unwrap(), "3");
    }

    #[test]
    fn strategy_config_parses_kind_parameters() {
        let s: StrategyConfig = serde_json::from_str(r#"{"kind":"epsilon_greedy","epsilon":0.7,"cap":25}"#).unwrap();
        assert_eq!(s.kind, StrategyKind::EpsilonGreedy { epsilon: 0.7 });
        assert_eq!(s.batch, 1);
        assert_eq!(s.display_name(), "epsilon_greedy");
        assert!(serde_json::from_str::<StrategyConfig>(r#"{"kind":"epsilon_greedy","cap":25}"#).is_err());
        let s: StrategyConfig = serde_json::from_str(r#"{"kind":"contextual","cap":null}"#).unwrap();
        assert_eq!(
            s.kind,
            StrategyKind::Contextual {
                softmax_temperature: 1.0
            }
        );
    }

    #[test]
    fn validation() {
        assert!(StrategyConfig::epsilon_greedy(1.5, Cap::Bounded(2))
            .validate(3)
            .is_err());
        assert!(StrategyConfig::subset_greedy(0.0, Cap::Bounded(2)).validate(3).is_err());
        assert!(StrategyConfig::greedy(Cap::Bounded(0)).validate(3).is_err());
        assert!(StrategyConfig::greedy(Cap::Bounded(1))
            .with_batch(4)
            .validate(3)
            .is_err());
        assert!(StrategyConfig::contextual(0.0, Cap::Unbounded).validate(3).is_err());
        assert!(StrategyConfig::greedy(Cap::Unbounded).with_batch(3).validate(3).is_ok());
    }
}
