//! Budget-constrained search for the most difficult topics in a large pool of
//! stochastic sources.
//!
//! Every topic is an arm: pulling it costs one unit of budget and yields one
//! difficulty observation in `[0, 100]`. A run spends a fixed budget through a
//! [`strategies::Chooser`] and then names the `k` topics with the highest
//! empirical mean difficulty. Worlds ([`samplers`]) supply the observations and,
//! when known, the true topic means used for oracle evaluation
//! ([`evaluation`]).
//!
//! Module map:
//! - [`ledger`]: per-topic draw statistics and the arm metadata.
//! - [`engine`]: the generic bandit loop and top-k selection.
//! - [`samplers`]: synthetic mixture worlds, replayed datasets, external adapters,
//!   and the mixture fitter.
//! - [`strategies`]: brute, greedy, epsilon-greedy, subset-greedy and contextual
//!   choosers, with batching.
//! - [`evaluation`]: regret, scaling study, cost model, subset ranking utility and
//!   cross-dimension rank overlap.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod evaluation;
pub mod format;
pub mod ledger;
pub mod rng;
pub mod samplers;
pub mod select;
pub mod strategies;

pub use engine::{run_bandit, select_topk, BudgetConfig, Checkpoint, RunError, RunResult, StopReason};
pub use ledger::{Ledger, LedgerError, Observation, TopicId, TopicMeta};
pub use samplers::{World, WorldKind};
pub use strategies::{Cap, StrategyConfig, StrategyKind};
