//! Sources of difficulty observations.
//!
//! A [`World`] is immutable and can be shared by concurrent runs. Each run
//! asks it for a [`Sampler`], which owns any per-run draw state (replay
//! without-replacement bookkeeping, the external adapter process).

mod external;
mod gmm;
mod replay;
mod synthetic;

pub use external::{external_draw, AdapterConfig, ExternalSampler, ExternalWorld};
pub use gmm::{fit_gmm, FitOptions, GmmComponent, GmmFit, GmmParams};
pub use replay::{estimate_sigma2, write_replay, ReplayManifest, ReplayRecord, ReplaySampler, ReplayWorld};
pub use synthetic::{default_gmm, SyntheticWorld, SyntheticWorldConfig, DEFAULT_SIGMA2};

use crate::ledger::{TopicId, TopicMeta};
use crate::rng::RunRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldKind {
    Synthetic,
    Replay,
    External,
}

pub trait World: Send + Sync {
    fn topics(&self) -> &[TopicMeta];
    fn kind(&self) -> WorldKind;
    /// Expected difficulty per topic, when the world knows it.
    fn true_means(&self) -> Option<&[f64]>;
    fn sampler(&self) -> Result<Box<dyn Sampler + '_>, SamplerError>;

    fn n_topics(&self) -> usize {
        self.topics().len()
    }
}

/// Per-run draw state.
pub trait Sampler {
    /// One draw per listed topic, in order. Topics in a batch are distinct.
    fn draw_batch(&mut self, topics: &[TopicId], rng: &mut RunRng) -> Vec<Result<f64, DrawError>>;
}

/// Why a single pull produced no observation.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum DrawError {
    #[error("topic {0} has no undrawn records left")]
    Exhausted(TopicId),
    #[error("adapter did not answer within {0:?}")]
    Timeout(std::time::Duration),
    #[error("malformed adapter response: {0}")]
    Malformed(String),
    #[error("adapter reported difficulty {0} outside [0, 100]")]
    OutOfRange(f64),
    #[error("adapter unavailable: {0}")]
    Adapter(String),
}

impl DrawError {
    /// Exhaustion retires a topic; every other failure is transient.
    pub fn is_exhaustion(&self) -> bool {
        matches!(self, DrawError::Exhausted(_))
    }
}

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid world config: {0}")]
    Config(String),
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}:{line}: stored difficulty {stored} differs from recomputed {recomputed}")]
    Integrity {
        path: String,
        line: usize,
        stored: f64,
        recomputed: f64,
    },
    #[error("manifest mismatch: {0}")]
    Manifest(String),
    #[error("no topic has at least two records")]
    Estimation,
    #[error("mixture fit failed: {0}")]
    Fit(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl SamplerError {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        SamplerError::Io {
            context: context.into(),
            source,
        }
    }
}
