//! Synthetic topics: means drawn from a mixture, Normal noise around each mean.

use super::{DrawError, GmmParams, Sampler, SamplerError, World, WorldKind};
use crate::ledger::{TopicId, TopicMeta};
use crate::rng::RunRng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

/// Within-topic variance used when none is configured.
pub const DEFAULT_SIGMA2: f64 = 16.0;

/// Artifact default for the topic-mean mixture: most topics easy, a thin tail
/// of hard ones. Not fitted to any real dataset.
pub fn default_gmm() -> GmmParams {
    GmmParams::from_triples(&[(0.6, 8.0, 9.0), (0.3, 14.0, 16.0), (0.1, 22.0, 36.0)]).expect("default mixture is valid")
}

fn default_clamp() -> [f64; 2] {
    [0.0, 100.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorldConfig {
    pub n_topics: usize,
    #[serde(default = "default_gmm")]
    pub gmm: GmmParams,
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    #[serde(default = "default_clamp")]
    pub clamp: [f64; 2],
    /// Keyword clusters; `None` gives every topic its own cluster.
    #[serde(default)]
    pub clusters: Option<usize>,
    /// Std-dev of a topic mean around its cluster mean.
    #[serde(default)]
    pub cluster_mu_spread: f64,
    #[serde(default)]
    pub tokens_shared: usize,
    #[serde(default = "default_tokens_unique")]
    pub tokens_unique: usize,
}

fn default_sigma2() -> f64 {
    DEFAULT_SIGMA2
}

fn default_tokens_unique() -> usize {
    1
}

impl SyntheticWorldConfig {
    /// Independent topic means straight from the default mixture.
    pub fn new(n_topics: usize) -> Self {
        Self {
            n_topics,
            gmm: default_gmm(),
            sigma2: DEFAULT_SIGMA2,
            clamp: default_clamp(),
            clusters: None,
            cluster_mu_spread: 0.0,
            tokens_shared: 0,
            tokens_unique: 1,
        }
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.unwrap_or(self.n_topics)
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.n_topics == 0 {
            return Err(SamplerError::Config("n_topics must be at least 1".into()));
        }
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(SamplerError::Config(format!(
                "sigma2 must be positive, got {}",
                self.sigma2
            )));
        }
        if !(self.clamp[0] < self.clamp[1]) {
            return Err(SamplerError::Config(format!(
                "clamp bounds {:?} are not increasing",
                self.clamp
            )));
        }
        if self.cluster_count() == 0 {
            return Err(SamplerError::Config("clusters must be at least 1".into()));
        }
        if !(self.cluster_mu_spread >= 0.0) {
            return Err(SamplerError::Config("cluster_mu_spread must be non-negative".into()));
        }
        self.gmm.validate()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    config: SyntheticWorldConfig,
    topics: Vec<TopicMeta>,
    means: Vec<f64>,
    noise: Normal<f64>,
}

impl SyntheticWorld {
    /// Draws one mean per cluster from the mixture; topic `i` joins cluster
    /// `i mod clusters` and perturbs that mean by `Normal(0, spread²)`.
    pub fn generate(config: SyntheticWorldConfig, seed: u64) -> Result<Self, SamplerError> {
        config.validate()?;
        let mut rng = RunRng::seed_from_u64(seed);
        let clusters = config.cluster_count();
        let cluster_means: Vec<f64> = (0..clusters).map(|_| config.gmm.sample(&mut rng)).collect();
        let mut means = Vec::with_capacity(config.n_topics);
        let mut topics = Vec::with_capacity(config.n_topics);
        for i in 0..config.n_topics {
            let c = i % clusters;
            let mut mu = cluster_means[c];
            if config.cluster_mu_spread > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                mu += config.cluster_mu_spread * z;
            }
            means.push(mu);
            let mut meta = TopicMeta::new(i, format!("topic-{i}"));
            meta.keywords
                .extend((0..config.tokens_shared).map(|j| format!("c{c}k{j}")));
            meta.keywords
                .extend((0..config.tokens_unique).map(|j| format!("t{i}u{j}")));
            topics.push(meta);
        }
        let noise = Normal::new(0.0, config.sigma2.sqrt()).map_err(|e| SamplerError::Config(e.to_string()))?;
        Ok(Self {
            config,
            topics,
            means,
            noise,
        })
    }

    /// A world with the given means (pre-clamp) and default everything else.
    pub fn from_means(means: Vec<f64>, sigma2: f64, clamp: [f64; 2]) -> Result<Self, SamplerError> {
        let config = SyntheticWorldConfig {
            n_topics: means.len(),
            sigma2,
            clamp,
            ..SyntheticWorldConfig::new(means.len())
        };
        config.validate()?;
        let topics = (0..means.len())
            .map(|i| TopicMeta::new(i, format!("topic-{i}")))
            .collect();
        let noise = Normal::new(0.0, sigma2.sqrt()).map_err(|e| SamplerError::Config(e.to_string()))?;
        Ok(Self {
            config,
            topics,
            means,
            noise,
        })
    }

    pub fn config(&self) -> &SyntheticWorldConfig {
        &self.config
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    /// `Normal(mu_t, sigma2)` clamped to the configured bounds.
    pub fn draw(&self, topic: TopicId, rng: &mut RunRng) -> f64 {
        let [lo, hi] = self.config.clamp;
        (self.means[topic] + self.noise.sample(rng)).clamp(lo, hi)
    }
}

impl World for SyntheticWorld {
    fn topics(&self) -> &[TopicMeta] {
        &self.topics
    }

    fn kind(&self) -> WorldKind {
        WorldKind::Synthetic
    }

    fn true_means(&self) -> Option<&[f64]> {
        Some(&self.means)
    }

    fn sampler(&self) -> Result<Box<dyn Sampler + '_>, SamplerError> {
        Ok(Box::new(SyntheticSampler { world: self }))
    }
}

struct SyntheticSampler<'a> {
    world: &'a SyntheticWorld,
}

impl Sampler for SyntheticSampler<'_> {
    fn draw_batch(&mut self, topics: &[TopicId], rng: &mut RunRng) -> Vec<Result<f64, DrawError>> {
        topics.iter().map(|&t| Ok(self.world.draw(t, rng))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategies::jaccard;

    #[test]
    fn defaults_are_valid() {
        assert!(default_gmm().validate().is_ok());
        assert!(SyntheticWorldConfig::new(5).validate().is_ok());
    }

    #[test]
    fn config_validation() {
        let mut c = SyntheticWorldConfig::new(0);
        assert!(c.validate().is_err());
        c.n_topics = 3;
        c.sigma2 = 0.0;
        assert!(c.validate().is_err());
        c.sigma2 = 1.0;
        c.clamp = [5.0, 5.0];
        assert!(c.validate().is_err());
        c.clamp = [0.0, 100.0];
        c.clusters = Some(0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn generation_is_seeded() {
        let a = SyntheticWorld::generate(SyntheticWorldConfig::new(50), 3).unwrap();
        let b = SyntheticWorld::generate(SyntheticWorldConfig::new(50), 3).unwrap();
        let c = SyntheticWorld::generate(SyntheticWorldConfig::new(50), 4).unwrap();
        assert_eq!(a.means(), b.means());
        assert_ne!(a.means(), c.means());
    }

    #[test]
    fn degenerate_variance_returns_mean() {
        let w = SyntheticWorld::from_means(vec![37.5], 1e-12, [0.0, 100.0]).unwrap();
        let mut rng = RunRng::seed_from_u64(1);
        for _ in 0..100 {
            assert!((w.draw(0, &mut rng) - 37.5).abs() < 1e-4);
        }
    }

    #[test]
    fn clamp_lower_bound() {
        let w = SyntheticWorld::from_means(vec![-10.0], 25.0, [0.0, 100.0]).unwrap();
        let mut rng = RunRng::seed_from_u64(2);
        assert!((0..10_000).all(|_| w.draw(0, &mut rng) >= 0.0));
    }

    #[test]
    fn draw_moments() {
        let w = SyntheticWorld::from_means(vec![25.0], 25.0, [0.0, 100.0]).unwrap();
        let mut rng = RunRng::seed_from_u64(8);
        let xs: Vec<f64> = (0..50_000).map(|_| w.draw(0, &mut rng)).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((m - 25.0).abs() < 0.1, "{m}");
        assert!((v - 25.0).abs() < 1.0, "{v}");
    }

    #[test]
    fn cluster_keywords() {
        let cfg = SyntheticWorldConfig {
            clusters: Some(3),
            cluster_mu_spread: 1.0,
            tokens_shared: 4,
            tokens_unique: 2,
            ..SyntheticWorldConfig::new(9)
        };
        let w = SyntheticWorld::generate(cfg, 1).unwrap();
        let t = w.topics();
        let shared = t[0].keywords.intersection(&t[3].keywords).count();
        assert_eq!(shared, 4);
        assert!(jaccard(&t[0].keywords, &t[3].keywords) > 0.0);
        assert_eq!(jaccard(&t[0].keywords, &t[1].keywords), 0.0);
        assert_eq!(t[0].keywords.len(), 6);
    }

    #[test]
    fn independent_means_when_clusters_equal_topics() {
        let cfg = SyntheticWorldConfig::new(1000);
        let w = SyntheticWorld::generate(cfg.clone(), 9).unwrap();
        let mut rng = RunRng::seed_from_u64(9);
        let direct: Vec<f64> = (0..1000).map(|_| cfg.gmm.sample(&mut rng)).collect();
        assert_eq!(w.means(), &direct[..]);
    }
}
