//! How the oracle top-k grows with the size of the topic pool.

use super::EvalError;
use crate::format::ser_sig9;
use crate::rng::{rep_seed, RunRng};
use crate::samplers::GmmParams;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

/// 97.5% standard normal quantile.
const Z_975: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub n_topics: usize,
    #[serde(serialize_with = "ser_sig9")]
    pub expected_topk_difficulty: f64,
    #[serde(serialize_with = "ser_sig9")]
    pub ci_halfwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCurve {
    pub k: usize,
    pub reps: usize,
    pub points: Vec<ScalingPoint>,
}

impl ScalingCurve {
    /// `n_topics,mean,ci` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n_topics,mean,ci\n");
        for p in &self.points {
            s.push_str(&format!(
                "{},{},{}\n",
                p.n_topics,
                crate::format::fmt9(p.expected_topk_difficulty),
                crate::format::fmt9(p.ci_halfwidth)
            ));
        }
        s
    }
}

/// `n` topic means drawn independently from the mixture.
pub fn sample_topic_means(gmm: &GmmParams, n: usize, rng: &mut RunRng) -> Vec<f64> {
    (0..n).map(|_| gmm.sample(rng)).collect()
}

fn topk_mean(values: &mut [f64], k: usize) -> f64 {
    values.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    let top = &mut values[..k];
    top.sort_by(|a, b| b.total_cmp(a));
    top.iter().sum::<f64>() / k as f64
}

/// For each pool size, the mean (over `reps` fresh synthetic pools) of the
/// oracle top-k difficulty, with a normal-approximation 95% half-width.
///
/// `sigma2` only describes the worlds being generated; the oracle depends on
/// the topic means alone.
pub fn scaling_study(
    gmm: &GmmParams,
    sigma2: f64,
    sizes: &[usize],
    k: usize,
    reps: usize,
    seed: u64,
) -> Result<ScalingCurve, EvalError> {
    gmm.validate().map_err(|e| EvalError::Config(e.to_string()))?;
    if !(sigma2 > 0.0) {
        return Err(EvalError::Config(format!("sigma2 must be positive, got {sigma2}")));
    }
    if k == 0 || reps == 0 {
        return Err(EvalError::Config("k and reps must be at least 1".into()));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::Config("sizes must be strictly increasing".into()));
    }
    let mut points = Vec::with_capacity(sizes.len());
    for &n in sizes {
        if n < k {
            return Err(EvalError::Config(format!("size {n} is smaller than k = {k}")));
        }
        let label = format!("scaling/{n}");
        let values: Vec<f64> = (0..reps)
            .map(|rep| {
                let mut rng = RunRng::seed_from_u64(rep_seed(seed, &label, rep as u64));
                let mut means = sample_topic_means(gmm, n, &mut rng);
                topk_mean(&mut means, k)
            })
            .collect();
        let mean = values.iter().sum::<f64>() / reps as f64;
        let ci = if reps > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
            Z_975 * (var / reps as f64).sqrt()
        } else {
            0.0
        };
        points.push(ScalingPoint {
            n_topics: n,
            expected_topk_difficulty: mean,
            ci_halfwidth: ci,
        });
    }
    Ok(ScalingCurve { k, reps, points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_mass_gives_its_location() {
        let g = GmmParams::from_triples(&[(1.0, 12.5, 1e-12)]).unwrap();
        let c = scaling_study(&g, 1.0, &[3], 3, 4, 1).unwrap();
        assert!((c.points[0].expected_topk_difficulty - 12.5).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_sizes() {
        let g = GmmParams::from_triples(&[(1.0, 0.0, 1.0)]).unwrap();
        assert!(scaling_study(&g, 1.0, &[5], 10, 2, 0).is_err());
        assert!(scaling_study(&g, 1.0, &[50, 20], 1, 2, 0).is_err());
        assert!(scaling_study(&g, 0.0, &[50], 1, 2, 0).is_err());
    }

    #[test]
    fn monotone_and_reproducible() {
        let g = crate::samplers::default_gmm();
        let a = scaling_study(&g, 16.0, &[10, 100, 1000], 1, 30, 5).unwrap();
        let b = scaling_study(&g, 16.0, &[10, 100, 1000], 1, 30, 5).unwrap();
        assert_eq!(a, b);
        for w in a.points.windows(2) {
            let slack = 2.0 * (w[0].ci_halfwidth + w[1].ci_halfwidth);
            assert!(w[1].expected_topk_difficulty + slack >= w[0].expected_topk_difficulty);
        }
        assert_eq!(a.to_csv().lines().count(), 4);
    }
}
