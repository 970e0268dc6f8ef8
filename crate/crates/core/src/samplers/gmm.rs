//! One-dimensional Gaussian mixtures and their EM fit.

use super::SamplerError;
use crate::rng::{derive_seed, RunRng};
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// A component whose variance falls below this has collapsed onto a point.
const MIN_VARIANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub components: Vec<GmmComponent>,
}

impl GmmParams {
    pub fn new(components: Vec<GmmComponent>) -> Result<Self, SamplerError> {
        let p = Self { components };
        p.validate()?;
        Ok(p)
    }

    /// Builds from `(weight, mean, variance)` triples.
    pub fn from_triples(triples: &[(f64, f64, f64)]) -> Result<Self, SamplerError> {
        Self::new(
            triples
                .iter()
                .map(|&(weight, mean, variance)| GmmComponent { weight, mean, variance })
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.components.is_empty() {
            return Err(SamplerError::Config("mixture has no components".into()));
        }
        let mut total = 0.0;
        for c in &self.components {
            if !(c.weight > 0.0) || !c.mean.is_finite() {
                return Err(SamplerError::Config(format!("invalid component {c:?}")));
            }
            if !(c.variance > 0.0) || !c.variance.is_finite() {
                return Err(SamplerError::Config(format!(
                    "component variance must be positive: {c:?}"
                )));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(SamplerError::Config(format!("weights sum to {total}, expected 1")));
        }
        Ok(())
    }

    pub fn mixture_mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        let terms: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.weight.ln() + normal_log_pdf(x, c.mean, c.variance))
            .collect();
        log_sum_exp(&terms)
    }

    pub fn log_likelihood(&self, values: &[f64]) -> f64 {
        values.iter().map(|&x| self.log_pdf(x)).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.components.last().expect("validated mixture");
        for c in &self.components {
            acc += c.weight;
            if u < acc {
                chosen = c;
                break;
            }
        }
        Normal::new(chosen.mean, chosen.variance.sqrt())
            .expect("validated variance")
            .sample(rng)
    }
}

fn normal_log_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + variance.ln() + d * d / variance)
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub n_components: usize,
    /// Relative log-likelihood change that counts as converged.
    pub tol: f64,
    pub max_iter: usize,
    pub n_restarts: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_components: 3,
            tol: 1e-7,
            max_iter: 500,
            n_restarts: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    /// Best restart, components sorted by mean.
    pub params: GmmParams,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood after every iteration, one trace per completed restart.
    pub traces: Vec<Vec<f64>>,
    pub degenerate_restarts: usize,
}

/// Fits a mixture by EM with k-means++ seeding and restarts.
///
/// Values are sorted before fitting and the restart seeds are hashed from the
/// sorted data, so a permuted input gives the identical fit. Restarts that
/// collapse a component are re-seeded; at most `4 * n_restarts` attempts are
/// made before giving up.
pub fn fit_gmm(values: &[f64], opts: &FitOptions) -> Result<GmmFit, SamplerError> {
    let k = opts.n_components;
    if k == 0 || opts.n_restarts == 0 {
        return Err(SamplerError::Fit("need at least one component and one restart".into()));
    }
    if values.len() < k {
        return Err(SamplerError::Fit(format!("{} values for {k} components", values.len())));
    }
    if values.iter().any(|x| !x.is_finite()) {
        return Err(SamplerError::Fit("values must be finite".into()));
    }
    let mut data = values.to_vec();
    data.sort_by(f64::total_cmp);

    let bytes: Vec<u8> = data.iter().flat_map(|x| x.to_le_bytes()).collect();
    let seed = derive_seed(&[b"fit_gmm", &(k as u64).to_le_bytes(), &bytes]);
    let mut rng = RunRng::seed_from_u64(seed);

    let mut best: Option<(GmmParams, f64, usize, bool)> = None;
    let mut traces = Vec::new();
    let mut degenerate = 0;
    let mut attempts = 0;
    while traces.len() < opts.n_restarts && attempts < 4 * opts.n_restarts {
        attempts += 1;
        let init = kmeans_pp_init(&data, k, &mut rng);
        match run_em(&data, init, opts) {
            Some(em) => {
                if best.as_ref().is_none_or(|b| em.log_likelihood > b.1) {
                    best = Some((em.params, em.log_likelihood, em.trace.len(), em.converged));
                }
                traces.push(em.trace);
            }
            None => degenerate += 1,
        }
    }
    let (mut params, log_likelihood, iterations, converged) =
        best.ok_or_else(|| SamplerError::Fit(format!("all {attempts} restarts degenerated")))?;
    params.components.sort_by(|a, b| a.mean.total_cmp(&b.mean));
    Ok(GmmFit {
        params,
        log_likelihood,
        iterations,
        converged,
        traces,
        degenerate_restarts: degenerate,
    })
}

fn kmeans_pp_init(data: &[f64], k: usize, rng: &mut RunRng) -> GmmParams {
    let n = data.len();
    let mut centers = vec![data[rng.random_range(0..n)]];
    let mut d2: Vec<f64> = data.iter().map(|x| (x - centers[0]).powi(2)).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if u < *w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            data[idx]
        } else {
            data[rng.random_range(0..n)]
        };
        centers.push(next);
        for (d, x) in d2.iter_mut().zip(data) {
            *d = d.min((x - next).powi(2));
        }
    }

    let mean = data.iter().sum::<f64>() / n as f64;
    let total_var = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let floor = (total_var / (k * k) as f64).max(1e-6);
    let mut sums = vec![(0usize, 0.0f64, 0.0f64); k];
    for &x in data {
        let j = (0..k)
            .min_by(|&a, &b| (x - centers[a]).abs().total_cmp(&(x - centers[b]).abs()))
            .unwrap_or(0);
        sums[j].0 += 1;
        sums[j].1 += x;
        sums[j].2 += x * x;
    }
    let components = sums
        .iter()
        .zip(&centers)
        .map(|(&(c, s, q), &center)| {
            if c == 0 {
                GmmComponent {
                    weight: 1.0 / n as f64,
                    mean: center,
                    variance: floor,
                }
            } else {
                let m = s / c as f64;
                GmmComponent {
                    weight: c as f64 / n as f64,
                    mean: m,
                    variance: (q / c as f64 - m * m).max(floor),
                }
            }
        })
        .collect::<Vec<_>>();
    let total: f64 = components.iter().map(|c| c.weight).sum();
    GmmParams {
        components: components
            .into_iter()
            .map(|c| GmmComponent {
                weight: c.weight / total,
                ..c
            })
            .collect(),
    }
}

struct EmRun {
    params: GmmParams,
    log_likelihood: f64,
    trace: Vec<f64>,
    converged: bool,
}

/// Plain EM from `init`; `None` if a component degenerates.
fn run_em(data: &[f64], mut params: GmmParams, opts: &FitOptions) -> Option<EmRun> {
    let n = data.len();
    let k = params.components.len();
    let mut resp = vec![0.0; n * k];
    let mut trace = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    let mut converged = false;
    let mut logp = vec![0.0; k];
    for _ in 0..opts.max_iter {
        // E step; the log-likelihood is that of the parameters entering this step
        let mut ll = 0.0;
        for (i, &x) in data.iter().enumerate() {
            for (j, c) in params.components.iter().enumerate() {
                logp[j] = c.weight.ln() + normal_log_pdf(x, c.mean, c.variance);
            }
            let lse = log_sum_exp(&logp);
            ll += lse;
            for j in 0..k {
                resp[i * k + j] = (logp[j] - lse).exp();
            }
        }
        if !ll.is_finite() {
            return None;
        }
        trace.push(ll);
        if prev.is_finite() && (ll - prev).abs() <= opts.tol * prev.abs() {
            converged = true;
            break;
        }
        prev = ll;

        // M step
        let mut next = Vec::with_capacity(k);
        for j in 0..k {
            let mut nk = 0.0;
            let mut s = 0.0;
            for (i, &x) in data.iter().enumerate() {
                let r = resp[i * k + j];
                nk += r;
                s += r * x;
            }
            if nk <= 0.0 {
                return None;
            }
            let mean = s / nk;
            let var = data
                .iter()
                .enumerate()
                .map(|(i, &x)| resp[i * k + j] * (x - mean).powi(2))
                .sum::<f64>()
                / nk;
            if !(var >= MIN_VARIANCE) {
                return None;
            }
            next.push(GmmComponent {
                weight: nk / n as f64,
                mean,
                variance: var,
            });
        }
        params = GmmParams { components: next };
    }
    if !converged {
        trace.push(params.log_likelihood(data));
    }
    let log_likelihood = *trace.last()?;
    Some(EmRun {
        params,
        log_likelihood,
        trace,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planted() -> GmmParams {
        GmmParams::from_triples(&[(0.3, 5.0, 4.0), (0.5, 12.0, 9.0), (0.2, 25.0, 16.0)]).unwrap()
    }

    #[test]
    fn validation_rejects_bad_mixtures() {
        assert!(GmmParams::from_triples(&[(0.5, 0.0, 1.0)]).is_err());
        assert!(GmmParams::from_triples(&[(1.0, 0.0, 0.0)]).is_err());
        assert!(GmmParams::from_triples(&[]).is_err());
        assert!(GmmParams::from_triples(&[(0.4, 0.0, 1.0), (0.6, 3.0, 2.0)]).is_ok());
    }

    #[test]
    fn single_component_closed_form() {
        let xs = [1.0, 2.0, 4.0, 7.0, 11.0];
        let fit = fit_gmm(
            &xs,
            &FitOptions {
                n_components: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 5.0;
        let c = fit.params.components[0];
        assert!((c.mean - mean).abs() < 1e-9);
        assert!((c.variance - var).abs() < 1e-9);
        assert!((c.weight - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_values() {
        assert!(fit_gmm(&[1.0, 2.0], &FitOptions::default()).is_err());
        assert!(fit_gmm(&[1.0, f64::NAN, 3.0], &FitOptions::default()).is_err());
    }

    #[test]
    fn constant_data_degenerates() {
        let xs = vec![5.0; 50];
        let err = fit_gmm(&xs, &FitOptions::default()).unwrap_err();
        assert!(matches!(err, SamplerError::Fit(_)));
    }

    #[test]
    fn log_likelihood_never_decreases() {
        let g = planted();
        let mut rng = RunRng::seed_from_u64(4);
        let xs: Vec<f64> = (0..2000).map(|_| g.sample(&mut rng)).collect();
        let fit = fit_gmm(&xs, &FitOptions::default()).unwrap();
        assert!(!fit.traces.is_empty());
        for trace in &fit.traces {
            for w in trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn mixture_mean_matches_weights() {
        assert!((planted().mixture_mean() - (1.5 + 6.0 + 5.0)).abs() < 1e-12);
    }
}
