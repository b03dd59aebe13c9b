//! Held-out estimators: Monte Carlo ELBO and importance-sampled log marginal
//! likelihood, for any model exposing a proposal `q(z | x)`.

use crate::error::{Error, Result};
use crate::math::logsumexp;
use crate::SeededRng;

/// A proposal `q(z | x)` paired with a joint `p(x, z)`.
pub trait ImportanceSampler {
    /// Draws `z ~ q(· | x)` and returns `log p(x, z) − log q(z | x)`.
    fn log_weight(&self, x: &[f64], rng: &mut SeededRng) -> f64;
}

/// `logsumexp_s w_s − ln S` over `samples` draws from the proposal.
pub fn is_marginal_likelihood(
    sampler: &dyn ImportanceSampler,
    x: &[f64],
    samples: usize,
    rng: &mut SeededRng,
) -> Result<f64> {
    if samples == 0 {
        return Err(Error::Config(
            "importance sampling needs at least one sample".into(),
        ));
    }
    let weights: Vec<f64> = (0..samples).map(|_| sampler.log_weight(x, rng)).collect();
    let lse = logsumexp(&weights);
    if lse == f64::NEG_INFINITY {
        log::warn!("all {samples} importance weights are zero");
        return Ok(f64::NEG_INFINITY);
    }
    Ok(lse - (samples as f64).ln())
}

/// Mean over `dataset` of the per-point `samples`-draw Monte Carlo ELBO.
pub fn validation_elbo(
    sampler: &dyn ImportanceSampler,
    dataset: &[Vec<f64>],
    samples: usize,
    rng: &mut SeededRng,
) -> Result<f64> {
    if samples == 0 {
        return Err(Error::Config(
            "ELBO estimate needs at least one sample".into(),
        ));
    }
    if dataset.is_empty() {
        return Err(Error::Config("empty validation set".into()));
    }
    let total: f64 = dataset
        .iter()
        .map(|x| {
            (0..samples)
                .map(|_| sampler.log_weight(x, rng))
                .sum::<f64>()
                / samples as f64
        })
        .sum();
    Ok(total / dataset.len() as f64)
}

/// Mean importance-sampled log marginal likelihood over `dataset`.
pub fn mean_is_marginal_likelihood(
    sampler: &dyn ImportanceSampler,
    dataset: &[Vec<f64>],
    samples: usize,
    rng: &mut SeededRng,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Config("empty validation set".into()));
    }
    let mut total = 0.0;
    for x in dataset {
        total += is_marginal_likelihood(sampler, x, samples, rng)?;
    }
    Ok(total / dataset.len() as f64)
}
