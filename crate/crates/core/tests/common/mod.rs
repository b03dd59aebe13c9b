//! Brute-force oracles shared by the integration tests. Everything here
//! enumerates configurations directly and never calls the closed forms it is
//! used to check.

#![allow(dead_code)]

use std::f64::consts::PI;

use pvi_core::math::Matrix;
use pvi_core::model::factor::FactorModel;
use pvi_core::model::sbn::Sbn;
use pvi_core::ParamVector;

/// All binary vectors of length `n`.
pub fn configs(n: usize) -> Vec<Vec<f64>> {
    (0..1usize << n)
        .map(|m| (0..n).map(|b| ((m >> b) & 1) as f64).collect())
        .collect()
}

fn split_layers(flat: &[f64], sizes: &[usize]) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut at = 0;
    for &s in sizes {
        out.push(flat[at..at + s].to_vec());
        at += s;
    }
    out
}

/// Every latent configuration of `sbn`, as layers.
pub fn sbn_latents(sbn: &Sbn) -> Vec<Vec<Vec<f64>>> {
    configs(sbn.shape.latent_units())
        .iter()
        .map(|flat| split_layers(flat, &sbn.shape.hidden))
        .collect()
}

fn logsumexp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log Σ_z p(x, z)`.
pub fn sbn_log_marginal(sbn: &Sbn, params: &ParamVector, x: &[f64]) -> f64 {
    let terms: Vec<f64> = sbn_latents(sbn)
        .iter()
        .map(|z| sbn.log_joint(params, z, x).unwrap())
        .collect();
    logsumexp(&terms)
}

/// `Σ_z q(z | x) [log p(x, z) − log q(z | x)]`.
pub fn sbn_elbo(sbn: &Sbn, params: &ParamVector, x: &[f64]) -> f64 {
    sbn_latents(sbn)
        .iter()
        .map(|z| {
            let lq = sbn.log_q(params, z, x).unwrap();
            lq.exp() * (sbn.log_joint(params, z, x).unwrap() - lq)
        })
        .sum()
}

/// Central differences of [`sbn_elbo`] over the batch mean.
pub fn sbn_elbo_fd_grad(sbn: &Sbn, params: &ParamVector, batch: &[&[f64]], h: f64) -> Vec<f64> {
    let f = |p: &ParamVector| {
        batch.iter().map(|x| sbn_elbo(sbn, p, x)).sum::<f64>() / batch.len() as f64
    };
    central_differences(params, h, f)
}

pub fn central_differences(
    params: &ParamVector,
    h: f64,
    f: impl Fn(&ParamVector) -> f64,
) -> Vec<f64> {
    (0..params.len())
        .map(|i| {
            let mut a = params.clone();
            let mut b = params.clone();
            a.values_mut()[i] += h;
            b.values_mut()[i] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

/// `Σ_z q(z) [log p(x, z) − log q(z)]` over all `2^{NK}` assignments.
pub fn factor_elbo(model: &FactorModel, lambda: &Matrix, x: &Matrix) -> f64 {
    let (n, k, d) = (x.rows, model.mu.rows, x.cols);
    let mut total = 0.0;
    for flat in configs(n * k) {
        let mut log_q = 0.0;
        let mut log_p = 0.0;
        for i in 0..n {
            let mut mean = vec![0.0; d];
            for kk in 0..k {
                let z = flat[i * k + kk];
                let l = lambda.get(i, kk);
                log_q += if z == 1.0 { l.ln() } else { (1.0 - l).ln() };
                log_p += if z == 1.0 {
                    model.pi.ln()
                } else {
                    (1.0 - model.pi).ln()
                };
                if z == 1.0 {
                    for (m, mu) in mean.iter_mut().zip(model.mu.row(kk)) {
                        *m += mu;
                    }
                }
            }
            let sq: f64 = x
                .row(i)
                .iter()
                .zip(&mean)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            log_p += -0.5 * d as f64 * (2.0 * PI * model.sigma2).ln() - sq / (2.0 * model.sigma2);
        }
        let q = log_q.exp();
        if q > 0.0 {
            total += q * (log_p - log_q);
        }
    }
    total
}

/// Relative error with an absolute floor for near-zero references.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-3)
}

/// Mean and standard error.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Property-test settings with a fixed seed so CI runs are reproducible.
pub fn proptest_config(cases: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        cases,
        rng_seed: proptest::test_runner::RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..proptest::test_runner::Config::default()
    }
}

/// `−Σ_z q(z | x) log q(z | x)`.
pub fn sbn_entropy(sbn: &Sbn, params: &ParamVector, x: &[f64]) -> f64 {
    sbn_latents(sbn)
        .iter()
        .map(|z| {
            let lq = sbn.log_q(params, z, x).unwrap();
            -lq.exp() * lq
        })
        .sum()
}
