//! Bernoulli factor model.
//!
//! `z_ik ~ Bernoulli(π)`, `x_i ~ Normal(Σ_k z_ik μ_k, σ² I)` with a mean-field
//! Bernoulli posterior `q(z_ik = 1) = λ_ik`. The ELBO is available in closed
//! form, which makes this the exact testbed for the optimizers.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::math::{bernoulli_entropy, bernoulli_entropy_logit, dot, logit, sigmoid, Matrix};
use crate::optim::{train, GradientEstimate, Objective, TrainOutcome, TrainSettings};
use crate::params::{Layout, ParamVector, SliceKind};
use crate::SeededRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    pub pi: f64,
    /// Feature means, `K × D`.
    pub mu: Matrix,
    pub sigma2: f64,
}

impl FactorModel {
    pub fn new(pi: f64, mu: Matrix, sigma2: f64) -> Result<Self> {
        if !(pi > 0.0 && pi < 1.0) {
            return Err(Error::Config(format!("prior π={pi} outside (0, 1)")));
        }
        if !(sigma2 > 0.0) {
            return Err(Error::Config(format!("σ²={sigma2} must be positive")));
        }
        Ok(Self { pi, mu, sigma2 })
    }

    pub fn k(&self) -> usize {
        self.mu.rows
    }

    pub fn d(&self) -> usize {
        self.mu.cols
    }
}

fn check_shapes(model: &FactorModel, lambda: &Matrix, x: &Matrix) -> Result<()> {
    check_len("posterior rows vs data rows", x.rows, lambda.rows)?;
    check_len("posterior columns vs K", model.k(), lambda.cols)?;
    check_len("data columns vs D", model.d(), x.cols)
}

fn prior_term(lam: f64, pi: f64) -> f64 {
    let mut t = 0.0;
    if lam > 0.0 {
        t += lam * pi.ln();
    }
    if lam < 1.0 {
        t += (1.0 - lam) * (1.0 - pi).ln();
    }
    t
}

/// `E_q[‖x_i − Σ_j z_ij μ_j‖²]` for one data point.
fn expected_sq_residual(model: &FactorModel, lam_i: &[f64], x_i: &[f64]) -> f64 {
    let d = model.d();
    let mut mean = vec![0.0; d];
    let mut var_term = 0.0;
    for (j, &l) in lam_i.iter().enumerate() {
        let mu_j = model.mu.row(j);
        for (m, &v) in mean.iter_mut().zip(mu_j) {
            *m += l * v;
        }
        var_term += l * (1.0 - l) * dot(mu_j, mu_j);
    }
    let resid: f64 = x_i.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum();
    resid + var_term
}

/// Closed-form ELBO for posterior probabilities `lambda` (`N × K`).
pub fn analytic_elbo(model: &FactorModel, lambda: &Matrix, x: &Matrix) -> Result<f64> {
    check_shapes(model, lambda, x)?;
    let d = model.d() as f64;
    let log_norm = -0.5 * d * (2.0 * PI * model.sigma2).ln();
    let mut elbo = 0.0;
    for i in 0..x.rows {
        let lam_i = lambda.row(i);
        elbo += log_norm - expected_sq_residual(model, lam_i, x.row(i)) / (2.0 * model.sigma2);
        for &l in lam_i {
            elbo += prior_term(l, model.pi) + bernoulli_entropy(l);
        }
    }
    Ok(elbo)
}

/// Exact mean-field optimum of `λ_ik` given the other coordinates:
/// `σ(logit π + (μ_kᵀ(x_i − Σ_{j≠k} λ_ij μ_j) − ½‖μ_k‖²) / σ²)`.
pub fn coordinate_update_z(
    model: &FactorModel,
    lambda: &Matrix,
    x: &Matrix,
    i: usize,
    k: usize,
) -> Result<f64> {
    check_shapes(model, lambda, x)?;
    Ok(sigmoid(coordinate_logit(model, lambda.row(i), x.row(i), k)))
}

fn coordinate_logit(model: &FactorModel, lam_i: &[f64], x_i: &[f64], k: usize) -> f64 {
    let mu_k = model.mu.row(k);
    let mut partial = x_i.to_vec();
    for (j, &l) in lam_i.iter().enumerate() {
        if j == k {
            continue;
        }
        for (p, &m) in partial.iter_mut().zip(model.mu.row(j)) {
            *p -= l * m;
        }
    }
    logit(model.pi) + (dot(mu_k, &partial) - 0.5 * dot(mu_k, mu_k)) / model.sigma2
}

/// `∂L/∂μ_k = −(1/σ²) Σ_i (−x_i λ_ik + λ_ik μ_k + λ_ik Σ_{j≠k} λ_ij μ_j)`.
pub fn mu_gradient(model: &FactorModel, lambda: &Matrix, x: &Matrix) -> Result<Matrix> {
    check_shapes(model, lambda, x)?;
    let (k_dim, d) = (model.k(), model.d());
    let mut grad = Matrix::zeros(k_dim, d);
    let mut others = vec![0.0; d];
    for i in 0..x.rows {
        let lam_i = lambda.row(i);
        let x_i = x.row(i);
        for k in 0..k_dim {
            let l = lam_i[k];
            if l == 0.0 {
                continue;
            }
            others.iter_mut().for_each(|o| *o = 0.0);
            for (j, &lj) in lam_i.iter().enumerate() {
                if j != k {
                    for (o, &m) in others.iter_mut().zip(model.mu.row(j)) {
                        *o += lj * m;
                    }
                }
            }
            let mu_k = model.mu.row(k);
            let g = grad.row_mut(k);
            for dd in 0..d {
                g[dd] -= (-x_i[dd] * l + l * mu_k[dd] + l * others[dd]) / model.sigma2;
            }
        }
    }
    Ok(grad)
}

/// `∂L/∂a_ik` for logits `a` with `λ = σ(a)`.
pub fn logit_gradient(model: &FactorModel, logits: &Matrix, x: &Matrix) -> Result<Matrix> {
    let lambda = probabilities(logits);
    check_shapes(model, &lambda, x)?;
    let mut grad = Matrix::zeros(logits.rows, logits.cols);
    for i in 0..x.rows {
        let lam_i = lambda.row(i);
        for k in 0..model.k() {
            let a = logits.get(i, k);
            let l = lam_i[k];
            // ∂L/∂λ = (optimal logit) − a, chained through dλ/da = λ(1−λ)
            let d_lambda = coordinate_logit(model, lam_i, x.row(i), k) - a;
            grad.set(i, k, d_lambda * l * (1.0 - l));
        }
    }
    Ok(grad)
}

pub fn probabilities(logits: &Matrix) -> Matrix {
    Matrix {
        rows: logits.rows,
        cols: logits.cols,
        data: logits.data.iter().map(|&a| sigmoid(a)).collect(),
    }
}

/// Initial means on a ring of `radius` around `truth`: every row is shifted by
/// the same offset `radius · (cos θ, sin θ)`, `θ = 2π·run_index/n_runs + jitter`.
/// For `D ≠ 2` the offset is a random direction with norm `radius`.
pub fn ring_init<R: Rng + ?Sized>(
    truth: &Matrix,
    radius: f64,
    run_index: usize,
    n_runs: usize,
    jitter: f64,
    rng: &mut R,
) -> Matrix {
    let d = truth.cols;
    let offset: Vec<f64> = if d == 2 {
        let mut theta = 2.0 * PI * run_index as f64 / n_runs.max(1) as f64;
        if jitter > 0.0 {
            theta += rng.random_range(-jitter..jitter);
        }
        vec![radius * theta.cos(), radius * theta.sin()]
    } else {
        let dir: Vec<f64> = (0..d)
            .map(|_| rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, rng))
            .collect();
        let n = dir
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
            .max(f64::MIN_POSITIVE);
        dir.iter().map(|v| radius * v / n).collect()
    };
    let mut mu = truth.clone();
    for i in 0..mu.rows {
        for (m, o) in mu.row_mut(i).iter_mut().zip(&offset) {
            *m += o;
        }
    }
    mu
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Root-mean-square error between estimated and true means, minimized over
/// relabelings of the `K` features.
pub fn permutation_rmse(estimate: &Matrix, truth: &Matrix) -> f64 {
    assert_eq!((estimate.rows, estimate.cols), (truth.rows, truth.cols));
    let n = (truth.rows * truth.cols) as f64;
    permutations(truth.rows)
        .into_iter()
        .map(|perm| {
            let sse: f64 = perm
                .iter()
                .enumerate()
                .map(|(k, &p)| {
                    estimate
                        .row(p)
                        .iter()
                        .zip(truth.row(k))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .sum();
            (sse / n).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

/// How `λ` moves during variational EM.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaMode {
    /// Exact coordinate updates before each gradient step on `μ`.
    Coordinate,
    /// Gradient steps on the logits, jointly with `μ`. Required when a
    /// proximity constraint acts on `λ`.
    Gradient,
}

/// The factor-model ELBO as a function of `[λ logits (N×K), μ (K×D)]`.
pub struct FactorObjective {
    pub pi: f64,
    pub sigma2: f64,
    pub x: Matrix,
    pub k: usize,
    pub mode: LambdaMode,
}

impl FactorObjective {
    pub fn layout(&self) -> Layout {
        Layout::new()
            .with(
                "lambda",
                SliceKind::BernoulliLogit { prior: self.pi },
                self.x.rows,
                self.k,
            )
            .with("mu", SliceKind::Unconstrained, self.k, self.x.cols)
    }

    /// Parameters with `λ = 0.5` everywhere (maximum entropy) and the given means.
    pub fn initial_params(&self, mu: &Matrix) -> Result<ParamVector> {
        check_len("initial means", self.k * self.x.cols, mu.data.len())?;
        let mut p = ParamVector::zeros(Arc::new(self.layout()));
        p.slice_mut("mu").copy_from_slice(&mu.data);
        Ok(p)
    }

    pub fn split(&self, params: &ParamVector) -> Result<(Matrix, FactorModel)> {
        let logits = Matrix::from_vec(self.x.rows, self.k, params.slice("lambda").to_vec())?;
        let mu = Matrix::from_vec(self.k, self.x.cols, params.slice("mu").to_vec())?;
        Ok((logits, FactorModel::new(self.pi, mu, self.sigma2)?))
    }

    pub fn elbo(&self, params: &ParamVector) -> Result<f64> {
        let (logits, model) = self.split(params)?;
        analytic_elbo(&model, &probabilities(&logits), &self.x)
    }
}

impl Objective for FactorObjective {
    fn prepare(&mut self, params: &mut ParamVector, _rng: &mut SeededRng) -> Result<()> {
        if self.mode == LambdaMode::Coordinate {
            let (mut logits, model) = self.split(params)?;
            let mut lam = probabilities(&logits);
            for i in 0..self.x.rows {
                for k in 0..self.k {
                    let a = coordinate_logit(&model, lam.row(i), self.x.row(i), k);
                    logits.set(i, k, a);
                    lam.set(i, k, sigmoid(a));
                }
            }
            params.slice_mut("lambda").copy_from_slice(&logits.data);
        }
        Ok(())
    }

    fn estimate(
        &mut self,
        params: &ParamVector,
        with_entropy_grad: bool,
        _rng: &mut SeededRng,
    ) -> Result<GradientEstimate> {
        let (logits, model) = self.split(params)?;
        let lambda = probabilities(&logits);
        let elbo = analytic_elbo(&model, &lambda, &self.x)?;
        let entropy: f64 = logits
            .data
            .iter()
            .map(|&a| bernoulli_entropy_logit(a))
            .sum();
        let mut grad = Vec::with_capacity(params.len());
        match self.mode {
            LambdaMode::Gradient => grad.extend(logit_gradient(&model, &logits, &self.x)?.data),
            LambdaMode::Coordinate => grad.extend(std::iter::repeat_n(0.0, logits.data.len())),
        }
        grad.extend(mu_gradient(&model, &lambda, &self.x)?.data);
        let entropy_grad = with_entropy_grad.then(|| {
            let mut h: Vec<f64> = logits
                .data
                .iter()
                .zip(&lambda.data)
                .map(|(&a, &l)| {
                    if self.mode == LambdaMode::Gradient {
                        -a * l * (1.0 - l)
                    } else {
                        0.0
                    }
                })
                .collect();
            h.extend(std::iter::repeat_n(0.0, model.mu.data.len()));
            h
        });
        Ok(GradientEstimate {
            elbo,
            entropy,
            grad,
            entropy_grad,
        })
    }
}

#[derive(Clone, Debug)]
pub struct FactorRun {
    pub mu_hat: Matrix,
    pub final_elbo: f64,
    pub outcome: TrainOutcome,
}

/// Variational EM from initial means `mu0`: `λ` and `μ` are updated every
/// iteration by the method in `settings`.
pub fn variational_em_run(
    pi: f64,
    sigma2: f64,
    x: &Matrix,
    mu0: &Matrix,
    mode: LambdaMode,
    settings: &TrainSettings,
    rng: &mut SeededRng,
) -> Result<FactorRun> {
    let mut objective = FactorObjective {
        pi,
        sigma2,
        x: x.clone(),
        k: mu0.rows,
        mode,
    };
    let params = objective.initial_params(mu0)?;
    let outcome = train(&mut objective, params, settings, rng)?;
    let mut last = outcome.params.clone();
    objective.prepare(&mut last, rng)?;
    let final_elbo = objective.elbo(&last)?;
    let mu_hat = Matrix::from_vec(mu0.rows, x.cols, outcome.params.slice("mu").to_vec())?;
    Ok(FactorRun {
        mu_hat,
        final_elbo,
        outcome,
    })
}
