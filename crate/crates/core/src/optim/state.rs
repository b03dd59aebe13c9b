use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use crate::error::{check_len, Error, Result};
use crate::math::norm;
use crate::params::ParamVector;
use crate::proximity::{
    constraint_gradient, ema_update, ProximityConfig, ProximityStatistic, StatisticValue,
};

/// One stochastic (or exact) evaluation of the objective at the current iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientEstimate {
    pub elbo: f64,
    /// Entropy of the variational distribution, for monitoring.
    pub entropy: f64,
    /// Gradient of the ELBO.
    pub grad: Vec<f64>,
    /// Gradient of the entropy term alone; only filled in when requested.
    pub entropy_grad: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub elbo_estimate: f64,
    pub grad_norm: f64,
    pub constraint_value: f64,
    pub k_t: f64,
    pub entropy: f64,
    /// `d(f(λ̃), f(λ_t))` before the step, or 0 without an anchor.
    pub distance: f64,
}

/// Inner-loop controls for the non-linearized update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerLoop {
    pub max_iters: usize,
    pub tolerance: f64,
    pub noise_std: f64,
    pub divergence_bound: f64,
}

impl Default for InnerLoop {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tolerance: 1e-6,
            noise_std: 1e-2,
            divergence_bound: 1e6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnerReport {
    pub iterations: usize,
    pub grad_norm: f64,
}

#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub params: ParamVector,
    /// `f(λ̃)`, maintained by an exponential moving average in statistic space.
    pub anchor: Option<StatisticValue>,
    pub step_size: f64,
    pub t: usize,
    pub total: usize,
    pub adam: Option<Adam>,
}

fn first_non_finite(v: &[f64]) -> Option<usize> {
    v.iter().position(|x| !x.is_finite())
}

impl OptimizerState {
    pub fn new(params: ParamVector, step_size: f64, total: usize, use_adam: bool) -> Self {
        let adam = use_adam.then(|| Adam::new(params.len()));
        Self {
            params,
            anchor: None,
            step_size,
            t: 0,
            total,
            adam,
        }
    }

    /// Sets `f(λ̃) = f(λ_0)`.
    pub fn init_anchor(&mut self, statistic: &dyn ProximityStatistic) -> Result<()> {
        self.anchor = Some(init_anchor(statistic, &self.params)?);
        Ok(())
    }

    fn apply(&mut self, direction: &[f64]) -> Result<()> {
        let update = match self.adam.as_mut() {
            Some(adam) => adam.transform(direction, self.step_size),
            None => direction.iter().map(|g| self.step_size * g).collect(),
        };
        let next: Vec<f64> = self
            .params
            .values()
            .iter()
            .zip(&update)
            .map(|(p, u)| p + u)
            .collect();
        self.params.set_values(next)?;
        self.t += 1;
        Ok(())
    }

    /// `λ_{t+1} = λ_t + ρ ∇L(λ_t)`, or the Adam transform of `∇L`.
    pub fn euclidean_step(&mut self, elbo_grad: &[f64]) -> Result<f64> {
        check_len(
            "euclidean_step gradient",
            self.params.len(),
            elbo_grad.len(),
        )?;
        if let Some(i) = first_non_finite(elbo_grad) {
            return Err(Error::NonFinite(format!(
                "ELBO gradient entry {i} is {}",
                elbo_grad[i]
            )));
        }
        self.apply(elbo_grad)?;
        Ok(norm(elbo_grad))
    }

    fn advance_anchor(
        &mut self,
        config: &ProximityConfig,
        statistic: &dyn ProximityStatistic,
    ) -> Result<()> {
        if let Some(anchor) = &self.anchor {
            let f = statistic.eval(&self.params)?;
            self.anchor = Some(StatisticValue(ema_update(
                anchor.as_slice(),
                f.as_slice(),
                config.ema_alpha,
            )?));
        }
        Ok(())
    }

    /// Linearized proximity step:
    /// `λ_{t+1} = λ_t + ρ(∇L(λ_t) − k_t ∇d(f(λ̃), f(λ_t)) ∇f(λ_t))`,
    /// followed by `f(λ̃) ← α f(λ̃) + (1 − α) f(λ_{t+1})`.
    pub fn fast_pvi_step(
        &mut self,
        config: &ProximityConfig,
        statistic: &dyn ProximityStatistic,
        estimate: &GradientEstimate,
    ) -> Result<StepReport> {
        let grad = &estimate.grad;
        check_len("fast_pvi_step gradient", self.params.len(), grad.len())?;
        if let Some(i) = first_non_finite(grad) {
            return Err(Error::NonFinite(format!(
                "ELBO gradient entry {i} is {}",
                grad[i]
            )));
        }
        let k = config.k_at(self.t);
        let mut distance = 0.0;
        let total = match &self.anchor {
            Some(anchor) if k != 0.0 => {
                let (d, cg) =
                    constraint_gradient(config.distance, k, statistic, anchor, &self.params)?;
                if let Some(i) = first_non_finite(&cg) {
                    return Err(Error::NonFinite(format!(
                        "constraint gradient entry {i} is {} (k_t = {k:e})",
                        cg[i]
                    )));
                }
                distance = d;
                grad.iter().zip(&cg).map(|(g, c)| g - c).collect::<Vec<_>>()
            }
            Some(anchor) => {
                let f = statistic.eval(&self.params)?;
                distance = config.distance.value(anchor.as_slice(), f.as_slice())?;
                grad.clone()
            }
            None if k != 0.0 => {
                return Err(Error::Config(
                    "fast proximity step needs an initialized anchor".into(),
                ));
            }
            None => grad.clone(),
        };
        self.apply(&total)?;
        self.advance_anchor(config, statistic)?;
        Ok(StepReport {
            elbo_estimate: estimate.elbo,
            grad_norm: norm(&total),
            constraint_value: k * distance,
            k_t: k,
            entropy: estimate.entropy,
            distance,
        })
    }

    /// Proposal-plus-inner-ascent update on
    /// `U(λ) = L(λ_t) + ∇L(λ_t)ᵀ(λ − λ_t) − ‖λ − λ_t‖²/(2ρ) − k_t d(f(λ̃), f(λ))`.
    ///
    /// The inner step size is `ρ / (1 + ρ k_t)`: the reciprocal curvature of the
    /// quadratic part of `−U`, which equals `ρ` when the constraint is off.
    pub fn pvi_inner_step<R: Rng + ?Sized>(
        &mut self,
        config: &ProximityConfig,
        statistic: &dyn ProximityStatistic,
        elbo_grad: &[f64],
        inner: &InnerLoop,
        rng: &mut R,
    ) -> Result<InnerReport> {
        check_len(
            "pvi_inner_step gradient",
            self.params.len(),
            elbo_grad.len(),
        )?;
        if inner.max_iters == 0 {
            return Err(Error::Config(
                "inner loop needs at least one iteration".into(),
            ));
        }
        if let Some(i) = first_non_finite(elbo_grad) {
            return Err(Error::NonFinite(format!(
                "ELBO gradient entry {i} is {}",
                elbo_grad[i]
            )));
        }
        let rho = self.step_size;
        let k = config.k_at(self.t);
        let base = self.params.values().to_vec();
        let mut x = base.clone();
        if inner.noise_std > 0.0 {
            let noise =
                Normal::new(0.0, inner.noise_std).map_err(|e| Error::Config(e.to_string()))?;
            for xi in x.iter_mut() {
                *xi += noise.sample(rng);
            }
        }
        let eta = rho / (1.0 + rho * k);
        let constrained = k != 0.0 && self.anchor.is_some();
        let mut report = InnerReport {
            iterations: 0,
            grad_norm: f64::INFINITY,
        };
        for it in 0..inner.max_iters {
            let mut grad_u: Vec<f64> = elbo_grad
                .iter()
                .zip(&x)
                .zip(&base)
                .map(|((g, xi), bi)| g - (xi - bi) / rho)
                .collect();
            if constrained {
                let candidate = self.params.with_values(x.clone())?;
                let anchor = self.anchor.as_ref().expect("checked above");
                let (_, cg) =
                    constraint_gradient(config.distance, k, statistic, anchor, &candidate)?;
                grad_u.iter_mut().zip(&cg).for_each(|(g, c)| *g -= c);
            }
            report.grad_norm = norm(&grad_u);
            report.iterations = it;
            if report.grad_norm < inner.tolerance {
                break;
            }
            x.iter_mut().zip(&grad_u).for_each(|(xi, g)| *xi += eta * g);
            report.iterations = it + 1;
            let moved = norm(&x.iter().zip(&base).map(|(a, b)| a - b).collect::<Vec<_>>());
            if !moved.is_finite() || moved > inner.divergence_bound {
                return Err(Error::Divergence {
                    norm: moved,
                    bound: inner.divergence_bound,
                });
            }
        }
        self.params.set_values(x)?;
        self.t += 1;
        self.advance_anchor(config, statistic)?;
        Ok(report)
    }

    /// Ascent on the tempered objective `E_q[log p] + temperature · H(q)`.
    pub fn annealing_step(
        &mut self,
        temperature: f64,
        log_joint_grad: &[f64],
        entropy_grad: &[f64],
    ) -> Result<f64> {
        if !(temperature >= 1.0) {
            return Err(Error::Config(format!(
                "annealing temperature {temperature} below 1"
            )));
        }
        check_len(
            "annealing_step entropy gradient",
            log_joint_grad.len(),
            entropy_grad.len(),
        )?;
        let total: Vec<f64> = log_joint_grad
            .iter()
            .zip(entropy_grad)
            .map(|(a, h)| a + temperature * h)
            .collect();
        self.euclidean_step(&total)
    }
}

pub fn init_anchor(
    statistic: &dyn ProximityStatistic,
    params: &ParamVector,
) -> Result<StatisticValue> {
    statistic.eval(params)
}

/// `1 + (T0 − 1) · decay(t)`, reaching exactly 1 at `t = T`.
pub fn annealing_temperature(
    temperature0: f64,
    schedule: &crate::proximity::Schedule,
    t: usize,
) -> f64 {
    1.0 + (temperature0 - 1.0).max(0.0) * schedule.normalized_factor(t)
}
