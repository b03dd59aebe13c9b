//! Proximity constraints `k_t · d(f(λ̃), f(λ))`.
//!
//! A constraint is a statistic `f`, a distance `d`, a magnitude `k0` decayed by
//! a [`Schedule`], and the decay `α` of the exponential moving average that
//! produces the anchor `f(λ̃)`.

mod distance;
mod schedule;
mod statistic;

pub use distance::{distance_grad, inverse_huber, squared_difference, Distance};
pub use schedule::{magnitude_at, DecayKind, Schedule};
pub use statistic::{
    bernoulli_kl_logit, eval_statistic, statistic_dim, statistic_vjp, ProximityStatistic,
    StatisticKind, StatisticValue,
};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::params::ParamVector;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProximityConfig {
    pub statistic: StatisticKind,
    pub distance: Distance,
    pub k0: f64,
    pub schedule: Schedule,
    pub ema_alpha: f64,
}

impl ProximityConfig {
    pub fn new(
        statistic: StatisticKind,
        distance: Distance,
        k0: f64,
        schedule: Schedule,
        ema_alpha: f64,
    ) -> Self {
        Self {
            statistic,
            distance,
            k0,
            schedule,
            ema_alpha,
        }
    }

    /// A configuration whose constraint is identically zero.
    pub fn disabled(total: usize) -> Self {
        Self::new(
            StatisticKind::Identity,
            Distance::SquaredDifference,
            0.0,
            Schedule::constant(total),
            0.0,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k0 >= 0.0 && self.k0.is_finite()) {
            return Err(Error::Config(format!(
                "constraint magnitude k0={} must be finite and ≥ 0",
                self.k0
            )));
        }
        if !(0.0..=1.0).contains(&self.ema_alpha) {
            return Err(Error::Config(format!(
                "ema alpha {} outside [0, 1]",
                self.ema_alpha
            )));
        }
        self.schedule.validate()
    }

    pub fn k_at(&self, t: usize) -> f64 {
        self.schedule.magnitude_at(self.k0, t)
    }
}

/// `alpha · anchor + (1 − alpha) · current`, elementwise.
pub fn ema_update(anchor: &[f64], current: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_len("ema_update", anchor.len(), current.len())?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("ema alpha {alpha} outside [0, 1]")));
    }
    Ok(anchor
        .iter()
        .zip(current)
        .map(|(a, c)| alpha * a + (1.0 - alpha) * c)
        .collect())
}

/// `k_t · d(anchor, f(params))`.
pub fn constraint_value(
    config: &ProximityConfig,
    statistic: &dyn ProximityStatistic,
    anchor: &StatisticValue,
    params: &ParamVector,
    t: usize,
) -> Result<f64> {
    let k = config.k_at(t);
    if k == 0.0 {
        return Ok(0.0);
    }
    let f = statistic.eval(params)?;
    Ok(k * config.distance.value(anchor.as_slice(), f.as_slice())?)
}

/// `k · ∇d(f(λ̃), f(λ)) ∇f(λ)` together with the distance itself.
pub fn constraint_gradient(
    distance: Distance,
    k: f64,
    statistic: &dyn ProximityStatistic,
    anchor: &StatisticValue,
    params: &ParamVector,
) -> Result<(f64, Vec<f64>)> {
    let f = statistic.eval(params)?;
    let d = distance.value(anchor.as_slice(), f.as_slice())?;
    let mut cot = distance.grad(anchor.as_slice(), f.as_slice())?;
    cot.iter_mut().for_each(|c| *c *= k);
    let grad = statistic.vjp(params, &StatisticValue(cot))?;
    Ok((d, grad))
}
