use serde::{Deserialize, Serialize};

use super::state::{
    annealing_temperature, GradientEstimate, InnerLoop, OptimizerState, StepReport,
};
use crate::error::{Error, Result};
use crate::params::ParamVector;
use crate::proximity::{ProximityConfig, ProximityStatistic, StatisticKind};
use crate::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Vi,
    PviFast,
    PviInner,
    Annealing,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Vi => "vi",
            Method::PviFast => "pvi-fast",
            Method::PviInner => "pvi-inner",
            Method::Annealing => "annealing",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vi" => Ok(Method::Vi),
            "pvi-fast" | "pvi" => Ok(Method::PviFast),
            "pvi-inner" => Ok(Method::PviInner),
            "annealing" => Ok(Method::Annealing),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// A variational objective that the generic driver can ascend.
pub trait Objective {
    /// Hook run at the top of each iteration. Models with closed-form
    /// coordinate updates apply them here.
    fn prepare(&mut self, _params: &mut ParamVector, _rng: &mut SeededRng) -> Result<()> {
        Ok(())
    }

    fn estimate(
        &mut self,
        params: &ParamVector,
        with_entropy_grad: bool,
        rng: &mut SeededRng,
    ) -> Result<GradientEstimate>;

    /// The statistic `f` used by the proximity constraint. Amortized models
    /// evaluate it on the batch seen by the latest [`Objective::estimate`].
    fn statistic(&self, kind: StatisticKind) -> Box<dyn ProximityStatistic + '_> {
        Box::new(kind)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub method: Method,
    pub proximity: ProximityConfig,
    pub step_size: f64,
    pub iterations: usize,
    pub adam: bool,
    pub log_every: usize,
    pub inner: InnerLoop,
    /// Starting temperature for annealing.
    pub temperature0: f64,
    /// Keep the EMA anchor up to date even when no constraint is applied.
    pub track_anchor: bool,
    pub early_stop: bool,
}

impl TrainSettings {
    pub fn new(
        method: Method,
        proximity: ProximityConfig,
        step_size: f64,
        iterations: usize,
    ) -> Self {
        Self {
            method,
            proximity,
            step_size,
            iterations,
            adam: true,
            log_every: 100,
            inner: InnerLoop::default(),
            temperature0: 1.0,
            track_anchor: false,
            early_stop: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRow {
    pub t: usize,
    /// Wall time since the start of training.
    pub elapsed_secs: f64,
    #[serde(flatten)]
    pub report: StepReport,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ParamVector,
    pub rows: Vec<TrainRow>,
    pub iterations: usize,
    /// Largest `|H(q_{t+1}) − H(q_t)|` between consecutive iterates.
    pub max_entropy_change: f64,
    /// Largest `d(f(λ̃), f(λ_t))` seen, when an anchor was maintained.
    pub max_distance: f64,
}

const EARLY_STOP_WINDOW: usize = 100;
const EARLY_STOP_TOL: f64 = 1e-6;

/// Runs `settings.iterations` steps of the chosen method from `params`.
pub fn train(
    objective: &mut dyn Objective,
    params: ParamVector,
    settings: &TrainSettings,
    rng: &mut SeededRng,
) -> Result<TrainOutcome> {
    settings.proximity.validate()?;
    if settings.method == Method::Annealing && settings.temperature0 < 1.0 {
        return Err(Error::Config("annealing needs temperature0 ≥ 1".into()));
    }
    let total = settings.iterations;
    let mut state = OptimizerState::new(params, settings.step_size, total, settings.adam);
    let uses_anchor = match settings.method {
        Method::PviFast | Method::PviInner => true,
        Method::Vi | Method::Annealing => settings.track_anchor,
    };
    let monitor = ProximityConfig {
        k0: 0.0,
        ..settings.proximity
    };
    let log_every = settings.log_every.max(1);
    let mut rows = Vec::new();
    let mut prev_entropy: Option<f64> = None;
    let mut max_entropy_change: f64 = 0.0;
    let mut max_distance: f64 = 0.0;
    let mut elbos: Vec<f64> = Vec::new();
    let start = std::time::Instant::now();

    for t in 0..total {
        objective.prepare(&mut state.params, rng)?;
        let want_entropy = settings.method == Method::Annealing;
        let est = objective.estimate(&state.params, want_entropy, rng)?;
        if let Some(h) = prev_entropy {
            max_entropy_change = max_entropy_change.max((est.entropy - h).abs());
        }
        prev_entropy = Some(est.entropy);

        let statistic = objective.statistic(settings.proximity.statistic);
        if uses_anchor && state.anchor.is_none() {
            state.init_anchor(statistic.as_ref())?;
        }
        let report = match settings.method {
            Method::Vi if uses_anchor => state.fast_pvi_step(&monitor, statistic.as_ref(), &est)?,
            Method::Vi => {
                let grad_norm = state.euclidean_step(&est.grad)?;
                StepReport {
                    elbo_estimate: est.elbo,
                    grad_norm,
                    constraint_value: 0.0,
                    k_t: 0.0,
                    entropy: est.entropy,
                    distance: 0.0,
                }
            }
            Method::PviFast => {
                state.fast_pvi_step(&settings.proximity, statistic.as_ref(), &est)?
            }
            Method::PviInner => {
                let k = settings.proximity.k_at(state.t);
                let inner = state.pvi_inner_step(
                    &settings.proximity,
                    statistic.as_ref(),
                    &est.grad,
                    &settings.inner,
                    rng,
                )?;
                StepReport {
                    elbo_estimate: est.elbo,
                    grad_norm: inner.grad_norm,
                    constraint_value: 0.0,
                    k_t: k,
                    entropy: est.entropy,
                    distance: 0.0,
                }
            }
            Method::Annealing => {
                let temperature = annealing_temperature(
                    settings.temperature0,
                    &settings.proximity.schedule,
                    state.t,
                );
                let h_grad = est.entropy_grad.as_ref().ok_or_else(|| {
                    Error::Config("objective did not provide an entropy gradient".into())
                })?;
                let log_joint: Vec<f64> = est.grad.iter().zip(h_grad).map(|(g, h)| g - h).collect();
                let grad_norm = state.annealing_step(temperature, &log_joint, h_grad)?;
                StepReport {
                    elbo_estimate: est.elbo,
                    grad_norm,
                    constraint_value: 0.0,
                    // the temperature plays the role of the magnitude here
                    k_t: temperature,
                    entropy: est.entropy,
                    distance: 0.0,
                }
            }
        };
        drop(statistic);
        max_distance = max_distance.max(report.distance);
        if t % log_every == 0 || t + 1 == total {
            rows.push(TrainRow {
                t,
                elapsed_secs: start.elapsed().as_secs_f64(),
                report,
            });
        }

        if settings.early_stop {
            elbos.push(est.elbo);
            let n = elbos.len();
            if n >= 2 * EARLY_STOP_WINDOW {
                let recent: f64 =
                    elbos[n - EARLY_STOP_WINDOW..].iter().sum::<f64>() / EARLY_STOP_WINDOW as f64;
                let earlier: f64 = elbos[n - 2 * EARLY_STOP_WINDOW..n - EARLY_STOP_WINDOW]
                    .iter()
                    .sum::<f64>()
                    / EARLY_STOP_WINDOW as f64;
                if (recent - earlier) / earlier.abs().max(f64::MIN_POSITIVE) < EARLY_STOP_TOL {
                    log::info!(
                        "early stop at t={t}: moving-average ELBO {recent:.6} vs {earlier:.6}"
                    );
                    if rows.last().map(|r| r.t) != Some(t) {
                        rows.push(TrainRow {
                            t,
                            elapsed_secs: start.elapsed().as_secs_f64(),
                            report,
                        });
                    }
                    break;
                }
            }
        }
    }
    let iterations = state.t;
    Ok(TrainOutcome {
        params: state.params,
        rows,
        iterations,
        max_entropy_change,
        max_distance,
    })
}
