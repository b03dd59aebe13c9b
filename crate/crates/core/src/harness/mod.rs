//! Experiment harness: configuration, seeded grid sweeps over the three
//! reference models, run records and best-per-method reports.

mod config;
mod record;

pub use config::{parse_key_values, AnchorMode, Experiment, ExperimentConfig, K0};
pub use record::{
    config_hash, read_summaries, read_summary, report_csv, sweep_report, write_record, BestCell,
    RunRecord, RunSummary,
};

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rayon::prelude::*;

use crate::data::{
    data_dir, load_binary_images, synth_factor_data, train_validation_split, write_csv,
};
use crate::error::{Error, Result};
use crate::eval::{mean_is_marginal_likelihood, validation_elbo, ImportanceSampler};
use crate::math::Matrix;
use crate::model::factor::{permutation_rmse, ring_init, variational_em_run, FactorObjective};
use crate::model::sbn::{Sbn, SbnObjective, SbnPosterior, SbnShape};
use crate::model::vae::{Vae, VaeObjective, VaePosterior, VaeShape};
use crate::optim::{train, InnerLoop, Method, Objective, TrainOutcome, TrainSettings};
use crate::params::ParamVector;
use crate::proximity::{ProximityConfig, Schedule};
use crate::SeededRng;

/// Angular jitter, in radians, added to every ring initialization.
const RING_JITTER: f64 = 0.05;
/// RNG stream for the k0 = auto estimate.
const AUTO_STREAM: u64 = 1;
/// RNG stream for held-out evaluation.
const EVAL_STREAM: u64 = 2;

/// A seeded RNG on one of several independent streams of the same seed.
pub fn stream_rng(seed: u64, stream: u64) -> SeededRng {
    let mut rng = SeededRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One point of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub seed: u64,
    /// Position of `seed` in the seed list (the ring position for the
    /// factor experiment).
    pub replicate: usize,
    pub k0: K0,
    pub gamma: Option<f64>,
}

/// The grid `seeds × k0 × gamma`. Plain VI has a single cell per seed, and a
/// constant schedule has no decay rate.
pub fn cells(config: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for (replicate, &seed) in config.seeds.iter().enumerate() {
        if config.method == Method::Vi {
            out.push(Cell {
                seed,
                replicate,
                k0: K0::Value(0.0),
                gamma: None,
            });
            continue;
        }
        for &k0 in &config.k0 {
            if config.decay == crate::proximity::DecayKind::Constant {
                out.push(Cell {
                    seed,
                    replicate,
                    k0,
                    gamma: None,
                });
            } else {
                for &g in &config.gamma {
                    out.push(Cell {
                        seed,
                        replicate,
                        k0,
                        gamma: Some(g),
                    });
                }
            }
        }
    }
    out
}

/// Data shared read-only by every cell of a sweep.
#[derive(Clone, Debug)]
pub enum Prepared {
    Factor {
        x: Matrix,
    },
    Images {
        train: Vec<Vec<f64>>,
        valid: Vec<Vec<f64>>,
    },
}

/// Generates or loads the data for `config`.
pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    match config.experiment {
        Experiment::FactorRing => {
            let mut rng = SeededRng::seed_from_u64(config.data_seed);
            let (x, _) = synth_factor_data(
                &config.truth,
                config.pi_value(),
                config.sigma2,
                config.points,
                &mut rng,
            )?;
            Ok(Prepared::Factor { x })
        }
        Experiment::Sbn | Experiment::Vae => {
            let dir = config.data_dir.clone().unwrap_or_else(data_dir);
            let images = load_binary_images(&dir, config.downsample, config.threshold)?;
            let (train, valid) =
                train_validation_split(&images, config.train_size, config.valid_size)?;
            Ok(Prepared::Images { train, valid })
        }
    }
}

fn settings(config: &ExperimentConfig, k0: f64, gamma: Option<f64>) -> TrainSettings {
    let schedule = match config.decay {
        crate::proximity::DecayKind::Constant => Schedule::constant(config.iters),
        crate::proximity::DecayKind::Exponential => {
            Schedule::exponential(gamma.unwrap_or(1.0), config.iters)
        }
        crate::proximity::DecayKind::Linear => Schedule::linear(config.iters),
    };
    let alpha = match config.anchor {
        AnchorMode::Ema => config.alpha,
        AnchorMode::Identity => 1.0,
    };
    let magnitude = if config.method == Method::Annealing {
        0.0
    } else {
        k0
    };
    let proximity = ProximityConfig::new(
        config.statistic,
        config.distance,
        magnitude,
        schedule,
        alpha,
    );
    let mut s = TrainSettings::new(config.method, proximity, config.rho, config.iters);
    s.adam = config.adam;
    s.log_every = config.log_every;
    s.inner = InnerLoop {
        max_iters: config.inner_iters,
        noise_std: config.noise_std,
        ..InnerLoop::default()
    };
    s.temperature0 = k0.max(1.0);
    s.track_anchor = config.method == Method::Vi;
    s
}

fn resolve_k0(cell: &Cell, initial_elbo: impl FnOnce() -> Result<f64>) -> Result<f64> {
    match cell.k0 {
        K0::Value(v) => Ok(v),
        K0::Auto => Ok(initial_elbo()?.abs()),
    }
}

struct Trained {
    outcome: TrainOutcome,
    k0: f64,
    final_elbo: f64,
    validation_elbo: Option<f64>,
    marginal_likelihood: Option<f64>,
    rmse: Option<f64>,
    estimate: Option<Matrix>,
}

fn last_elbo(outcome: &TrainOutcome) -> f64 {
    outcome
        .rows
        .last()
        .map(|r| r.report.elbo_estimate)
        .unwrap_or(f64::NAN)
}

fn evaluate(
    config: &ExperimentConfig,
    seed: u64,
    sampler: &dyn ImportanceSampler,
    valid: &[Vec<f64>],
) -> Result<(f64, f64)> {
    let mut rng = stream_rng(seed, EVAL_STREAM);
    let elbo = validation_elbo(sampler, valid, config.valid_samples, &mut rng)?;
    let ml = mean_is_marginal_likelihood(sampler, valid, config.is_samples, &mut rng)?;
    Ok((elbo, ml))
}

fn run_factor(config: &ExperimentConfig, x: &Matrix, cell: &Cell) -> Result<Trained> {
    let mut rng = SeededRng::seed_from_u64(cell.seed);
    let mu0 = ring_init(
        &config.truth,
        config.radius,
        cell.replicate,
        config.seeds.len(),
        RING_JITTER,
        &mut rng,
    );
    let objective = FactorObjective {
        pi: config.pi_value(),
        sigma2: config.sigma2,
        x: x.clone(),
        k: config.truth.rows,
        mode: config.lambda_mode,
    };
    let k0 = resolve_k0(cell, || objective.elbo(&objective.initial_params(&mu0)?))?;
    let run = variational_em_run(
        config.pi_value(),
        config.sigma2,
        x,
        &mu0,
        config.lambda_mode,
        &settings(config, k0, cell.gamma),
        &mut rng,
    )?;
    Ok(Trained {
        k0,
        final_elbo: run.final_elbo,
        validation_elbo: None,
        marginal_likelihood: None,
        rmse: Some(permutation_rmse(&run.mu_hat, &config.truth)),
        estimate: Some(run.mu_hat),
        outcome: run.outcome,
    })
}

fn initial_estimate(objective: &mut dyn Objective, params: &ParamVector, seed: u64) -> Result<f64> {
    Ok(objective
        .estimate(params, false, &mut stream_rng(seed, AUTO_STREAM))?
        .elbo)
}

/// The SBN for `config` over images with `visible` pixels.
pub fn build_sbn(config: &ExperimentConfig, visible: usize) -> Result<Sbn> {
    Sbn::new(
        SbnShape {
            visible,
            hidden: config.hidden.clone(),
        },
        config.pi_value(),
    )
}

/// The VAE for `config` over images with `input` pixels.
pub fn build_vae(config: &ExperimentConfig, input: usize) -> Result<Vae> {
    Vae::new(VaeShape {
        input,
        hidden: config.hidden[0],
        latent: config.latent,
    })
}

fn run_sbn(
    config: &ExperimentConfig,
    train_set: &[Vec<f64>],
    valid: &[Vec<f64>],
    cell: &Cell,
) -> Result<Trained> {
    let sbn = build_sbn(config, train_set[0].len())?;
    let mut rng = SeededRng::seed_from_u64(cell.seed);
    let params = sbn.init_params(config.init, config.bad_weight, &mut rng);
    let mut objective = SbnObjective::new(&sbn, train_set, config.batch, config.samples);
    let k0 = resolve_k0(cell, || {
        initial_estimate(&mut objective, &params, cell.seed)
    })?;
    let outcome = train(
        &mut objective,
        params,
        &settings(config, k0, cell.gamma),
        &mut rng,
    )?;
    let sampler = SbnPosterior {
        sbn: &sbn,
        params: &outcome.params,
    };
    let (v, ml) = evaluate(config, cell.seed, &sampler, valid)?;
    Ok(Trained {
        k0,
        final_elbo: last_elbo(&outcome),
        validation_elbo: Some(v),
        marginal_likelihood: Some(ml),
        rmse: None,
        estimate: None,
        outcome,
    })
}

fn run_vae(
    config: &ExperimentConfig,
    train_set: &[Vec<f64>],
    valid: &[Vec<f64>],
    cell: &Cell,
) -> Result<Trained> {
    let vae = build_vae(config, train_set[0].len())?;
    let mut rng = SeededRng::seed_from_u64(cell.seed);
    let params = vae.init_params(&mut rng);
    let mut objective = VaeObjective {
        vae: &vae,
        data: train_set,
        batch_size: config.batch,
    };
    let k0 = resolve_k0(cell, || {
        initial_estimate(&mut objective, &params, cell.seed)
    })?;
    let outcome = train(
        &mut objective,
        params,
        &settings(config, k0, cell.gamma),
        &mut rng,
    )?;
    let sampler = VaePosterior {
        vae: &vae,
        params: &outcome.params,
    };
    let (v, ml) = evaluate(config, cell.seed, &sampler, valid)?;
    Ok(Trained {
        k0,
        final_elbo: last_elbo(&outcome),
        validation_elbo: Some(v),
        marginal_likelihood: Some(ml),
        rmse: None,
        estimate: None,
        outcome,
    })
}

/// Trains and evaluates one cell.
pub fn run_cell(config: &ExperimentConfig, data: &Prepared, cell: &Cell) -> Result<RunRecord> {
    let trained = match (config.experiment, data) {
        (Experiment::FactorRing, Prepared::Factor { x }) => run_factor(config, x, cell)?,
        (Experiment::Sbn, Prepared::Images { train, valid }) => {
            run_sbn(config, train, valid, cell)?
        }
        (Experiment::Vae, Prepared::Images { train, valid }) => {
            run_vae(config, train, valid, cell)?
        }
        _ => {
            return Err(Error::Config(
                "prepared data does not match the experiment".into(),
            ))
        }
    };
    let k0_setting = cell.k0.to_string();
    let summary = RunSummary {
        experiment: config.experiment,
        method: config.method,
        statistic: config.statistic,
        distance: config.distance,
        init: config.init,
        seed: cell.seed,
        config_hash: config_hash(config, cell.seed, &k0_setting, cell.gamma),
        k0_setting,
        k0: trained.k0,
        gamma: cell.gamma,
        iterations: trained.outcome.iterations,
        final_elbo: trained.final_elbo,
        validation_elbo: trained.validation_elbo,
        marginal_likelihood: trained.marginal_likelihood,
        rmse: trained.rmse,
        truth: (config.experiment == Experiment::FactorRing).then(|| config.truth.clone()),
        estimate: trained.estimate,
        max_entropy_change: trained.outcome.max_entropy_change,
        max_distance: trained.outcome.max_distance,
    };
    log::info!(
        "{} seed={} k0={:.4e} gamma={:?}: final ELBO {:.3}",
        summary.file_stem(),
        summary.seed,
        summary.k0,
        summary.gamma,
        summary.score()
    );
    Ok(RunRecord {
        summary,
        rows: trained.outcome.rows,
    })
}

/// Runs every cell of `config` (up to `config.jobs` concurrently) without
/// writing anything. Records come back in cell order.
pub fn run_cells(config: &ExperimentConfig, data: &Prepared) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let grid = cells(config);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| grid.par_iter().map(|c| run_cell(config, data, c)).collect())
}

/// Output paths of a sweep.
#[derive(Clone, Debug)]
pub struct SweepOutput {
    pub summaries: Vec<PathBuf>,
    pub report: PathBuf,
    pub records: Vec<RunSummary>,
}

/// Validates `config`, runs the sweep and writes one summary and one
/// trajectory per cell plus a best-per-method CSV into `config.out`.
pub fn run(config: &ExperimentConfig) -> Result<SweepOutput> {
    config.validate()?;
    let data = prepare(config)?;
    fs::create_dir_all(&config.out)?;
    if let Prepared::Factor { x } = &data {
        write_csv(config.out.join("factor-data.csv"), x)?;
    }
    let records = run_cells(config, &data)?;
    let mut summaries = Vec::with_capacity(records.len());
    for r in &records {
        summaries.push(write_record(&config.out, r)?);
    }
    let records: Vec<RunSummary> = records.into_iter().map(|r| r.summary).collect();
    let report = config.out.join(format!(
        "{}-{}-sweep.csv",
        config.experiment.name(),
        config.method.name()
    ));
    fs::write(&report, report_csv(&sweep_report(&records)))?;
    Ok(SweepOutput {
        summaries,
        report,
        records,
    })
}

/// Best-per-method CSV over every summary in `dir`.
pub fn report_dir(dir: &Path) -> Result<String> {
    let records = read_summaries(dir)?;
    if records.is_empty() {
        return Err(Error::Config(format!(
            "no run summaries in {}",
            dir.display()
        )));
    }
    Ok(report_csv(&sweep_report(&records)))
}
