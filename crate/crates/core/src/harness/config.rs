use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::model::factor::LambdaMode;
use crate::model::sbn::Init;
use crate::optim::Method;
use crate::proximity::{DecayKind, Distance, StatisticKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    FactorRing,
    Sbn,
    Vae,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::FactorRing => "factor-ring",
            Experiment::Sbn => "sbn",
            Experiment::Vae => "vae",
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "factor-ring" => Ok(Experiment::FactorRing),
            "sbn" => Ok(Experiment::Sbn),
            "vae" => Ok(Experiment::Vae),
            other => Err(Error::Config(format!("unknown experiment `{other}`"))),
        }
    }
}

/// Constraint magnitude (or starting temperature): a value, or the absolute
/// initial ELBO.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum K0 {
    Auto,
    Value(f64),
}

impl FromStr for K0 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(K0::Auto);
        }
        let v = parse_f64("k0", s)?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("k0 must be finite and ≥ 0, got {v}")));
        }
        Ok(K0::Value(v))
    }
}

impl fmt::Display for K0 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            K0::Auto => f.write_str("auto"),
            K0::Value(v) => write!(f, "{v}"),
        }
    }
}

/// Where the EMA anchor starts and whether it moves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorMode {
    Ema,
    /// Keep the anchor at the statistic of the initial parameters.
    Identity,
}

/// Every knob of an experiment sweep. Grids are `k0 × gamma`, replicated
/// over `seeds`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub method: Method,
    pub statistic: StatisticKind,
    pub distance: Distance,
    pub k0: Vec<K0>,
    pub gamma: Vec<f64>,
    pub decay: DecayKind,
    pub alpha: f64,
    pub rho: f64,
    pub iters: usize,
    pub batch: usize,
    pub seeds: Vec<u64>,
    pub init: Init,
    pub adam: bool,
    pub inner_iters: usize,
    pub noise_std: f64,
    pub anchor: AnchorMode,
    /// Prior probability; `None` means 0.001 for bad and 0.5 for good init.
    pub pi: Option<f64>,
    pub log_every: usize,

    // factor ring
    pub sigma2: f64,
    pub points: usize,
    pub radius: f64,
    pub truth: Matrix,
    pub data_seed: u64,
    pub lambda_mode: LambdaMode,

    // image models
    pub hidden: Vec<usize>,
    pub latent: usize,
    pub bad_weight: f64,
    pub samples: usize,
    pub train_size: usize,
    pub valid_size: usize,
    pub downsample: bool,
    pub threshold: f64,
    pub valid_samples: usize,
    pub is_samples: usize,

    /// Not part of the run identity.
    #[serde(skip)]
    pub data_dir: Option<PathBuf>,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub jobs: usize,
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|e| Error::Config(format!("{key}: cannot parse `{v}` as a number: {e}")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim()
        .parse::<usize>()
        .map_err(|e| Error::Config(format!("{key}: cannot parse `{v}` as a count: {e}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(Error::Config(format!(
            "{key}: expected true/false, got `{other}`"
        ))),
    }
}

fn parse_list<T>(key: &str, v: &str, item: impl Fn(&str, &str) -> Result<T>) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| item(key, s))
        .collect::<Result<Vec<_>>>()
        .and_then(|items| {
            if items.is_empty() {
                Err(Error::Config(format!("{key}: empty list")))
            } else {
                Ok(items)
            }
        })
}

/// `"2,2;-2,2"` → rows of a matrix.
fn parse_matrix(key: &str, v: &str) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = v
        .split(';')
        .map(|row| parse_list(key, row, parse_f64))
        .collect::<Result<_>>()?;
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Config(format!("{key}: ragged matrix `{v}`")));
    }
    Matrix::from_vec(rows.len(), cols, rows.concat())
}

fn parse_enum<T: FromStr<Err = Error>>(v: &str) -> Result<T> {
    v.trim().parse()
}

impl ExperimentConfig {
    /// Desk-scale defaults for `experiment`.
    pub fn defaults(experiment: Experiment) -> Self {
        let mut c = Self {
            experiment,
            method: Method::Vi,
            statistic: StatisticKind::Entropy,
            distance: Distance::InverseHuber,
            k0: vec![K0::Auto],
            gamma: vec![1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10, 1e-20, 1e-30],
            decay: DecayKind::Exponential,
            alpha: 0.9999,
            rho: 1e-3,
            iters: 20_000,
            batch: 20,
            seeds: vec![0],
            init: Init::Bad,
            adam: true,
            inner_iters: 50,
            noise_std: 1e-2,
            anchor: AnchorMode::Ema,
            pi: None,
            log_every: 100,
            sigma2: 1.0,
            points: 100,
            radius: 8.0,
            truth: Matrix::from_rows(&[&[2.0, 2.0], &[-2.0, 2.0]]),
            data_seed: 7,
            lambda_mode: LambdaMode::Gradient,
            hidden: vec![20],
            latent: 8,
            bad_weight: -10.0,
            samples: 5,
            train_size: 1000,
            valid_size: 500,
            downsample: true,
            threshold: 0.5,
            valid_samples: 10,
            is_samples: 1000,
            data_dir: None,
            out: PathBuf::from("runs"),
            jobs: 1,
        };
        match experiment {
            Experiment::FactorRing => {
                c.gamma = vec![1e-8, 1e-9, 1e-10];
                c.rho = 1e-2;
                c.iters = 3000;
                c.seeds = (0..100).collect();
                c.init = Init::Good;
                c.pi = Some(0.5);
                c.log_every = 50;
            }
            Experiment::Sbn => {}
            Experiment::Vae => {
                c.statistic = StatisticKind::Orthogonal;
                c.k0 = [1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5].map(K0::Value).to_vec();
                c.gamma = vec![1.0];
                c.decay = DecayKind::Constant;
                c.iters = 5000;
                c.rho = 1e-2;
                c.hidden = vec![64];
                c.init = Init::Good;
            }
        }
        c
    }

    /// Sets one key. Keys are the long CLI flag names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "experiment" => {
                let e: Experiment = parse_enum(v)?;
                if e != self.experiment {
                    return Err(Error::Config(format!(
                        "config is for `{}` but the run is `{}`",
                        e.name(),
                        self.experiment.name()
                    )));
                }
            }
            "method" => self.method = parse_enum(v)?,
            "statistic" => self.statistic = parse_enum(v)?,
            "distance" => self.distance = parse_enum(v)?,
            "k0" => self.k0 = parse_list(key, v, |_, s| s.parse())?,
            "gamma" => self.gamma = parse_list(key, v, parse_f64)?,
            "decay" => {
                self.decay = match v {
                    "exponential" => DecayKind::Exponential,
                    "linear" => DecayKind::Linear,
                    "constant" => DecayKind::Constant,
                    other => {
                        return Err(Error::Config(format!("decay: unknown schedule `{other}`")))
                    }
                }
            }
            "alpha" => self.alpha = parse_f64(key, v)?,
            "rho" => self.rho = parse_f64(key, v)?,
            "iters" => self.iters = parse_usize(key, v)?,
            "batch" => self.batch = parse_usize(key, v)?,
            "seeds" => {
                self.seeds = parse_list(key, v, |k, s| {
                    s.parse::<u64>()
                        .map_err(|e| Error::Config(format!("{k}: {e}")))
                })?
            }
            "seed" => {
                let base: u64 = v.parse().map_err(|e| Error::Config(format!("seed: {e}")))?;
                let n = self.seeds.len() as u64;
                self.seeds = (base..base + n).collect();
            }
            "runs" => {
                let n = parse_usize(key, v)? as u64;
                let base = self.seeds.first().copied().unwrap_or(0);
                self.seeds = (base..base + n).collect();
            }
            "init" => {
                self.init = match v {
                    "good" => Init::Good,
                    "bad" => Init::Bad,
                    other => {
                        return Err(Error::Config(format!(
                            "init: expected good or bad, got `{other}`"
                        )))
                    }
                }
            }
            "adam" => self.adam = parse_bool(key, v)?,
            "inner-iters" => self.inner_iters = parse_usize(key, v)?,
            "noise-std" => self.noise_std = parse_f64(key, v)?,
            "anchor" => {
                self.anchor = match v {
                    "ema" => AnchorMode::Ema,
                    "identity" => AnchorMode::Identity,
                    other => {
                        return Err(Error::Config(format!(
                            "anchor: expected ema or identity, got `{other}`"
                        )))
                    }
                }
            }
            "pi" => self.pi = Some(parse_f64(key, v)?),
            "log-every" => self.log_every = parse_usize(key, v)?,
            "sigma2" => self.sigma2 = parse_f64(key, v)?,
            "points" => self.points = parse_usize(key, v)?,
            "radius" => self.radius = parse_f64(key, v)?,
            "truth" => self.truth = parse_matrix(key, v)?,
            "data-seed" => {
                self.data_seed = v
                    .parse()
                    .map_err(|e| Error::Config(format!("data-seed: {e}")))?
            }
            "lambda-mode" => {
                self.lambda_mode = match v {
                    "gradient" => LambdaMode::Gradient,
                    "coordinate" => LambdaMode::Coordinate,
                    other => {
                        return Err(Error::Config(format!(
                            "lambda-mode: unknown mode `{other}`"
                        )))
                    }
                }
            }
            "hidden" => self.hidden = parse_list(key, v, parse_usize)?,
            "latent" => self.latent = parse_usize(key, v)?,
            "bad-weight" => self.bad_weight = parse_f64(key, v)?,
            "samples" => self.samples = parse_usize(key, v)?,
            "train-size" => self.train_size = parse_usize(key, v)?,
            "valid-size" => self.valid_size = parse_usize(key, v)?,
            "downsample" => self.downsample = parse_bool(key, v)?,
            "threshold" => self.threshold = parse_f64(key, v)?,
            "valid-samples" => self.valid_samples = parse_usize(key, v)?,
            "is-samples" => self.is_samples = parse_usize(key, v)?,
            "data-dir" => self.data_dir = Some(PathBuf::from(v)),
            "out" => self.out = PathBuf::from(v),
            "jobs" => self.jobs = parse_usize(key, v)?.max(1),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` text: one pair per line, `#` comments.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (key, value) in parse_key_values(text)? {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    /// Defaults, then the file contents, then `overrides` in order.
    pub fn load(
        experiment: Experiment,
        file_text: Option<&str>,
        overrides: &[(String, String)],
    ) -> Result<Self> {
        let mut c = Self::defaults(experiment);
        if let Some(text) = file_text {
            c.apply_text(text)?;
        }
        for (k, v) in overrides {
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn pi_value(&self) -> f64 {
        self.pi.unwrap_or(match self.init {
            Init::Bad => 0.001,
            Init::Good => 0.5,
        })
    }

    /// Rejects invalid combinations before any computation.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.k0.is_empty() || self.gamma.is_empty() || self.seeds.is_empty() {
            return fail("k0, gamma and seed lists must be nonempty".into());
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return fail("seeds must be distinct".into());
        }
        if self.gamma.iter().any(|&g| !(g > 0.0 && g <= 1.0)) {
            return fail(format!(
                "every gamma must lie in (0, 1], got {:?}",
                self.gamma
            ));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return fail(format!("rho must be positive, got {}", self.rho));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if self.iters == 0 {
            return fail("iters must be ≥ 1".into());
        }
        let pi = self.pi_value();
        if !(pi > 0.0 && pi < 1.0) {
            return fail(format!("pi must lie in (0, 1), got {pi}"));
        }
        let allowed: &[StatisticKind] = match self.experiment {
            Experiment::FactorRing => &[
                StatisticKind::Identity,
                StatisticKind::Entropy,
                StatisticKind::Kl,
                StatisticKind::MeanVariance,
            ],
            Experiment::Sbn => &[
                StatisticKind::Identity,
                StatisticKind::Entropy,
                StatisticKind::Kl,
                StatisticKind::MeanVariance,
            ],
            Experiment::Vae => &[StatisticKind::Identity, StatisticKind::Orthogonal],
        };
        if self.method != Method::Vi
            && self.method != Method::Annealing
            && !allowed.contains(&self.statistic)
        {
            return fail(format!(
                "statistic `{}` is not available for the {} experiment",
                self.statistic.name(),
                self.experiment.name()
            ));
        }
        match self.experiment {
            Experiment::FactorRing => {
                if self.truth.rows == 0 || self.truth.rows > 4 {
                    return fail(format!(
                        "factor ring needs 1 ≤ K ≤ 4 features, got {}",
                        self.truth.rows
                    ));
                }
                if !(self.sigma2 > 0.0) || self.points == 0 {
                    return fail("factor ring needs sigma2 > 0 and points ≥ 1".into());
                }
                if self.method == Method::Annealing && self.lambda_mode == LambdaMode::Coordinate {
                    return fail("annealing needs lambda-mode=gradient".into());
                }
            }
            Experiment::Sbn | Experiment::Vae => {
                if self.batch == 0 || self.train_size == 0 || self.valid_size == 0 {
                    return fail("batch, train-size and valid-size must be ≥ 1".into());
                }
                if self.hidden.is_empty() || self.hidden.contains(&0) || self.latent == 0 {
                    return fail("layer sizes must be ≥ 1".into());
                }
                if !(0.0..=1.0).contains(&self.threshold) {
                    return fail(format!(
                        "threshold must lie in [0, 1], got {}",
                        self.threshold
                    ));
                }
            }
        }
        if self.experiment == Experiment::Sbn && self.samples < 2 {
            return fail(format!(
                "the leave-one-out baseline needs samples ≥ 2, got {}",
                self.samples
            ));
        }
        if self.experiment == Experiment::Vae && self.method == Method::Annealing {
            return fail("annealing is only implemented for the factor and SBN experiments".into());
        }
        Ok(())
    }
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut seen = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Parse(format!(
                "line {}: expected `key = value`, got `{raw}`",
                n + 1
            ))
        })?;
        let k = k.trim().to_string();
        if let Some(prev) = seen.insert(k.clone(), n + 1) {
            return Err(Error::Parse(format!(
                "line {}: key `{k}` already set on line {prev}",
                n + 1
            )));
        }
        out.push((k, v.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let text = "# sweep\nmethod = pvi-fast\nk0 = auto\ngamma = 1e-5, 1e-6\nseeds = 3,4\n";
        let c = ExperimentConfig::load(
            Experiment::Sbn,
            Some(text),
            &[
                ("gamma".into(), "1e-9".into()),
                ("init".into(), "good".into()),
            ],
        )
        .unwrap();
        assert_eq!(c.method, Method::PviFast);
        assert_eq!(c.gamma, vec![1e-9]);
        assert_eq!(c.seeds, vec![3, 4]);
        assert_eq!(c.init, Init::Good);
        assert_eq!(c.pi_value(), 0.5);
    }

    #[test]
    fn orthogonal_statistic_rejected_for_factor_model() {
        let err = ExperimentConfig::load(
            Experiment::FactorRing,
            None,
            &[
                ("method".into(), "pvi-fast".into()),
                ("statistic".into(), "orthogonal".into()),
            ],
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn duplicate_seeds_and_empty_grids_rejected() {
        assert!(ExperimentConfig::load(Experiment::Sbn, Some("seeds = 1,1"), &[]).is_err());
        assert!(ExperimentConfig::load(Experiment::Sbn, Some("gamma = ,"), &[]).is_err());
    }

    #[test]
    fn runs_and_seed_expand() {
        let c = ExperimentConfig::load(
            Experiment::FactorRing,
            None,
            &[("runs".into(), "3".into()), ("seed".into(), "10".into())],
        )
        .unwrap();
        assert_eq!(c.seeds, vec![10, 11, 12]);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let e = parse_key_values("a = 1\nnonsense\n")
            .unwrap_err()
            .to_string();
        assert!(e.contains("line 2"), "{e}");
        assert!(parse_key_values("a=1\na=2").is_err());
        assert!(ExperimentConfig::load(Experiment::Vae, Some("bogus = 1"), &[]).is_err());
        assert!(ExperimentConfig::load(Experiment::Vae, Some("experiment = sbn"), &[]).is_err());
    }

    #[test]
    fn truth_matrix_parses() {
        let c = ExperimentConfig::load(Experiment::FactorRing, Some("truth = 1,2; 3,4; 5,6"), &[])
            .unwrap();
        assert_eq!(
            c.truth,
            Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]])
        );
    }
}
