use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Experiment, ExperimentConfig};
use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::model::sbn::Init;
use crate::optim::{Method, TrainRow};
use crate::proximity::{Distance, StatisticKind};

/// The identity of one grid cell: the full configuration plus the cell's
/// own seed, magnitude and decay rate.
#[derive(Serialize)]
struct CellIdentity<'a> {
    config: &'a ExperimentConfig,
    seed: u64,
    k0: String,
    gamma: Option<f64>,
}

/// Hex SHA-256 of the canonical JSON of a cell.
pub fn config_hash(config: &ExperimentConfig, seed: u64, k0: &str, gamma: Option<f64>) -> String {
    let bytes = serde_json::to_vec(&CellIdentity {
        config,
        seed,
        k0: k0.to_string(),
        gamma,
    })
    .expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// End-of-run metrics. Contains no wall time, so identical runs produce
/// identical summaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub experiment: Experiment,
    pub method: Method,
    pub statistic: StatisticKind,
    pub distance: Distance,
    pub init: Init,
    pub seed: u64,
    /// The k0 setting as configured (`auto` or a number).
    pub k0_setting: String,
    /// The magnitude actually used (the starting temperature for annealing).
    pub k0: f64,
    pub gamma: Option<f64>,
    pub iterations: usize,
    pub final_elbo: f64,
    pub validation_elbo: Option<f64>,
    pub marginal_likelihood: Option<f64>,
    pub rmse: Option<f64>,
    /// True and recovered feature means for the factor model.
    pub truth: Option<Matrix>,
    pub estimate: Option<Matrix>,
    pub max_entropy_change: f64,
    pub max_distance: f64,
    pub config_hash: String,
}

impl RunSummary {
    /// Validation ELBO when available, else the final training ELBO.
    pub fn score(&self) -> f64 {
        self.validation_elbo.unwrap_or(self.final_elbo)
    }

    pub fn file_stem(&self) -> String {
        format!(
            "{}-{}-s{}-{}",
            self.experiment.name(),
            self.method.name(),
            self.seed,
            &self.config_hash[..12]
        )
    }
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub summary: RunSummary,
    pub rows: Vec<TrainRow>,
}

fn pretty(summary: &RunSummary) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(summary)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes `<stem>.summary.json` and `<stem>.rows.jsonl` under `dir`. An
/// existing summary with different contents is an error.
pub fn write_record(dir: &Path, record: &RunRecord) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let stem = record.summary.file_stem();
    let summary_path = dir.join(format!("{stem}.summary.json"));
    let bytes = pretty(&record.summary)?;
    if summary_path.exists() && fs::read(&summary_path)? != bytes {
        return Err(Error::Overwrite(summary_path.display().to_string()));
    }
    for w in record.rows.windows(2) {
        if w[1].t <= w[0].t {
            return Err(Error::Config(format!(
                "trajectory rows not increasing at t={}",
                w[1].t
            )));
        }
    }
    let mut rows =
        std::io::BufWriter::new(fs::File::create(dir.join(format!("{stem}.rows.jsonl")))?);
    for row in &record.rows {
        serde_json::to_writer(&mut rows, row)?;
        rows.write_all(b"\n")?;
    }
    rows.flush()?;
    fs::write(&summary_path, bytes)?;
    Ok(summary_path)
}

pub fn read_summary(path: &Path) -> Result<RunSummary> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// Every `*.summary.json` directly under `dir`, sorted by file name.
pub fn read_summaries(dir: &Path) -> Result<Vec<RunSummary>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".summary.json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_summary(p)).collect()
}

/// One line of a sweep report: the best grid cell of one method.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BestCell {
    pub experiment: Experiment,
    pub method: Method,
    pub statistic: StatisticKind,
    pub init: Init,
    pub k0: f64,
    pub gamma: Option<f64>,
    pub seeds: usize,
    /// Mean over seeds of the validation (or final) ELBO.
    pub elbo: f64,
    pub marginal_likelihood: Option<f64>,
    pub rmse_median: Option<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Per method, the grid cell with the best seed-averaged ELBO. Ties go to
/// the smaller k0, then the smaller γ.
pub fn sweep_report(records: &[RunSummary]) -> Vec<BestCell> {
    let mut groups: BTreeMap<(Experiment, &str, &str, bool), Vec<&RunSummary>> = BTreeMap::new();
    for r in records {
        let key = (
            r.experiment,
            r.method.name(),
            r.statistic.name(),
            r.init == Init::Good,
        );
        groups.entry(key).or_default().push(r);
    }
    let mut out = Vec::new();
    for runs in groups.values() {
        type Cell<'a> = ((f64, Option<f64>), Vec<&'a RunSummary>);
        let mut cells: Vec<Cell> = Vec::new();
        for r in runs {
            let key = (r.k0_setting.clone(), r.gamma);
            match cells
                .iter_mut()
                .find(|((_, g), v)| v[0].k0_setting == key.0 && *g == key.1)
            {
                Some((_, v)) => v.push(r),
                None => cells.push(((r.k0, r.gamma), vec![r])),
            }
        }
        let summarize = |((_, gamma), v): &((f64, Option<f64>), Vec<&RunSummary>)| {
            let elbos: Vec<f64> = v.iter().map(|r| r.score()).collect();
            let mls: Option<Vec<f64>> = v.iter().map(|r| r.marginal_likelihood).collect();
            let rmses: Option<Vec<f64>> = v.iter().map(|r| r.rmse).collect();
            let k0s: Vec<f64> = v.iter().map(|r| r.k0).collect();
            BestCell {
                experiment: v[0].experiment,
                method: v[0].method,
                statistic: v[0].statistic,
                init: v[0].init,
                k0: mean(&k0s),
                gamma: *gamma,
                seeds: v.len(),
                elbo: mean(&elbos),
                marginal_likelihood: mls.map(|m| mean(&m)),
                rmse_median: rmses.map(|r| median(&r)),
            }
        };
        let best = cells
            .iter()
            .map(summarize)
            .reduce(|best, c| {
                let better = c.elbo > best.elbo
                    || (c.elbo == best.elbo
                        && (c.k0 < best.k0
                            || (c.k0 == best.k0
                                && c.gamma.unwrap_or(1.0) < best.gamma.unwrap_or(1.0))));
                if better {
                    c
                } else {
                    best
                }
            })
            .expect("groups are nonempty");
        out.push(best);
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// CSV with one row per method.
pub fn report_csv(cells: &[BestCell]) -> String {
    let mut s = String::from(
        "experiment,method,statistic,init,k0,gamma,seeds,elbo,marginal_likelihood,rmse_median\n",
    );
    for c in cells {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            c.experiment.name(),
            c.method.name(),
            c.statistic.name(),
            match c.init {
                Init::Bad => "bad",
                Init::Good => "good",
            },
            c.k0,
            opt(c.gamma),
            c.seeds,
            c.elbo,
            opt(c.marginal_likelihood),
            opt(c.rmse_median),
        ));
    }
    s
}
