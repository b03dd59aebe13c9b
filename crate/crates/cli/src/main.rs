//! `pvi`: run proximity variational inference experiments and summarize sweeps.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use pvi_core::harness::{self, Experiment, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(
    name = "pvi",
    version,
    about = "Proximity variational inference experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Binary latent factor model from initializations on a ring around the truth.
    FactorRing(RunArgs),
    /// Sigmoid belief network on binarized digits.
    Sbn(RunArgs),
    /// Variational autoencoder on binarized digits.
    Vae(RunArgs),
    /// Best-per-method table over the run summaries in a directory.
    Report {
        /// Directory containing `*.summary.json` files.
        dir: PathBuf,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Flat `key = value` configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// vi, pvi-fast, pvi-inner or annealing.
    #[arg(long)]
    method: Option<String>,
    /// identity, entropy, kl, mean-variance or orthogonal.
    #[arg(long)]
    statistic: Option<String>,
    /// inverse-huber or squared-difference.
    #[arg(long)]
    distance: Option<String>,
    /// Magnitude grid, comma separated; `auto` uses the initial |ELBO|.
    #[arg(long)]
    k0: Option<String>,
    /// Exponential decay rates, comma separated.
    #[arg(long)]
    gamma: Option<String>,
    /// exponential, linear or constant.
    #[arg(long)]
    decay: Option<String>,
    /// Anchor moving-average decay.
    #[arg(long)]
    alpha: Option<String>,
    /// Step size.
    #[arg(long)]
    rho: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    /// Explicit seed list, comma separated.
    #[arg(long)]
    seeds: Option<String>,
    /// Number of seeded replicates (ring positions for factor-ring).
    #[arg(long)]
    runs: Option<String>,
    /// First seed of the replicate range.
    #[arg(long)]
    seed: Option<String>,
    /// good or bad.
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    inner_iters: Option<String>,
    #[arg(long)]
    noise_std: Option<String>,
    /// Output directory for summaries, trajectories and the sweep CSV.
    #[arg(long)]
    out: Option<String>,
    /// Runs executed concurrently.
    #[arg(long)]
    jobs: Option<String>,
    /// Directory holding the IDX image files.
    #[arg(long, env = "PVI_DATA_DIR")]
    data_dir: Option<String>,
    /// Any other configuration key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut out: Vec<(String, String)> = Vec::new();
        // `runs` before `seed` so that `--runs 5 --seed 10` gives 10..15
        let flags = [
            ("method", &self.method),
            ("statistic", &self.statistic),
            ("distance", &self.distance),
            ("k0", &self.k0),
            ("gamma", &self.gamma),
            ("decay", &self.decay),
            ("alpha", &self.alpha),
            ("rho", &self.rho),
            ("iters", &self.iters),
            ("batch", &self.batch),
            ("seeds", &self.seeds),
            ("runs", &self.runs),
            ("seed", &self.seed),
            ("init", &self.init),
            ("inner-iters", &self.inner_iters),
            ("noise-std", &self.noise_std),
            ("out", &self.out),
            ("jobs", &self.jobs),
            ("data-dir", &self.data_dir),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                out.push((key.to_string(), v.clone()));
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }
}

fn run(experiment: Experiment, args: &RunArgs) -> Result<()> {
    let text = args
        .config
        .as_ref()
        .map(|p| std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())))
        .transpose()?;
    let config = ExperimentConfig::load(experiment, text.as_deref(), &args.overrides()?)?;
    log::info!(
        "{}: method {} over {} cells into {}",
        experiment.name(),
        config.method.name(),
        harness::cells(&config).len(),
        config.out.display()
    );
    let out = harness::run(&config)?;
    for (summary, path) in out.records.iter().zip(&out.summaries) {
        let rmse = summary
            .rmse
            .map(|r| format!(" rmse={r:.4}"))
            .unwrap_or_default();
        println!("{} elbo={:.4}{rmse}", path.display(), summary.score());
    }
    println!("report: {}", out.report.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::FactorRing(args) => run(Experiment::FactorRing, args),
        Command::Sbn(args) => run(Experiment::Sbn, args),
        Command::Vae(args) => run(Experiment::Vae, args),
        Command::Report { dir, out } => {
            let csv = harness::report_dir(dir)?;
            match out {
                Some(path) => std::fs::write(path, csv)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => print!("{csv}"),
            }
            Ok(())
        }
    }
}
