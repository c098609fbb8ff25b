use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use losscorr::harness::{
    corrected_loss, estimate_stage, prepare, run, sweep, sweep_csv, train_network, ExperimentConfig,
    SweepGrid, TSource,
};
use losscorr::net::clean_accuracy;
use losscorr::{Error, EstimatorMode, LossMode, MlpNetwork, NoiseKind, NoiseMatrix, Result};

#[derive(Parser)]
#[command(name = "losscorr", version, about = "Loss correction under class-conditional label noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corrupt training labels and write them out with the true T
    Inject(Overrides),
    /// Train one network with the configured loss (T from truth or file)
    Train(Overrides),
    /// Stage-1 plain training followed by T̂ estimation
    Estimate(Overrides),
    /// Clean-test accuracy of a saved checkpoint
    Evaluate {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        model: PathBuf,
    },
    /// Full two-stage run with report
    Run(Overrides),
    /// Grid over noise levels, losses, T sources and seeds
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_delimiter = ',')]
        levels: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        losses: Vec<LossMode>,
        #[arg(long, value_delimiter = ',')]
        t_sources: Vec<TSource>,
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
}

#[derive(Args, Clone)]
struct Overrides {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    noise_kind: Option<NoiseKind>,
    #[arg(long)]
    noise_level: Option<f64>,
    #[arg(long)]
    loss: Option<LossMode>,
    /// truth, estimate or file=PATH
    #[arg(long)]
    t_source: Option<TSource>,
    #[arg(long)]
    identity_mix: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    estimator_mode: Option<EstimatorMode>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    warm_start: bool,
}

#[derive(Deserialize, Default)]
struct SweepSection {
    #[serde(default)]
    sweep: Option<SweepGrid>,
}

impl Overrides {
    fn config_text(&self) -> Result<Option<String>> {
        self.config
            .as_ref()
            .map(|p| std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display()))))
            .transpose()
    }

    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match self.config_text()? {
            Some(text) => ExperimentConfig::from_toml_str(&text)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.noise_kind {
            cfg.noise.kind = v;
        }
        if let Some(v) = self.noise_level {
            cfg.noise.level = v;
        }
        if let Some(v) = self.loss {
            cfg.loss = v;
        }
        if let Some(v) = &self.t_source {
            cfg.t_source = v.clone();
        }
        if let Some(v) = self.identity_mix {
            cfg.identity_mix = v;
        }
        if let Some(v) = self.alpha {
            cfg.estimator.alpha = v;
        }
        if let Some(v) = self.estimator_mode {
            cfg.estimator.mode = v;
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
            if let Some(s1) = cfg.stage1_train.as_mut() {
                s1.epochs = v;
            }
        }
        if let Some(v) = &self.out {
            cfg.out_dir = Some(v.clone());
        }
        if self.warm_start {
            cfg.warm_start = true;
        }
        Ok(cfg)
    }
}

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        e @ Error::Stage { .. } => e,
        other => Error::Stage {
            stage: name,
            source: Box::new(other),
        },
    })
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Inject(o) => {
            let cfg = stage("config", o.resolve())?;
            let data = prepare(&cfg)?;
            let dir = stage("write", out_dir(&cfg))?;
            stage("write", data.train.write_noisy_csv(&dir.join("noisy_train.csv")))?;
            stage("write", data.train.write_csv(&dir.join("clean_train.csv")))?;
            stage("write", data.test.write_csv(&dir.join("test.csv")))?;
            stage("write", data.truth.write_csv(&dir.join("t_true.csv")))?;
            let flipped = data
                .train
                .clean_labels()
                .iter()
                .zip(data.train.noisy_labels())
                .filter(|(a, b)| a != b)
                .count();
            println!(
                "{} training labels, {} flipped ({:.4})",
                data.train.len(),
                flipped,
                flipped as f64 / data.train.len() as f64
            );
        }
        Command::Train(o) => {
            let cfg = stage("config", o.resolve())?;
            let data = prepare(&cfg)?;
            let t = match (&cfg.t_source, cfg.loss) {
                (_, LossMode::Plain) => None,
                (TSource::Truth, _) => Some(data.truth.clone()),
                (TSource::File(p), _) => Some(stage("load_t", NoiseMatrix::read_csv(p))?),
                (TSource::Estimate, _) => {
                    return Err(Error::Config(
                        "train takes T from truth or a file; use `run` to estimate it".into(),
                    ))
                }
            };
            let loss = stage("correct", corrected_loss(cfg.loss, t, cfg.identity_mix))?;
            let mut tc = cfg.train.clone();
            tc.seed = cfg.seed;
            let outcome = stage("train", train_network(&cfg, &data.train, &loss, &tc, None, cfg.seed))?;
            let acc = stage("evaluate", clean_accuracy(&outcome.network, &data.test))?;
            let dir = stage("write", out_dir(&cfg))?;
            stage("write", write(&dir.join("model.json"), &outcome.network.to_json()?))?;
            stage("write", write(&dir.join("history.csv"), &outcome.history.to_csv()))?;
            println!("test_accuracy {acc}");
        }
        Command::Estimate(o) => {
            let cfg = stage("config", o.resolve())?;
            let data = prepare(&cfg)?;
            let (outcome, est) = estimate_stage(&cfg, &data.train)?;
            let dir = stage("write", out_dir(&cfg))?;
            stage("write", est.write(&dir, "t_hat", &cfg.estimator))?;
            stage("write", write(&dir.join("model_stage1.json"), &outcome.network.to_json()?))?;
            stage("write", write(&dir.join("history_stage1.csv"), &outcome.history.to_csv()))?;
            let (max_abs, mean_abs) = est.error_against(&data.truth);
            for w in &est.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", est.matrix.to_csv());
            println!("max_abs_error {max_abs} mean_abs_error {mean_abs}");
        }
        Command::Evaluate { overrides, model } => {
            let cfg = stage("config", overrides.resolve())?;
            let text = stage(
                "load_model",
                std::fs::read_to_string(&model).map_err(|e| Error::Config(format!("{}: {e}", model.display()))),
            )?;
            let net = stage("load_model", MlpNetwork::from_json(&text))?;
            let data = prepare(&cfg)?;
            let acc = stage("evaluate", clean_accuracy(&net, &data.test))?;
            println!("test_accuracy {acc}");
        }
        Command::Run(o) => {
            let cfg = stage("config", o.resolve())?;
            let outcome = run(&cfg)?;
            let dir = stage("write", out_dir(&cfg))?;
            stage("write", outcome.write_to(&dir))?;
            if let Some(est) = &outcome.estimate {
                for w in &est.warnings {
                    eprintln!("warning: {w}");
                }
            }
            println!("test_accuracy {}", outcome.report.test_accuracy);
        }
        Command::Sweep {
            overrides,
            levels,
            losses,
            t_sources,
            seeds,
            workers,
        } => {
            let cfg = stage("config", overrides.resolve())?;
            let from_file = match overrides.config_text()? {
                Some(text) => toml::from_str::<SweepSection>(&text)
                    .map_err(|e| Error::Config(e.to_string()))?
                    .sweep,
                None => None,
            };
            let mut grid = from_file.unwrap_or(SweepGrid {
                noise_levels: vec![cfg.noise.level],
                loss_modes: vec![cfg.loss],
                t_sources: vec![],
                seeds: vec![cfg.seed],
            });
            if !levels.is_empty() {
                grid.noise_levels = levels;
            }
            if !losses.is_empty() {
                grid.loss_modes = losses;
            }
            if !t_sources.is_empty() {
                grid.t_sources = t_sources;
            }
            if !seeds.is_empty() {
                grid.seeds = seeds;
            }
            let rows = stage("sweep", sweep(&cfg, &grid, workers))?;
            let csv = sweep_csv(&rows);
            let dir = stage("write", out_dir(&cfg))?;
            stage("write", write(&dir.join("sweep.csv"), &csv))?;
            print!("{csv}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
