use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mdfeat_bench::config::{Environment, ExperimentConfig, Learner, Task};
use mdfeat_bench::runs;
use mdfeat_bench::selection::{Replay, EXAMPLE1};
use mdfeat_bench::Result;
use mdfeat_core::features::Scheme;

#[derive(Parser)]
#[command(name = "mdfeat", version, about = "Simulate, select feature sizes, train and evaluate UWB zone classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the train/test datasets of every SNR cell and repeat.
    Simulate(Common),
    /// Print the per-F criterion table and F* of every training split.
    SelectSize(Common),
    /// Fit the configured learner on every cell.
    Train(Common),
    /// Apply the fitted models and write predictions and metrics.
    Evaluate(Common),
    /// simulate, train and evaluate in one go.
    Run(Common),
    /// Compare the P-NN branch variants under matched seeds.
    Ablate(Common),
    /// Replay the worked selection example (or another replay file).
    Example1 {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Also write the table to this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Command-line values override the config file, which overrides defaults.
#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    model_seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    snr_db: Option<Vec<f64>>,
    /// Line-of-sight condition (`true` or `false`).
    #[arg(long)]
    los: Option<bool>,
    #[arg(long, value_parser = parse_env)]
    environment: Option<Environment>,
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long, value_parser = parse_learner)]
    learner: Option<Learner>,
    #[arg(long, value_parser = parse_task)]
    task: Option<Task>,
    /// Fixed feature size; `auto` runs the selection criterion.
    #[arg(long)]
    feature_size: Option<String>,
    #[arg(long)]
    d_train: Option<usize>,
    #[arg(long)]
    d_test: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    n_angular: Option<usize>,
    #[arg(long)]
    n_radial: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    knn_k: Option<usize>,
}

fn parse_env(s: &str) -> Result<Environment, String> {
    match s {
        "residential" | "res" => Ok(Environment::Residential),
        "outdoor" | "out" => Ok(Environment::Outdoor),
        _ => Err(format!("unknown environment {s:?}")),
    }
}

fn parse_learner(s: &str) -> Result<Learner, String> {
    match s {
        "pnn" => Ok(Learner::Pnn),
        "fcl" => Ok(Learner::Fcl),
        "knn" => Ok(Learner::Knn),
        _ => Err(format!("unknown learner {s:?}")),
    }
}

fn parse_task(s: &str) -> Result<Task, String> {
    match s {
        "classification" => Ok(Task::Classification),
        "regression" => Ok(Task::Regression),
        _ => Err(format!("unknown task {s:?}")),
    }
}

impl Common {
    fn resolve(self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = self.$field { c.$field = v; })* };
        }
        set!(
            seed,
            model_seed,
            out,
            snr_db,
            los,
            environment,
            scheme,
            learner,
            task,
            d_train,
            d_test,
            repeats,
            n_angular,
            n_radial,
            knn_k
        );
        if let Some(f) = self.feature_size {
            c.feature_size = match f.as_str() {
                "auto" => None,
                n => Some(
                    n.parse()
                        .map_err(|_| mdfeat_bench::Error::Config(format!("feature size {n:?} is not a number")))?,
                ),
            };
        }
        if let Some(v) = self.epochs {
            c.training.epochs = v;
        }
        if let Some(v) = self.batch_size {
            c.training.batch_size = v;
        }
        if let Some(v) = self.lr {
            c.training.lr = v;
        }
        c.validate()?;
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => runs::simulate(&a.resolve()?),
        Command::SelectSize(a) => {
            for (snr, r, rep) in runs::select_size(&a.resolve()?)? {
                println!("snr {snr} dB, repeat {r}: F* = {}", rep.f_star.unwrap_or(0));
            }
            Ok(())
        }
        Command::Train(a) => runs::train(&a.resolve()?),
        Command::Evaluate(a) => report(&runs::evaluate(&a.resolve()?)?),
        Command::Run(a) => {
            let cfg = a.resolve()?;
            runs::simulate(&cfg)?;
            runs::train(&cfg)?;
            report(&runs::evaluate(&cfg)?)
        }
        Command::Ablate(a) => {
            for rep in runs::ablate(&a.resolve()?)? {
                for row in &rep.rows {
                    println!("snr {} dB  {:<10} {:.4}", rep.snr_db, row.variant, row.mean);
                }
            }
            Ok(())
        }
        Command::Example1 { input, out } => {
            let text = match &input {
                Some(p) => {
                    std::fs::read_to_string(p).map_err(|source| mdfeat_bench::Error::Io { path: p.clone(), source })?
                }
                None => EXAMPLE1.to_string(),
            };
            let replay = Replay::from_toml(&text)?;
            let report = replay.run()?;
            let mut table = Vec::new();
            report.write_table(&mut table, replay.unit).expect("in-memory write");
            print!("{}", String::from_utf8_lossy(&table));
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)
                    .map_err(|source| mdfeat_bench::Error::Io { path: dir.clone(), source })?;
                let path = dir.join("example1.txt");
                std::fs::write(&path, &table).map_err(|source| mdfeat_bench::Error::Io { path, source })?;
            }
            Ok(())
        }
    }
}

fn report(summary: &[runs::SnrSummary]) -> Result<()> {
    for s in summary {
        match s.mean_rmse {
            Some(e) => println!("snr {} dB: rate {:.4}, rmse {:.3} m", s.snr_db, s.mean_rate, e),
            None => println!("snr {} dB: rate {:.4}", s.snr_db, s.mean_rate),
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
