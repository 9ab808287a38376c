//! `unlearnrec`: runs the pipeline one stage at a time against a run directory.
//!
//! Exit codes: 0 success, 2 missing prerequisite artifact, 3 numeric abort,
//! 1 anything else.

mod run_dir;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use unlearnrec::config::{parse_config, ExperimentConfig};
use unlearnrec::error::Error;

use run_dir::{RunDir, CONFIG};

#[derive(Parser, Debug)]
#[command(name = "unlearnrec", version, about = "Recommendation unlearning with a pre-trained influence encoder")]
struct Cli {
    /// key=value config file. Defaults to the run directory's config.txt when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one config key, applied after the file (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[arg(long, env = "UNLREC_RUN_DIR", default_value = "run", global = true)]
    run_dir: PathBuf,

    /// Master seed; shorthand for --set seed=N.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Read a user<TAB>item file, re-index ids and split train/test.
    Ingest {
        /// Dataset file; defaults to the config's `dataset`.
        dataset: Option<PathBuf>,
    },
    /// Train the backbone on the clean training split.
    Train,
    /// Inject adversarial edges and train the attacked model.
    Attack,
    /// Pre-train the influence encoder on simulated requests.
    #[command(name = "pretrain-ie")]
    PretrainIe,
    /// Unlearn the adversarial edges with the pre-trained encoder.
    Unlearn,
    /// Unlearn, then fine-tune on the residual graph.
    Finetune,
    /// Retrain from scratch on the residual graph.
    Retrain,
    /// Score every available model and write metrics.csv.
    Evaluate,
    /// Print the table of metrics.csv.
    Report,
}

fn resolve_config(cli: &Cli, rd: &RunDir) -> Result<(ExperimentConfig, Option<PathBuf>)> {
    let saved = rd.path(CONFIG);
    let path = cli.config.clone().or_else(|| saved.exists().then_some(saved));
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    let cfg = parse_config(path.as_deref(), &overrides)?;
    Ok((cfg, path))
}

fn run(cli: &Cli) -> Result<String> {
    let rd = RunDir::new(cli.run_dir.clone());
    if let Command::Report = cli.command {
        return stages::report(&rd);
    }
    let (mut cfg, config_path) = resolve_config(cli, &rd)?;
    if let Command::Ingest { dataset } = &cli.command {
        let raw = dataset.clone().or(cfg.dataset.take());
        cfg.dataset = raw.map(|p| stages::resolve_dataset(&p, config_path.as_deref()));
    }
    let _lock = rd.open()?;
    let summary = match &cli.command {
        Command::Ingest { .. } => stages::ingest(&rd, &cfg),
        Command::Train => stages::train(&rd, &cfg),
        Command::Attack => stages::attack(&rd, &cfg),
        Command::PretrainIe => stages::pretrain(&rd, &cfg),
        Command::Unlearn => stages::unlearn_stage(&rd, &cfg),
        Command::Finetune => stages::finetune_stage(&rd, &cfg),
        Command::Retrain => stages::retrain(&rd, &cfg),
        Command::Evaluate => stages::evaluate(&rd, &cfg),
        Command::Report => unreachable!(),
    }?;
    // Written only on success so a failed command leaves the run's config alone.
    rd.write_text(CONFIG, &cfg.to_text())?;
    rd.write_manifest(&cfg, stages::dataset_hash(&rd).as_deref())?;
    Ok(summary)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::MissingArtifact(_)) => 2,
        Some(e) if e.is_numeric_abort() => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
