use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use propnews::eval::reports_to_text;
use propnews::fusion::FusionMode;
use propnews::pipeline::{run_pipeline, run_stage, ModelFamily, RunConfig, Stage};

#[derive(Parser)]
#[command(name = "propnews", version, about = "Fake news classification from propagation graphs and text")]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory for artifacts and manifests.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    /// Drop articles with empty text before building graphs.
    #[arg(long, global = true)]
    filter_empty_text: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset into <out>/data.
    Synth,
    /// Reconstruct propagation graphs.
    BuildGraphs,
    /// Extract node and graph features.
    Features,
    /// Train document embeddings.
    EmbedText,
    /// Train and test one model family under the evaluation protocol.
    Train {
        #[arg(long, value_enum)]
        model: ModelArg,
    },
    /// Train and test a fusion model.
    Fuse {
        #[arg(long, value_enum)]
        mode: FuseArg,
    },
    /// Score every prediction file and write metric tables.
    Evaluate,
    /// Rebuild summary tables from the run manifests.
    Report,
    /// Every stage in order.
    Run,
    /// Print the resolved configuration as TOML.
    Config,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Gnn,
    Baseline,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum FuseArg {
    Early,
    LateMean,
    LateClassifier,
}

fn resolve_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if cli.filter_empty_text {
        cfg.dataset.filter_empty_text = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = resolve_config(&cli)?;
    let stage = match cli.command {
        Command::Config => {
            print!("{}", cfg.to_toml());
            return Ok(());
        }
        Command::Run => {
            let manifests = run_pipeline(&cfg, &cli.out)?;
            if let Some(last) = manifests.last() {
                print!("{}", reports_to_text(&last.metrics));
            }
            return Ok(());
        }
        Command::Synth => Stage::Synth,
        Command::BuildGraphs => Stage::BuildGraphs,
        Command::Features => Stage::Features,
        Command::EmbedText => Stage::EmbedText,
        Command::Train { model } => Stage::Train(match model {
            ModelArg::Gnn => ModelFamily::Gnn,
            ModelArg::Baseline => ModelFamily::Baseline,
            ModelArg::Text => ModelFamily::Text,
        }),
        Command::Fuse { mode } => Stage::Fuse(match mode {
            FuseArg::Early => FusionMode::Early,
            FuseArg::LateMean => FusionMode::LateMean,
            FuseArg::LateClassifier => FusionMode::LateClassifier,
        }),
        Command::Evaluate => Stage::Evaluate,
        Command::Report => Stage::Report,
    };
    let manifest = run_stage(stage, &cfg, &cli.out)?;
    for o in &manifest.outputs {
        log::info!("wrote {}", cli.out.join(o).display());
    }
    if !manifest.metrics.is_empty() {
        print!("{}", reports_to_text(&manifest.metrics));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
