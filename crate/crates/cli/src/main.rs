use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use smspace_cli::{pipeline, with_workers, CliError, CliResult, ExperimentConfig, RunDir, Stage};

#[derive(Parser)]
#[command(name = "smspace", version, about = "Sensorimotor kernel-manifold experiments")]
struct Cli {
    /// TOML experiment config; defaults apply to every missing field.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    workers: Option<u32>,
    /// Run directory.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    /// Skip stages whose inputs and settings are unchanged.
    #[arg(long, global = true, value_enum, default_value_t = Toggle::On)]
    stage_cache: Toggle,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Sample kernel manifolds inside the working space.
    Explore,
    /// Pairwise Hausdorff distances between the manifolds.
    Metric,
    /// CCA projection of the distance matrix.
    Embed,
    /// Invariance, topology and embedding checks.
    Analyze,
    /// Toy agent experiments.
    Toy,
    /// Every stage listed in the config, in order.
    All,
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    cfg.validate()?;
    let stages = match cli.command {
        Command::Explore => vec![Stage::Explore],
        Command::Metric => vec![Stage::Metric],
        Command::Embed => vec![Stage::Embed],
        Command::Analyze => vec![Stage::Analyze],
        Command::Toy => vec![Stage::Toy],
        Command::All => cfg.stages.clone(),
    };
    let mut dir = RunDir::open(&cli.out, cfg.hash())?;
    let config_json = serde_json::to_vec_pretty(&cfg).expect("config serializes");
    dir.write("config.json", &config_json)?;
    dir.save()?;
    let use_cache = cli.stage_cache == Toggle::On;
    with_workers(cli.workers.map(|w| w as usize), || {
        pipeline::run_stages(&cfg, &mut dir, &stages, use_cache)
    })?
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code: CliError = e;
            ExitCode::from(code.exit_code() as u8)
        }
    }
}
