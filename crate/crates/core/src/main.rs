use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use witten_sampler::config::{ExperimentConfig, ExperimentKind};
use witten_sampler::experiments::{run, WORKERS_ENV};
use witten_sampler::Error;

/// Runs one experiment from a JSON config and writes CSV outputs plus
/// manifest.json to the output directory.
#[derive(Parser, Debug)]
#[command(name = "witten-sampler", version, after_help = format!("Worker threads for beta sweeps: set {WORKERS_ENV}."))]
struct Cli {
    /// gap-scan, mb-compare, lindblad-warmstart, filter-design, sample or weak-convergence
    experiment: String,
    #[arg(long)]
    config: PathBuf,
    /// Replaces the beta list; repeat or comma-separate.
    #[arg(long, value_delimiter = ',')]
    beta: Vec<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let kind = ExperimentKind::parse(&cli.experiment)?;
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    if cfg.experiment != kind {
        return Err(Error::Config {
            field: "experiment".into(),
            message: format!("config is for {}, command line asks for {}", cfg.experiment.name(), kind.name()),
        });
    }
    if !cli.beta.is_empty() {
        cfg.betas = cli.beta.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output = o.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match load(&cli).and_then(|cfg| run(&cfg)) {
        Ok(m) => {
            println!("{} finished in {:.1} s; outputs in {}", m.experiment.name(), m.wall_time_s, m.config.output.display());
            println!("{}", serde_json::to_string(&m.summary).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            // stage errors already carry their cause in the message
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
