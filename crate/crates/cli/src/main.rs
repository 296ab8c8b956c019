use bodyshape_core::pipeline::{
    cmd_encode, cmd_regress, cmd_replicate, cmd_synth, cmd_train, status_report, Manifest, RunConfig,
};
use bodyshape_core::{Error, Result};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Synthetic body-shape cohorts, graph autoencoder embeddings and the income
/// regressions built on them.
#[derive(Parser)]
#[command(name = "bodyshape", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a cohort: meshes, cohort.csv and summary.csv.
    Synth(Common),
    /// Train one autoencoder per group (and the optional dimension sweep).
    Train(Common),
    /// Encode the cohort and align components with height, BMI and hip-to-waist ratio.
    Encode(Common),
    /// Run the enabled regression analyses.
    Regress(Common),
    /// synth, train, encode and regress in one go.
    Replicate(Common),
}

#[derive(Args)]
struct Common {
    /// Flat key=value config file. Without it the defaults are used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn resolve(&self) -> Result<(RunConfig, PathBuf)> {
        let cfg = match &self.config {
            Some(path) => RunConfig::read(path, self.seed)?,
            None => {
                let seed = self
                    .seed
                    .ok_or_else(|| Error::Config("a seed is required (--seed or --config)".into()))?;
                RunConfig::new(seed)
            }
        };
        let out = self
            .out
            .clone()
            .or_else(|| cfg.out.clone())
            .ok_or_else(|| Error::Config("an output directory is required (--out or `out` key)".into()))?;
        Ok((cfg, out))
    }
}

type Cmd = fn(&RunConfig, &std::path::Path) -> Result<Manifest>;

fn run(cli: Cli) -> Result<Manifest> {
    let (cmd, common): (Cmd, &Common) = match &cli.command {
        Command::Synth(c) => (cmd_synth, c),
        Command::Train(c) => (cmd_train, c),
        Command::Encode(c) => (cmd_encode, c),
        Command::Regress(c) => (cmd_regress, c),
        Command::Replicate(c) => (cmd_replicate, c),
    };
    let (cfg, out) = common.resolve()?;
    cmd(&cfg, &out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(m) => {
            print!("{}", status_report(&m));
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
