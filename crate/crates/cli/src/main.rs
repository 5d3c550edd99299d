use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use risgan_core::dataset::Link;
use risgan_core::harness::{self, Profile, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "risgan",
    version,
    about = "CGAN channel estimation for RIS-assisted ISAC"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Key=value config file (`#` comments).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true, value_enum, default_value_t = ProfileArg::Desk)]
    profile: ProfileArg,

    /// Output directory for datasets, checkpoints and reports.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[arg(long, global = true, value_enum)]
    link: Option<LinkArg>,

    /// Extra `key=value` settings, applied last.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the train/test dataset split.
    Generate,
    /// Train the CGAN and the FFN/ELM baselines on the stored split.
    Train,
    /// Report NMSE over the test SNR grid.
    Evaluate,
    /// Retrain and evaluate over `sweep_values` of `sweep_variable`.
    Sweep,
    /// Report closed-form and counted arithmetic cost.
    Complexity,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProfileArg {
    Desk,
    Full,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LinkArg {
    Sensing,
    Comm,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let profile = match cli.profile {
        ProfileArg::Desk => Profile::Desk,
        ProfileArg::Full => Profile::Full,
    };
    let mut overrides = Vec::new();
    if let Some(link) = cli.link {
        let name = match link {
            LinkArg::Sensing => Link::Sensing.name(),
            LinkArg::Comm => Link::Communication.name(),
        };
        overrides.push(("link".to_string(), name.to_string()));
    }
    if let Some(seed) = cli.seed {
        overrides.push(("seed".to_string(), seed.to_string()));
    }
    for item in &cli.overrides {
        let Some((key, value)) = item.split_once('=') else {
            bail!("--set expects KEY=VALUE, got `{item}`");
        };
        overrides.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(harness::parse_config(
        cli.config.as_deref(),
        profile,
        &overrides,
    )?)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let config = load_config(&cli).context("invalid configuration")?;
    let out = cli.out.as_path();
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let written = match cli.command {
        Command::Generate => harness::cmd_generate(&config, out)?,
        Command::Train => harness::cmd_train(&config, out)?,
        Command::Evaluate => harness::cmd_evaluate(&config, out)?,
        Command::Sweep => vec![harness::cmd_sweep(&config, out)?],
        Command::Complexity => vec![harness::cmd_complexity(&config, out)?],
    };
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}
