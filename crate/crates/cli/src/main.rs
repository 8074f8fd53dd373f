use std::path::PathBuf;
use std::process::ExitCode;

use ahlm_cli::{run, Command, RunConfig};
use clap::Parser;

#[derive(Parser)]
#[command(name = "ahlm", version, about = "Change-point based temporal action localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set train_dfc.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Root directory that relative config paths resolve against.
    #[arg(long, default_value = ".", global = true)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result =
        RunConfig::load(cli.config.as_deref(), &cli.overrides).and_then(|cfg| run(cli.command, &cfg, &cli.out));
    match result {
        Ok(summary) => {
            println!("{}", summary.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
