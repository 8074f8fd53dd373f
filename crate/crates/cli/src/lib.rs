//! Command implementations behind the `ahlm` binary.

pub mod commands;
pub mod config;
pub mod corpus;
pub mod output;

use std::path::Path;

use anyhow::Result;

pub use config::RunConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::Subcommand)]
pub enum Command {
    /// Generate the synthetic corpus.
    GenData,
    /// Train the change-point detector and the attention classifier.
    Train,
    /// Localize actions in the test split.
    Detect,
    /// Score detections against the test annotations.
    Eval,
    /// Compare analytic gradients with finite differences.
    Gradcheck,
}

/// Runs one command with outputs under `root`; returns a summary for the terminal.
pub fn run(command: Command, cfg: &RunConfig, root: &Path) -> Result<String> {
    match command {
        Command::GenData => commands::gen_data(cfg, root),
        Command::Train => commands::train(cfg, root),
        Command::Detect => commands::detect(cfg, root),
        Command::Eval => commands::eval(cfg, root),
        Command::Gradcheck => commands::gradcheck(cfg, root),
    }
}
