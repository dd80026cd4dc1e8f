mod commands;
mod config;
mod pgm;

use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

/// Single-line error reported as `error: <message>`.
#[derive(Debug)]
pub struct CliError(pub String);

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<fistanet::Error> for CliError {
    fn from(e: fistanet::Error) -> Self {
        CliError(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "fistanet", version, about = "Model-based reconstruction with FISTA solvers and an unrolled FISTA network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the operator and the train/val/test splits.
    GenData(Common),
    /// Compute the gradient weight matrix and its residual report.
    Weights(Common),
    /// Reconstruct the test split with one method.
    Solve(Common),
    /// Train the unrolled network.
    Train(Common),
    /// Compare methods on the test split.
    Eval(Common),
}

#[derive(Args)]
struct Common {
    /// key=value config file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override one config key (repeatable).
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    checkpoint: Option<String>,
    #[arg(long)]
    data_dir: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut pairs = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError(format!("cannot read config {}: {e}", p.display())))?;
                config::parse_text(&text)?
            }
            None => Vec::new(),
        };
        for s in &self.set {
            pairs.push(config::parse_assignment(s)?);
        }
        let flags = [
            ("layers", self.layers.map(|v| v.to_string())),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("mode", self.mode.clone()),
            ("solver", self.solver.clone()),
            ("checkpoint", self.checkpoint.clone()),
            ("data_dir", self.data_dir.clone()),
            ("out_dir", self.out_dir.clone()),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                pairs.push((k.to_string(), v));
            }
        }
        RunConfig::from_pairs(&pairs)
    }
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::GenData(c) => commands::gen_data(&c.resolve()?),
        Command::Weights(c) => commands::weights(&c.resolve()?),
        Command::Solve(c) => commands::solve(&c.resolve()?),
        Command::Train(c) => commands::train_cmd(&c.resolve()?),
        Command::Eval(c) => commands::eval(&c.resolve()?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let msg = e.0.replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
