//! `vesselx` command-line tool.

mod compare;
mod eval;
mod extract;
mod files;
mod synth;
mod tortuosity;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use vesselx::config::{ExtractionConfig, Preset};
use vesselx::scalespace::WidthSet;

#[derive(Parser)]
#[command(name = "vesselx", version, about = "Extract vessels of chosen thicknesses and measure their tortuosity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract vessel masks from images and probability maps.
    Extract(extract::ExtractArgs),
    /// Score predicted masks against ground truth.
    Eval(eval::EvalArgs),
    /// Compute tortuosity indices of vessel masks.
    Tortuosity(tortuosity::TortuosityArgs),
    /// Compare tortuosity between groups.
    Compare(compare::CompareArgs),
    /// Render a synthetic phantom with per-width ground truth.
    Synth(synth::SynthArgs),
    /// Print or write a preset configuration.
    Config(ConfigArgs),
}

/// Settings shared by commands that read an extraction config.
#[derive(Args, Clone, Debug)]
pub struct ConfigSource {
    /// Config file (`key = value` lines).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in parameter set: drive, sbvpi, reida-r or reida-ee.
    #[arg(long)]
    preset: Option<Preset>,
    /// Vessel widths in pixels, e.g. `7-12` or `4,6,8`.
    #[arg(long)]
    widths: Option<WidthSet>,
    /// Widths whose traces are removed from the result, all above `--widths`.
    #[arg(long)]
    guard_widths: Option<WidthSet>,
    /// Surround size ratio in [0, 1).
    #[arg(long)]
    alpha: Option<f64>,
}

impl ConfigSource {
    pub fn resolve(&self) -> Result<ExtractionConfig> {
        let mut cfg = match (&self.config, self.preset) {
            (Some(path), _) => {
                ExtractionConfig::load(path).with_context(|| format!("reading config {}", path.display()))?
            }
            (None, Some(p)) => p.config(),
            (None, None) => Preset::Drive.config(),
        };
        if let Some(w) = &self.widths {
            cfg.widths = w.clone();
        }
        if let Some(g) = &self.guard_widths {
            cfg.guard_widths = Some(g.clone());
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        cfg.validate().context("invalid configuration")?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct ConfigArgs {
    #[command(flatten)]
    source: ConfigSource,
    /// Destination file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Thread count for batch work; defaults to the available cores.
pub fn job_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let n = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    anyhow::ensure!(n >= 1, "--jobs must be at least 1");
    Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Extract(a) => extract::run(&a),
        Command::Eval(a) => eval::run(&a),
        Command::Tortuosity(a) => tortuosity::run(&a),
        Command::Compare(a) => compare::run(&a),
        Command::Synth(a) => synth::run(&a),
        Command::Config(a) => {
            let cfg = a.source.resolve()?;
            match a.out {
                Some(path) => cfg.save(&path)?,
                None => print!("{}", cfg.to_text()),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
