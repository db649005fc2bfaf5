//! `calabi-lab`: batch runner for the Calabi flow experiments.
//!
//! Exit status: 0 when the experiment completed, 2 when a flow ended in a
//! terminal state (blowup or stiffness), 1 on configuration or I/O errors.

mod config;
mod experiments;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigFile, ExperimentConfig, ExperimentKind};
use experiments::Outcome;

#[derive(Parser)]
#[command(name = "calabi-lab", version, about = "Calabi flow experiments on flat complex tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Flow a smooth potential and log energies and curvature bounds.
    Flow(Overrides),
    /// Energies of a potential, or of the approximation sequence of weak data.
    Energies(Overrides),
    /// Legendre transform and its inverse, with the round-trip error.
    Legendre(Overrides),
    /// Mollify a potential at radius h.
    Mollify(Overrides),
    /// Constants ledger for special convex functions of type (M, C0, CE).
    Bounds(Overrides),
    /// Flow the smoothed quartic approximations for m = 1, 2, 4, ...
    SmoothQuartic(Overrides),
}

#[derive(Args)]
struct Overrides {
    /// Flat TOML file of settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid points per axis (power of two).
    #[arg(long = "N")]
    points: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Curvature-bound threshold.
    #[arg(long)]
    lambda: Option<f64>,
    /// `flat`, `cosine`, `quartic-example` or a snapshot path.
    #[arg(long)]
    initial: Option<String>,
    /// Largest approximation index.
    #[arg(long)]
    m: Option<usize>,
    /// Mollifier radius.
    #[arg(long)]
    h: Option<f64>,
}

impl Command {
    fn split(self) -> (ExperimentKind, Overrides) {
        match self {
            Command::Flow(o) => (ExperimentKind::Flow, o),
            Command::Energies(o) => (ExperimentKind::Energies, o),
            Command::Legendre(o) => (ExperimentKind::Legendre, o),
            Command::Mollify(o) => (ExperimentKind::Mollify, o),
            Command::Bounds(o) => (ExperimentKind::Bounds, o),
            Command::SmoothQuartic(o) => (ExperimentKind::SmoothQuartic, o),
        }
    }
}

fn resolve(kind: ExperimentKind, o: Overrides) -> Result<ExperimentConfig, config::ConfigError> {
    let base = match &o.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let flags = ConfigFile {
        points: o.points,
        dim: o.dim,
        t_end: o.t_end,
        sigma: o.sigma,
        lambda: o.lambda,
        initial: o.initial,
        m: o.m,
        h: o.h,
        out: o.out,
        ..ConfigFile::default()
    };
    ExperimentConfig::resolve(kind, base.overlay(flags))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (kind, overrides) = cli.command.split();
    let cfg = match resolve(kind, overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("calabi-lab: {e}");
            return ExitCode::from(1);
        }
    };
    match experiments::run(&cfg) {
        Ok(Outcome::Completed) => {
            eprintln!("calabi-lab {}: completed, artifacts in {}", kind.name(), cfg.out.display());
            ExitCode::SUCCESS
        }
        Ok(Outcome::Terminal(status)) => {
            eprintln!("calabi-lab {}: {status}, artifacts in {}", kind.name(), cfg.out.display());
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("calabi-lab {}: {e}", kind.name());
            ExitCode::from(1)
        }
    }
}
