//! Command-line front end for the local limit theorem laboratory.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use llt_core::metrics::Format;

use crate::commands::{Outputs, Status};
use crate::config::{Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "llt", version, about = "Local limit theorem numerical laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the moment and frequency conditions and build the dominating function.
    Check(Common),
    /// Convergence study of Phi_N toward the Gaussian limit over N_list.
    Converge(Common),
    /// Compute Phi_N with the configured method.
    Convolve(Common),
    /// Verify the dominating function over N_list and (0, y_max].
    Dominate(Common),
    /// Monte Carlo histogram of the scaled sum, compared with the spectral Phi_N.
    Montecarlo(Common),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write only this artifact type; both by default.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long)]
    pub sigma: Option<u32>,
    #[arg(long = "delta-rel")]
    pub delta_rel: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Order N for convolve and montecarlo.
    #[arg(long = "N")]
    pub n: Option<u64>,
    /// Compare against variance gamma instead of sigma * gamma.
    #[arg(long = "strict-paper")]
    pub strict_paper: bool,
    /// Lift the cost caps on the direct method.
    #[arg(long)]
    pub force: bool,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            sigma: self.sigma,
            delta_rel: self.delta_rel,
            seed: self.seed,
            out: self.out.clone(),
            n: self.n,
            strict_paper: self.strict_paper,
        }
    }

    fn outputs(&self) -> Outputs {
        Outputs::new(self.format.map(|f| match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        }))
    }
}

pub fn run(cli: &Cli) -> anyhow::Result<Status> {
    let common = match &cli.command {
        Command::Check(c) | Command::Converge(c) | Command::Convolve(c) | Command::Dominate(c) | Command::Montecarlo(c) => c,
    };
    let cfg = RunConfig::load(&common.config, &common.overrides())?;
    let out = common.outputs();
    match &cli.command {
        Command::Check(_) => commands::check(&cfg, out),
        Command::Converge(_) => commands::converge(&cfg, out),
        Command::Convolve(c) => commands::convolve(&cfg, out, c.force),
        Command::Dominate(_) => commands::dominate(&cfg, out),
        Command::Montecarlo(_) => commands::montecarlo(&cfg, out),
    }
}
