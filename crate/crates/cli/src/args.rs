use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Utilization-minimizing service policies for a queue whose server slows
/// down with sustained work.
#[derive(Debug, Parser)]
#[command(name = "restsched", version)]
pub struct Cli {
    /// Server configuration (TOML). Defaults to the built-in reference
    /// instance.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Directory for output files; created if missing.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Service and utilization rates of every threshold policy.
    Rates,
    /// Minimal utilization as a function of the required service rate.
    Frontier,
    /// Build a stabilizing policy within a utilization gap of the optimum.
    Policy(PolicyArgs),
    /// Simulate the queue under a lifted policy and compare with the exact
    /// truncated solution.
    Simulate(SimulateArgs),
    /// Run the reproduction suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct PolicyArgs {
    #[arg(long)]
    pub lambda: f64,
    /// Allowed utilization excess over the optimum.
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    /// Fix the LP floor instead of searching for it; needs --nu-bar.
    #[arg(long, requires = "nu_bar")]
    pub eps: Option<f64>,
    /// Fix the service rate instead of searching for it; needs --eps.
    #[arg(long, requires = "eps")]
    pub nu_bar: Option<f64>,
    /// Initial queue cap of the exact solver.
    #[arg(long, default_value_t = 512)]
    pub qmax: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub lambda: f64,
    /// Threshold of the simulated policy; defaults to the rate-maximizing
    /// one. Ignored when --nu-bar is given.
    #[arg(long)]
    pub tau: Option<usize>,
    /// Simulate the LP policy at this service rate instead of a threshold.
    #[arg(long)]
    pub nu_bar: Option<f64>,
    /// LP floor used with --nu-bar.
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub horizon: u64,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 512)]
    pub qmax: usize,
    /// Write a per-step trace of the first replication (needs --out).
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 1_000_000)]
    pub horizon: u64,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
}
