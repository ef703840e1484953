mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Error paired with its exit status.
#[derive(Debug)]
pub enum Failure {
    /// Bad input: config, flags or parameter ranges.
    Usage(anyhow::Error),
    /// Infeasible LP or an arrival rate that cannot be stabilized.
    Infeasible(anyhow::Error),
    /// At least one verification check failed.
    Verify,
    Other(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Infeasible(_) => 3,
            Failure::Verify => 4,
            Failure::Other(_) => 1,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

/// Error chain joined by ": ", skipping causes already quoted by the
/// message above them.
fn describe(e: &anyhow::Error) -> String {
    let mut text = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !text.contains(&c) {
            text = format!("{text}: {c}");
        }
    }
    text
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = commands::load_spec(cli.config.as_deref()).and_then(|spec| {
        let out = cli.out.as_deref();
        match &cli.command {
            Command::Rates => commands::rates(&spec, out),
            Command::Frontier => commands::frontier(&spec, out),
            Command::Policy(a) => commands::policy(&spec, a, out),
            Command::Simulate(a) => commands::simulate(&spec, a, out),
            Command::Verify(a) => commands::verify(&spec, a, out),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(e) | Failure::Infeasible(e) | Failure::Other(e) => eprintln!("error: {}", describe(e)),
                Failure::Verify => eprintln!("verification failed"),
            }
            ExitCode::from(f.code())
        }
    }
}
