//! `kolmogorov` command-line front end.
//!
//! Exit status: 0 on success, 1 for invalid input or configuration, 2 when
//! the numerics fail (tuning, eigensolver, ill-conditioned solve).

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] kolmogorov::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "kolmogorov", version, about = "Kolmogorov operators, spectra, solves and particle dynamics from point samples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Samples CSV, one point per row; drawn from `data.distribution` when absent.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Run configuration JSON; defaults apply to every missing key.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker thread cap (also read from KOLMOGOROV_THREADS).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bandwidth tuning curves for the density and operator kernels.
    Tune(Common),
    /// Kernel density estimate at the samples.
    Density(Common),
    /// Leading eigenpairs of the discrete operator.
    Eigs(Common),
    /// Spectral solve of `L f = g`.
    Solve(Common),
    /// Gradient field of the solution or of a configured function.
    Gradient(Common),
    /// Particle evolution under the configured velocity, diffusion and source.
    Evolve(Common),
    /// Kernel assembly timings over a range of sample sizes.
    Bench(Common),
    /// Draw samples from `data.distribution`.
    Sample(Common),
}

fn thread_cap(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Some(t) = flag {
        return Ok(Some(t));
    }
    match std::env::var("KOLMOGOROV_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| CliError::Validation(format!("KOLMOGOROV_THREADS = '{v}' is not a thread count"))),
        Err(_) => Ok(None),
    }
}

fn run(command: Command) -> Result<(), CliError> {
    let (name, common) = match &command {
        Command::Tune(c) => ("tune", c),
        Command::Density(c) => ("density", c),
        Command::Eigs(c) => ("eigs", c),
        Command::Solve(c) => ("solve", c),
        Command::Gradient(c) => ("gradient", c),
        Command::Evolve(c) => ("evolve", c),
        Command::Bench(c) => ("bench", c),
        Command::Sample(c) => ("sample", c),
    };
    if let Some(t) = thread_cap(common.threads)? {
        if t == 0 {
            return Err(CliError::Validation("thread cap must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Validation(format!("cannot size the thread pool: {e}")))?;
    }
    let mut ctx = commands::Ctx::new(name, common)?;
    match command {
        Command::Tune(_) => commands::tune(&mut ctx)?,
        Command::Density(_) => commands::density(&mut ctx)?,
        Command::Eigs(_) => commands::eigs(&mut ctx)?,
        Command::Solve(_) => commands::solve(&mut ctx)?,
        Command::Gradient(_) => commands::gradient(&mut ctx)?,
        Command::Evolve(_) => commands::evolve(&mut ctx)?,
        Command::Bench(_) => commands::bench(&mut ctx)?,
        Command::Sample(_) => commands::sample(&mut ctx)?,
    }
    ctx.finish()
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
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
