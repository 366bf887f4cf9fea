use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lmphc_cli::{run, Command, RunConfig};
use lmphc_core::{Error, Result};

/// Experiments on the Kac continuum model with hard-core exclusion.
#[derive(Parser)]
#[command(name = "lmphc", version = lmphc_cli::output::GIT_DESCRIBE)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Configuration file of `key=value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Step count (overrides the file).
    #[arg(long, global = true)]
    steps: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for parallel sweeps (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    echo: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Mean-field coexistence table over beta and R.
    PhaseDiagram,
    /// Grand-canonical sampling with snapshots and a trace.
    Simulate,
    /// Phase indicators and contours of a saved snapshot.
    CoarseGrain,
    /// Empirical contour weights.
    Peierls,
    /// Truncated cluster expansion of the position correction.
    Expand,
    /// Dobrushin coupling coefficients on a probe lattice.
    Dobrushin,
    /// Box versus torus occupation comparison.
    CompareGeometries,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::PhaseDiagram => Command::PhaseDiagram,
            Cmd::Simulate => Command::Simulate,
            Cmd::CoarseGrain => Command::CoarseGrain,
            Cmd::Peierls => Command::Peierls,
            Cmd::Expand => Command::Expand,
            Cmd::Dobrushin => Command::Dobrushin,
            Cmd::CompareGeometries => Command::CompareGeometries,
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(s) = cli.steps {
        cfg.steps = s;
    }
    if cli.echo {
        print!("{}", cfg.echo());
        return Ok(());
    }
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .map_err(|e| Error::Numerical(e.to_string()))?;
    }
    run(cli.command.into(), &cfg, &cli.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
