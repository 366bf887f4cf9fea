//! Command-line front end: configuration parsing, output handling and the
//! subcommands of the `lmphc` binary.

// NaN-rejecting `!(x > y)` checks are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::path::Path;

use lmphc_core::Result;

pub use config::RunConfig;
pub use output::Output;

/// The subcommands of the binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    PhaseDiagram,
    Simulate,
    CoarseGrain,
    Peierls,
    Expand,
    Dobrushin,
    CompareGeometries,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::PhaseDiagram => "phase-diagram",
            Command::Simulate => "simulate",
            Command::CoarseGrain => "coarse-grain",
            Command::Peierls => "peierls",
            Command::Expand => "expand",
            Command::Dobrushin => "dobrushin",
            Command::CompareGeometries => "compare-geometries",
        }
    }
}

/// Runs `cmd` with `cfg`, writing its files and manifest into `out_dir`.
pub fn run(cmd: Command, cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let mut out = Output::new(out_dir)?;
    let f = match cmd {
        Command::PhaseDiagram => commands::phase_diagram,
        Command::Simulate => commands::simulate,
        Command::CoarseGrain => commands::coarse_grain,
        Command::Peierls => commands::peierls,
        Command::Expand => commands::expand,
        Command::Dobrushin => commands::dobrushin,
        Command::CompareGeometries => commands::compare,
    };
    f(cfg, &mut out)?;
    out.finish(cmd.name(), cfg.seed, &cfg.echo())
}
