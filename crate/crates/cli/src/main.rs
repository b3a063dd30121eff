//! snb-lab: saddle-node critical conditions and switching simulation for
//! PWM buck converters.

mod commands;
mod config;
mod csvout;
mod error;

use clap::{Args, Parser, Subcommand};
use commands::Options;
use error::CliError;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "snb-lab",
    about = "Fold (saddle-node) analysis of PWM buck converters: closed-form critical conditions, S/L plots, hysteresis sweeps, and cycle-exact simulation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Converter description (TOML, or JSON with a .json extension).
    #[arg(long)]
    config: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Harmonic count for the steady-state and tangency series.
    #[arg(long)]
    series_n: Option<usize>,
    /// Grid size (duty points, sweep steps, or boundary columns).
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fold points, minimum stabilizing ramp, and closed-form duties (JSON).
    Analyze(Common),
    /// S-plot along the branch: ramp-slope criterion per duty (CSV).
    Splot(Common),
    /// L-plot along the branch: loop-gain criterion per duty (CSV).
    Lplot(Common),
    /// Source-voltage hysteresis sweep with the switching simulator (CSV).
    Sweep(Common),
    /// Time-domain trace of the switched converter from rest (CSV).
    Simulate(Common),
    /// Critical boundary over a two-parameter rectangle (CSV).
    Boundary(Common),
}

fn dispatch(cmd: &Command) -> Result<(), CliError> {
    let common = match cmd {
        Command::Analyze(c)
        | Command::Splot(c)
        | Command::Lplot(c)
        | Command::Sweep(c)
        | Command::Simulate(c)
        | Command::Boundary(c) => c,
    };
    let cfg = config::load_config(&common.config)?;
    let opts = Options {
        out: common.out.clone(),
        series_n: common.series_n,
        grid: common.grid,
    };
    match cmd {
        Command::Analyze(_) => commands::analyze(&cfg, &opts),
        Command::Splot(_) => commands::splot(&cfg, &opts),
        Command::Lplot(_) => commands::lplot(&cfg, &opts),
        Command::Sweep(_) => commands::sweep(&cfg, &opts),
        Command::Simulate(_) => commands::simulate(&cfg, &opts),
        Command::Boundary(_) => commands::boundary(&cfg, &opts),
    }
}

fn main() {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("{}", e.to_json());
            std::process::exit(e.exit_code);
        }
    }
}
