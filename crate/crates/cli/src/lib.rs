//! Command-line harness over `ltv-es-core`: scenario documents, JSON/CSV/text output, and
//! the `check`, `bound`, `simulate`, `tables` and `delay` commands.

pub mod analysis;
pub mod args;
pub mod commands;
pub mod document;
pub mod output;

use args::{Cli, Command};
use commands::{CliResult, Outcome};

/// Executes one parsed command line and writes its artifact.
pub fn run(cli: &Cli) -> CliResult<Outcome> {
    let (outcome, output) = match &cli.command {
        Command::Check { scenario, output } => (commands::check(scenario)?, output),
        Command::Bound {
            scenario,
            horizon,
            points,
            output,
        } => (commands::bound(scenario, *horizon, *points)?, output),
        Command::Simulate {
            scenario,
            run,
            output,
        } => (commands::simulate(scenario, run)?, output),
        Command::Tables {
            ids,
            reading,
            output,
        } => (commands::tables(ids, *reading)?, output),
        Command::Delay {
            scenario,
            run,
            output,
        } => (commands::delay(scenario, run)?, output),
    };
    output::write_output(
        output.out.as_deref(),
        &outcome.artifact.render(output.format),
    )?;
    Ok(outcome)
}
