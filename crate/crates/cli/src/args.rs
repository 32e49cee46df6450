use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::output::Format;

#[derive(Debug, Parser)]
#[command(
    name = "ltv-es",
    version,
    about = "Certificates, ultimate bounds and simulations for bounded extremum seeking"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the certificate and the feasibility conditions; exit 0 iff feasible.
    Check {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Evaluate the state envelope over time and the ultimate bound.
    Bound {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// End of the envelope table (default: 5/r0).
        #[arg(long)]
        horizon: Option<f64>,
        /// Number of envelope samples.
        #[arg(long, default_value_t = 51)]
        points: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Simulate the closed loop and compare the state with the envelope.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Reproduce the published ultimate-bound tables.
    Tables {
        /// Table to reproduce (repeatable; default: all).
        #[arg(long = "id")]
        ids: Vec<String>,
        /// How delayed rows combine transformed and original data.
        #[arg(long, value_enum, default_value_t = ReadingArg::Hybrid)]
        reading: ReadingArg,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Delay analysis: measurement-delay budget, or predictor bounds and a predictor run.
    Delay {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReadingArg {
    Hybrid,
    Transformed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DelayKindArg {
    Measurement,
    Input,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ScenarioArgs {
    /// Builtin scenario: robot2d, scalar1d or integrator.
    #[arg(long, conflicts_with = "scenario")]
    pub builtin: Option<String>,
    /// Scenario document (JSON).
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub sigma0: Option<f64>,
    /// Weights `a,b` for the cross terms.
    #[arg(long, value_parser = parse_weights)]
    pub weights: Option<(f64, f64)>,
    /// Delay length (overrides the scenario's delay).
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, value_enum)]
    pub delay_kind: Option<DelayKindArg>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Simulated time span in seconds.
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    /// Integration steps per dither period.
    #[arg(long)]
    pub steps_per_dither: Option<usize>,
    /// Initial state `x1,x2,…` (default: σ₀ along (1,−1,1,…)/√n).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Write the artifact here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

fn parse_weights(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `a,b`, got {s:?}"))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|e| format!("{v:?}: {e}"))
    };
    Ok((parse(a)?, parse(b)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_parse() {
        assert_eq!(parse_weights("0.1,0.6"), Ok((0.1, 0.6)));
        assert!(parse_weights("0.1").is_err());
        assert!(parse_weights("a,1").is_err());
    }

    #[test]
    fn cli_is_well_formed() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
