use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use finsim::diff::ParamSet;
use finsim::harness::{Experiment, ExperimentConfig, Outcome, Pressure};
use finsim::identification::Method;
use finsim::Result;

/// Differentiable soft-fin simulation, material identification and thrust models.
#[derive(Debug, Parser)]
#[command(name = "finsim", version)]
struct Cli {
    /// Experiment config (TOML). Relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, relative to the working directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Optimizer for `identify`.
    #[arg(long, global = true, value_parser = parse::<Method>)]
    method: Option<Method>,
    /// Parameter set for `identify` and `gradcheck`.
    #[arg(long, global = true, value_parser = parse::<ParamSet>)]
    params: Option<ParamSet>,
    /// Actuation amplitude, e.g. `200mbar`, `0.3bar`, `15kPa`.
    #[arg(long, global = true, value_parser = parse::<Pressure>)]
    amplitude: Option<Pressure>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the mesh and write it with its validation report.
    MeshGen {
        /// Warn when cells are coarser than 1/50 of the body length.
        #[arg(long)]
        edge_check: bool,
    },
    /// Synthesize noisy quasistatic marker data from the plant.
    SynthQuasistatic,
    /// Synthesize thrust trials over the amplitude x frequency matrix.
    SynthThrust,
    /// Roll out the actuation schedule.
    Simulate,
    /// Solve static equilibria at the configured pressures.
    Quasistatic,
    /// Fit material parameters to marker data.
    Identify,
    /// Compare adjoint gradients with finite differences.
    Gradcheck,
    /// Train or evaluate the thrust network.
    Thrust {
        #[command(subcommand)]
        action: ThrustAction,
    },
    /// Validate the configured mesh.
    Validate,
}

#[derive(Debug, Subcommand)]
enum ThrustAction {
    Train,
    Eval,
}

fn parse<T: std::str::FromStr<Err = finsim::Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: finsim::Error| e.to_string())
}

fn experiment(cli: &Cli) -> Result<Experiment> {
    let (mut config, base) = match &cli.config {
        Some(path) => {
            let ex = Experiment::load(path)?;
            (ex.config, ex.base)
        }
        None => (ExperimentConfig::default(), PathBuf::from(".")),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(m) = cli.method {
        config.identify.method = m;
    }
    if let Some(p) = cli.params {
        config.identify.params = p;
    }
    if let Some(a) = cli.amplitude {
        config.actuation.amplitude = Some(a);
    }
    config.check()?;
    let mut ex = Experiment::new(config, base);
    if let Some(out) = &cli.out {
        ex.out = out.clone();
    }
    Ok(ex)
}

fn run(cli: &Cli) -> Result<Outcome> {
    let ex = experiment(cli)?;
    match &cli.command {
        Command::MeshGen { edge_check } => ex.mesh_gen(*edge_check),
        Command::SynthQuasistatic => ex.synth_quasistatic(),
        Command::SynthThrust => ex.synth_thrust(),
        Command::Simulate => ex.simulate(),
        Command::Quasistatic => ex.quasistatic(),
        Command::Identify => ex.identify(),
        Command::Gradcheck => ex.gradcheck(),
        Command::Thrust { action: ThrustAction::Train } => ex.thrust_train(),
        Command::Thrust { action: ThrustAction::Eval } => ex.thrust_eval(),
        Command::Validate => ex.validate(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
