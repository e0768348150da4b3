mod cli;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cli::output::Format;
use cli::{RuleArg, Usage};

/// Quantum graphs, their probability currents and the minimal graph process.
#[derive(Parser, Debug)]
#[command(name = "mgp", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Bundled scenario name or path to a scenario JSON file.
    #[arg(long, global = true)]
    pub scenario: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Root seed; overrides the scenario's.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of paths; overrides the scenario's.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub ensemble: Option<u64>,
    /// Number of lattice spacings, each half the previous.
    #[arg(long = "epsilon-ladder", global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub epsilon_ladder: Option<u64>,
    /// Table format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List the bundled scenarios.
    Scenarios,
    /// Check the graph and vertex conditions and print a degree report.
    Validate,
    /// Dump the discrete Hamiltonian as (row, col, re, im) triplets.
    Hamiltonian,
    /// Propagate and write the states at the output times.
    Evolve,
    /// Vertex currents at every stored time.
    Flux {
        /// Also rerun at K grid spacings, halving each time, and report
        /// the Kirchhoff residual at the probe vertex.
        #[arg(long, value_name = "K")]
        refine: Option<usize>,
    },
    /// Sample the path ensemble and compare it with |ψ|².
    Sample {
        #[arg(long, value_enum, default_value_t = RuleArg::Minimal)]
        rule: RuleArg,
        /// Record every accepted integrator step in the paths table.
        #[arg(long)]
        dense: bool,
    },
    /// Lattice jump process at decreasing spacings against the continuum
    /// edge selection at the probe vertex.
    Bell,
    /// Build feasible vertex kernels and check that their Markovization is
    /// the edge selection.
    Markovize {
        /// Flux table written by `flux`; without it the currents come from
        /// the scenario.
        #[arg(long)]
        flux: Option<PathBuf>,
        #[arg(long)]
        vertex: Option<String>,
        #[arg(long)]
        time: Option<f64>,
        /// Number of randomized kernels.
        #[arg(long, default_value_t = 100)]
        kernels: usize,
    },
    /// Star state with influx on one edge and outflux on the other two;
    /// compares the minimal process with the argmax rule.
    Impossibility {
        #[arg(long, default_value_t = 0.005)]
        h: f64,
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        #[arg(long, default_value_t = 0.08)]
        t_final: f64,
    },
    /// Time reversal at the probe vertex and joint turn counts of the
    /// reversed ensemble.
    Reverse,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let c = &cli.common;
    let result = match cli.command {
        Command::Scenarios => cli::scenarios(),
        Command::Validate => cli::validate(c),
        Command::Hamiltonian => cli::hamiltonian(c),
        Command::Evolve => cli::evolve(c),
        Command::Flux { refine } => cli::flux(c, refine),
        Command::Sample { rule, dense } => cli::sample(c, rule, dense),
        Command::Bell => cli::bell(c),
        Command::Markovize {
            flux,
            vertex,
            time,
            kernels,
        } => cli::markovize(c, flux.as_deref(), vertex.as_deref(), time, kernels),
        Command::Impossibility { h, dt, t_final } => cli::impossibility(c, h, dt, t_final),
        Command::Reverse => cli::reverse(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Usage::Usage(msg)) => {
            eprintln!("mgp: usage: {msg}");
            ExitCode::from(2)
        }
        Err(Usage::Failed(e)) => {
            eprintln!("mgp: error[{}]: {}", e.kind(), e.to_string().replace('\n', " "));
            ExitCode::from(1)
        }
    }
}
