//! `femq`: solve, refine, simulate the quantum estimator, tabulate resource
//! models and run the lower-bound demonstrations.
//!
//! Exit codes: 0 success, 2 invalid input, 3 non-convergence, 4 budget or
//! size cap exceeded.

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use femq::problem::ProblemSpec;
use serde_json::json;

use crate::commands::HybridParams;
use crate::error::CliError;
use crate::output::{emit, render, Format, Meta};

#[derive(Debug, Parser)]
#[command(name = "femq", version, about = "Finite elements and a simulated quantum functional estimator")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Problem specification (JSON).
    #[arg(long, global = true)]
    spec: Option<PathBuf>,

    /// Random seed; overrides the seed in the specification.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Replace sampling estimators by their exact expectations.
    #[arg(long, global = true)]
    exact: bool,

    /// Write `<command>.<format>` into this directory instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Assemble and solve classically; report the functional, CG iterations and kappa.
    Solve,
    /// L2 error under mesh refinement against a fine-mesh reference.
    Convergence {
        #[arg(long, default_value_t = 4)]
        levels: usize,
        /// Elements per side on the coarsest mesh.
        #[arg(long)]
        base: Option<usize>,
    },
    /// Run the simulated quantum estimator end to end.
    Simulate {
        /// Cap on the total number of measurement shots.
        #[arg(long)]
        shots: Option<u64>,
    },
    /// Tabulate the classical and quantum runtime models.
    Resources {
        #[arg(long, value_delimiter = ',', default_values_t = vec![1, 2, 3, 4])]
        dims: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1])]
        degrees: Vec<usize>,
        #[arg(long = "eps", value_delimiter = ',', default_values_t = vec![0.1, 0.01, 0.001])]
        eps_values: Vec<f64>,
    },
    /// Hybrid-argument bound or bump-oracle search demonstration.
    Lowerbound {
        #[arg(value_enum)]
        mode: LowerBoundMode,
        #[arg(long, default_value_t = 4)]
        qubits: usize,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1, 2, 4, 8])]
        uses: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.01, 0.05, 0.1])]
        separations: Vec<f64>,
        #[arg(long, default_value_t = 50)]
        draws: u64,
        #[arg(long, default_value_t = 200)]
        trials: u64,
        #[arg(long, value_delimiter = ',', default_values_t = vec![4, 16, 64, 256])]
        sizes: Vec<usize>,
    },
    /// Show the error budget and the chosen mesh without solving.
    Plan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LowerBoundMode {
    Hybrid,
    Bump,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Convergence { .. } => "convergence",
            Command::Simulate { .. } => "simulate",
            Command::Resources { .. } => "resources",
            Command::Lowerbound { .. } => "lowerbound",
            Command::Plan => "plan",
        }
    }
}

fn load_spec(path: Option<&PathBuf>) -> Result<Option<ProblemSpec>, CliError> {
    let Some(path) = path else { return Ok(None) };
    let text = std::fs::read_to_string(path)
        .map_err(|source| CliError::ReadSpec { path: path.display().to_string(), source })?;
    Ok(Some(ProblemSpec::from_json(&text)?))
}

fn require(spec: Option<&ProblemSpec>, command: &str) -> Result<ProblemSpec, CliError> {
    spec.cloned().ok_or_else(|| CliError::Validation(format!("`{command}` needs --spec <file>")))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let g = &cli.global;
    let name = cli.command.name();
    let spec = load_spec(g.spec.as_ref())?;
    let seed = g.seed.or(spec.as_ref().map(|s| s.seed)).unwrap_or(0);
    let (artifact, params) = match &cli.command {
        Command::Solve => (commands::solve(&require(spec.as_ref(), name)?)?, json!({})),
        Command::Plan => (commands::plan(&require(spec.as_ref(), name)?)?, json!({})),
        Command::Convergence { levels, base } => {
            (commands::convergence(&require(spec.as_ref(), name)?, *levels, *base)?, json!({"levels": levels, "base": base}))
        }
        Command::Simulate { shots } => (
            commands::simulate(&require(spec.as_ref(), name)?, seed, g.exact, *shots)?,
            json!({"shots": shots}),
        ),
        Command::Resources { dims, degrees, eps_values } => (
            commands::resources(spec.as_ref(), dims, degrees, eps_values)?,
            json!({"dims": dims, "degrees": degrees, "eps": eps_values}),
        ),
        Command::Lowerbound { mode, qubits, uses, separations, draws, trials, sizes } => match mode {
            LowerBoundMode::Hybrid => (
                commands::hybrid(&HybridParams { qubits: *qubits, uses, separations, draws: *draws, trials: *trials }, seed)?,
                json!({"mode": "hybrid", "qubits": qubits, "uses": uses, "separations": separations, "draws": draws, "trials": trials}),
            ),
            LowerBoundMode::Bump => (commands::bump(sizes)?, json!({"mode": "bump", "sizes": sizes})),
        },
    };
    let canonical = json!({ "spec": spec, "params": params }).to_string();
    let meta = Meta::new(name, &canonical, seed, g.exact);
    let text = render(&meta, &artifact, g.format)?;
    emit(&text, name, g.format, g.out.as_deref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
