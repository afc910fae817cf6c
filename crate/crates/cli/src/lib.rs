//! `graphwave` command-line front end.
//!
//! Every subcommand prints a JSON summary on stdout and writes its CSV
//! artifacts together with a `manifest.json` into the `--out` directory.
//!
//! Exit codes: 0 success, 1 invalid input or infeasible problem, 2 numerical
//! failure (non-convergence, solver breakdown, failed validation), 64 usage.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

mod commands;
mod manifest;
mod validate;

pub use manifest::RunManifest;

pub const SCHEMA_VERSION: &str = "1";

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "graphwave", version, about = "Standing waves of the NLS on metric graphs")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Directory receiving CSV artifacts and the run manifest.
    #[arg(long, global = true, default_value = "graphwave-out")]
    pub out: PathBuf,
    /// Seed for random perturbations.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Linear ground state `(λ₀, ψ₀)` and spectral gap.
    Spectrum(SpectrumArgs),
    /// Local minimizer of the energy on `S(c) ∩ B(r)`.
    Minimize(MinimizeArgs),
    /// Exact star-graph standing wave.
    ClosedForm(ClosedFormArgs),
    /// Mass curve `R(ω)` of the ground branch.
    MassCurve(MassCurveArgs),
    /// Time evolution with mass, energy and sup-norm trace.
    Evolve(EvolveArgs),
    /// Orbital stability experiment around a reference state.
    Stability(StabilityArgs),
    /// Runs the star-graph oracle checks.
    Validate(ValidateArgs),
    /// Minimizers over a grid of masses (and exponents), in parallel.
    Sweep(SweepArgs),
}

#[derive(Debug, Args, serde::Serialize)]
pub struct SpectrumArgs {
    pub graph: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub h: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Also write ψ₀ to this CSV file.
    #[arg(long)]
    pub dump_psi0: Option<PathBuf>,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct MinimizeArgs {
    pub graph: PathBuf,
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub c: f64,
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    #[arg(long, default_value_t = 0.01)]
    pub h: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Pseudo-time step; defaults to 1/(2λ₀).
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, default_value_t = 20_000)]
    pub max_iter: usize,
    /// Initial state (CSV with edge_id,x,re,im); defaults to √c ψ₀.
    #[arg(long)]
    pub init: Option<PathBuf>,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct ClosedFormArgs {
    #[arg(long = "N")]
    pub n: usize,
    #[arg(long)]
    pub gamma: f64,
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub omega: f64,
    #[arg(long, default_value_t = 0)]
    pub j: usize,
    #[arg(long, default_value_t = 0.01)]
    pub h: f64,
    #[arg(long, default_value_t = 40.0)]
    pub truncation: f64,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct MassCurveArgs {
    #[arg(long = "N")]
    pub n: usize,
    #[arg(long)]
    pub gamma: f64,
    #[arg(long)]
    pub p: f64,
    /// `LO:HI`; defaults to just above threshold up to 20 times the threshold.
    #[arg(long)]
    pub omega_range: Option<String>,
    #[arg(long, default_value_t = 200)]
    pub points: usize,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct EvolveArgs {
    pub graph: PathBuf,
    /// Nonlinearity exponent; omit together with `--linear`.
    #[arg(long, required_unless_present = "linear")]
    pub p: Option<f64>,
    /// Drop the nonlinearity.
    #[arg(long)]
    pub linear: bool,
    #[arg(long, default_value_t = 0.01)]
    pub h: f64,
    /// Time step; defaults to h/2.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long = "T")]
    pub t_end: f64,
    /// Initial state CSV; defaults to √c ψ₀.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 10)]
    pub sample_every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationMode {
    Bump,
    Noise,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct StabilityArgs {
    pub graph: PathBuf,
    #[arg(long)]
    pub p: f64,
    #[arg(long, default_value_t = 0.01)]
    pub h: f64,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long = "T")]
    pub t_end: f64,
    #[arg(long)]
    pub delta: f64,
    #[arg(long, value_enum, default_value_t = PerturbationMode::Bump)]
    pub mode: PerturbationMode,
    /// Reference state CSV; defaults to the minimizer for `--c`, `--r`.
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub c: f64,
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    #[arg(long, default_value_t = 20)]
    pub sample_every: usize,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct ValidateArgs {
    pub graph: PathBuf,
    #[arg(long, default_value_t = 5.0)]
    pub p: f64,
    #[arg(long, default_value_t = 0.01)]
    pub h: f64,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct SweepArgs {
    pub graph: PathBuf,
    /// Exponents, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub p: Vec<f64>,
    /// Explicit masses, comma separated; overrides the geometric grid.
    #[arg(long, value_delimiter = ',')]
    pub c: Vec<f64>,
    #[arg(long)]
    pub c_min: Option<f64>,
    #[arg(long)]
    pub c_max: Option<f64>,
    #[arg(long, default_value_t = 8)]
    pub points: usize,
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    #[arg(long, default_value_t = 0.01)]
    pub h: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectrum(_) => "spectrum",
            Command::Minimize(_) => "minimize",
            Command::ClosedForm(_) => "closed-form",
            Command::MassCurve(_) => "mass-curve",
            Command::Evolve(_) => "evolve",
            Command::Stability(_) => "stability",
            Command::Validate(_) => "validate",
            Command::Sweep(_) => "sweep",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Core(graphwave_core::Error),
    Usage(String),
    /// An oracle check failed.
    Validation(String),
}

impl From<graphwave_core::Error> for CliError {
    fn from(e: graphwave_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Validation(_) => EXIT_SOLVER,
            CliError::Core(e) if e.is_solver_failure() => EXIT_SOLVER,
            CliError::Core(_) => EXIT_DOMAIN,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Validation(_) => "validation",
            CliError::Core(e) if e.is_solver_failure() => "solver",
            CliError::Core(_) => "domain",
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) | CliError::Validation(m) => f.write_str(m),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let name = cli.command.name();
    match commands::run(&cli) {
        Ok(summary) => {
            emit(&summary);
            EXIT_OK
        }
        Err(err) => {
            eprintln!("error: {err}");
            let body = json!({
                "schema_version": SCHEMA_VERSION,
                "command": name,
                "status": "error",
                "error": { "kind": err.kind(), "message": err.to_string() },
            });
            emit(&body);
            err.exit_code()
        }
    }
}

// A closed pipe on stdout (`| head`) is not an error worth a panic.
fn emit(v: &Value) {
    use std::io::Write;
    let text = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

/// Wraps a command's summary fields with the common envelope.
pub(crate) fn envelope(command: &str, mut body: Value) -> Value {
    let mut out = json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "status": "ok",
    });
    if let (Some(o), Some(b)) = (out.as_object_mut(), body.as_object_mut()) {
        o.append(b);
    }
    out
}
