//! `ewm` command-line front end.
//!
//! Every subcommand validates its flags before doing any work. Reports are
//! JSON objects, tables are CSV; both go to stdout unless `--out` is given.
//! Exit codes: 0 success, 1 runtime error, 2 usage error.

mod commands;
mod output;

use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ewm_core::simulation::log_spaced;
use ewm_core::{AdversaryPolicy, EwmError};

pub use output::round12;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or flag values. Exit code 2.
    Usage(String),
    /// Failure after validation (I/O, malformed input files, numerics). Exit code 1.
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<EwmError> for CliError {
    fn from(e: EwmError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "ewm", version, about = "Anchored e-watermark detection and simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Growth rate J*, entropy and 1/J* for a neighborhood.
    Jstar {
        #[command(flatten)]
        spec: SpecArgs,
        /// Also write the optimal e-value table as JSON.
        #[arg(long)]
        table_out: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Two-token max-min grid solver.
    Maxmin2 {
        /// Anchor mass on token 0.
        #[arg(long)]
        p: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 256)]
        grid: usize,
        #[arg(long, default_value_t = 4)]
        refinements: usize,
        /// CSV of the incumbent after each refinement.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean stopping time against ln(1/alpha) over an alpha grid.
    SweepTau {
        #[command(flatten)]
        spec: SpecArgs,
        /// `log:<start>:<end>:<count>` or a comma list.
        #[arg(long, default_value = "log:1e-2:1e-120:30", value_parser = parse_alpha_grid)]
        alphas: AlphaGrid,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `fixed:A,B`, `round-robin`, `random`, `greedy` or `greedy:W`.
        #[arg(long, default_value = "fixed:0,1", value_parser = parse_policy)]
        policy: AdversaryPolicy,
        /// Steps per trial; defaults to ceil(10 ln(1/alpha) / J*).
        #[arg(long)]
        horizon_cap: Option<u64>,
        #[command(flatten)]
        threads: ThreadArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// False-positive rate of the detector on null streams.
    CalibrateNull {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value = "0.1,0.05,0.02", value_parser = parse_alpha_grid)]
        alphas: AlphaGrid,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        /// Steps per stream; defaults to ceil(5 ln(1/alpha) / J*).
        #[arg(long)]
        horizon: Option<u64>,
        /// Distribution of null outcomes (JSON array or file); defaults to the anchor.
        #[arg(long)]
        null: Option<String>,
        /// Score table JSON; defaults to the optimal table.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        threads: ThreadArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit a watermarked stream as CSV `step,v,s`.
    Generate {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value = "fixed:0,1", value_parser = parse_policy)]
        policy: AdversaryPolicy,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a detector over a `step,v,s` stream.
    Detect {
        #[command(flatten)]
        spec: SpecArgs,
        /// Required unless `--state-in` supplies it.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, value_enum, default_value_t = Method::Evalue)]
        method: Method,
        #[arg(long)]
        stream: PathBuf,
        /// Maximum number of pairs read from the stream.
        #[arg(long)]
        budget: Option<usize>,
        /// Score table JSON for the e-value method; defaults to the optimal table.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Resume from a saved detector state.
        #[arg(long)]
        state_in: Option<PathBuf>,
        #[arg(long)]
        state_out: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mixture weights over extreme points reproducing a target.
    Decompose {
        #[command(flatten)]
        spec: SpecArgs,
        /// Target distribution as a JSON array or a file holding one.
        #[arg(long)]
        target: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Null constraint, cycle condition and saddle checks for a score table.
    Audit {
        #[command(flatten)]
        spec: SpecArgs,
        /// Score table JSON; defaults to the optimal table.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        perturbations: usize,
        #[arg(long, default_value_t = 0.05)]
        magnitude: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        threads: ThreadArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct SpecArgs {
    /// Anchor as a JSON array, or a path to a JSON file. Takes precedence over --anchor-file.
    #[arg(long)]
    pub anchor: Option<String>,
    /// File holding a JSON array or `{"anchor": [...], "delta": d}`.
    #[arg(long)]
    pub anchor_file: Option<PathBuf>,
    /// Neighborhood radius; may come from the anchor file instead.
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ThreadArgs {
    /// Worker cap, 0 for the default pool.
    #[arg(long, env = "EWM_THREADS", default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Evalue,
    Baseline,
}

/// Parsed `--alphas` value.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaGrid(pub Vec<f64>);

/// `log:<start>:<end>:<count>` gives a geometric grid with both endpoints;
/// anything else is read as a comma list. Every value must lie in (0, 1).
pub fn parse_alpha_grid(token: &str) -> Result<AlphaGrid, String> {
    let values = if let Some(rest) = token.strip_prefix("log:") {
        let parts: Vec<&str> = rest.split(':').collect();
        let [start, end, count] = parts[..] else {
            return Err(format!("expected log:<start>:<end>:<count>, got '{token}'"));
        };
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("bad number '{s}'"));
        let count: usize = count.trim().parse().map_err(|_| format!("bad count '{count}'"))?;
        if count < 2 {
            return Err(format!("grid needs at least 2 points, got {count}"));
        }
        log_spaced(num(start)?, num(end)?, count).map_err(|e| e.to_string())?
    } else {
        token
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| format!("bad alpha '{s}'")))
            .collect::<Result<Vec<_>, _>>()?
    };
    if let Some(a) = values.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(format!("alpha {a} is outside (0, 1)"));
    }
    Ok(AlphaGrid(values))
}

fn parse_policy(s: &str) -> Result<AdversaryPolicy, String> {
    s.parse().map_err(|e: EwmError| e.to_string())
}

/// Parses `argv` (program name first) and runs the subcommand, writing
/// reports to `stdout` and diagnostics to `stderr`. Returns the exit code.
pub fn run_with(argv: &[String], stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match commands::dispatch(cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "{e}");
            match e {
                CliError::Usage(_) => 2,
                CliError::Runtime(_) => 1,
            }
        }
    }
}

/// [`run_with`] on the process's stdout and stderr.
pub fn run_command(argv: &[String]) -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let code = run_with(argv, &mut stdout.lock(), &mut stderr.lock());
    let _ = std::io::stdout().flush();
    code
}
