//! Command-line front end for the critical-point library: solve the leak-0
//! consistency equations, continue them to leak-1 critical points, regenerate
//! the reference tables, scan loss decay across widths, and run the
//! verification suites.
//!
//! Exit codes: 0 success, 1 usage error, 2 numeric or I/O failure,
//! 3 verification failure.

// Dense k x k index loops in the verification suites follow the library's
// house style.
#![allow(clippy::needless_range_loop)]

mod commands;
mod report;
mod verify;

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use relu_landscape::consistency_solver::SolverError;
use relu_landscape::objective_gradient::ObjectiveError;
use relu_landscape::path_continuation::PathError;
use relu_landscape::series_asymptotics::SeriesError;
use relu_landscape::symmetry_charts::ChartError;
use relu_landscape::Family;

use commands::Method;
use report::Format;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, malformed config or seed input (exit 1).
    Usage(String),
    /// A solve, scan or output write failed at runtime (exit 2).
    Numeric(String),
    /// One or more verification checks failed (exit 3).
    Verification(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numeric(_) => 2,
            CliError::Verification(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Numeric(m) | CliError::Verification(m) => {
                f.write_str(m)
            }
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::BadSeed(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<PathError> for CliError {
    fn from(e: PathError) -> Self {
        match e {
            PathError::BadIncrement(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<ObjectiveError> for CliError {
    fn from(e: ObjectiveError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<ChartError> for CliError {
    fn from(e: ChartError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<SeriesError> for CliError {
    fn from(e: SeriesError) -> Self {
        match e {
            SeriesError::UnknownFamily(_)
            | SeriesError::WidthTooSmall { .. }
            | SeriesError::DegenerateWidth { .. }
            | SeriesError::DegenerateFit => CliError::Usage(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "relu-landscape",
    version,
    about = "Solve, continue and verify the symmetric critical points of the \
             student-teacher two-layer ReLU loss"
)]
struct Cli {
    /// Plain-text key=value file supplying defaults for any long option.
    /// Command-line flags take precedence over config entries.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutputArgs {
    /// Output format: csv (default) or json.
    #[arg(long)]
    format: Option<Format>,

    /// Write the report to this file (atomically) instead of stdout.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,

    /// Omit the timestamp from JSON output so repeated runs are
    /// byte-identical.
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the leak-0 consistency equations for one family and width.
    SolveConsistency {
        /// Critical-point family: a, i, ii or m.
        #[arg(long)]
        family: Option<Family>,

        /// Network width.
        #[arg(long)]
        k: Option<usize>,

        /// Seed table overriding the built-in starting points.
        #[arg(long, value_name = "FILE")]
        seed_file: Option<PathBuf>,

        /// Newton residual tolerance (sup norm).
        #[arg(long)]
        tol: Option<f64>,

        #[command(flatten)]
        out: OutputArgs,
    },

    /// Solve the consistency equations, then continue to the leak-1
    /// critical point by a direct Newton jump or an incremental leak path.
    SolveCritical {
        /// Critical-point family: a, i, ii or m.
        #[arg(long)]
        family: Option<Family>,

        /// Network width.
        #[arg(long)]
        k: Option<usize>,

        /// Continuation method: jump (default) or path.
        #[arg(long)]
        method: Option<Method>,

        /// Leak increment for the path method.
        #[arg(long)]
        lambda_inc: Option<f64>,

        /// Seed table overriding the built-in starting points.
        #[arg(long, value_name = "FILE")]
        seed_file: Option<PathBuf>,

        /// Newton residual tolerance (sup norm).
        #[arg(long)]
        tol: Option<f64>,

        #[command(flatten)]
        out: OutputArgs,
    },

    /// Recompute one of the reference tables end to end.
    Tables {
        /// Table selector: inftable1, inftable4, compA, compI, compII or
        /// typeM.
        #[arg(long)]
        which: Option<String>,

        /// Newton residual tolerance (sup norm).
        #[arg(long)]
        tol: Option<f64>,

        #[command(flatten)]
        out: OutputArgs,
    },

    /// Solve the leak-1 critical point across a width range and fit the
    /// loss-decay constant.
    Decay {
        /// Critical-point family: a, i, ii or m.
        #[arg(long)]
        family: Option<Family>,

        /// Smallest width in the scan.
        #[arg(long)]
        k_min: Option<usize>,

        /// Largest width in the scan.
        #[arg(long)]
        k_max: Option<usize>,

        /// Seed table overriding the built-in starting points.
        #[arg(long, value_name = "FILE")]
        seed_file: Option<PathBuf>,

        /// Newton residual tolerance (sup norm).
        #[arg(long)]
        tol: Option<f64>,

        #[command(flatten)]
        out: OutputArgs,
    },

    /// Run the property-check suites and print a pass/fail ledger.
    Verify {
        /// Run a single suite: kernel, charts, objective, consistency or
        /// series.
        #[arg(long)]
        only: Option<String>,

        /// Seed table checked and used by the consistency suite.
        #[arg(long, value_name = "FILE")]
        seed_file: Option<PathBuf>,
    },
}

/// Key=value defaults loaded from `--config`. Keys use the long option
/// names; lines starting with `#` and blank lines are skipped.
struct ConfigMap(HashMap<String, String>);

impl ConfigMap {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut map = HashMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("reading config {}: {e}", path.display()))
            })?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    CliError::Usage(format!(
                        "config {} line {}: expected key=value, got '{line}'",
                        path.display(),
                        lineno + 1
                    ))
                })?;
                map.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(ConfigMap(map))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key {key}: {e}"))),
        }
    }

    fn get_flag(&self, key: &str) -> Result<bool, CliError> {
        Ok(self.get::<bool>(key)?.unwrap_or(false))
    }
}

/// A value that must come from either the command line or the config file.
fn require<T>(name: &str, flag: Option<T>, cfg: Option<T>) -> Result<T, CliError> {
    flag.or(cfg).ok_or_else(|| {
        CliError::Usage(format!("missing required option --{name} (or config key {name})"))
    })
}

fn emit_report(report: report::Report, out: OutputArgs, cfg: &ConfigMap) -> Result<(), CliError> {
    let format = match out.format {
        Some(f) => f,
        None => cfg.get::<Format>("format")?.unwrap_or(Format::Csv),
    };
    let output = match out.output {
        Some(p) => Some(p),
        None => cfg.get::<PathBuf>("output")?,
    };
    let no_timestamp = out.no_timestamp || cfg.get_flag("no-timestamp")?;
    report::emit(&report, format, output.as_deref(), no_timestamp)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg_map = ConfigMap::load(cli.config.as_deref())?;
    match cli.command {
        Command::SolveConsistency { family, k, seed_file, tol, out } => {
            let family = require("family", family, cfg_map.get("family")?)?;
            let k = require("k", k, cfg_map.get("k")?)?;
            let tol = match tol {
                Some(t) => Some(t),
                None => cfg_map.get("tol")?,
            };
            let seed_file = match seed_file {
                Some(p) => Some(p),
                None => cfg_map.get("seed-file")?,
            };
            let newton = commands::newton_config(tol)?;
            let seeds = commands::load_seeds(seed_file.as_deref())?;
            let report = commands::cmd_solve_consistency(&seeds, family, k, &newton)?;
            emit_report(report, out, &cfg_map)
        }
        Command::SolveCritical { family, k, method, lambda_inc, seed_file, tol, out } => {
            let family = require("family", family, cfg_map.get("family")?)?;
            let k = require("k", k, cfg_map.get("k")?)?;
            let method = match method {
                Some(m) => m,
                None => cfg_map.get::<Method>("method")?.unwrap_or(Method::Jump),
            };
            let lambda_inc = match lambda_inc {
                Some(v) => v,
                None => cfg_map.get("lambda-inc")?.unwrap_or(0.1),
            };
            let tol = match tol {
                Some(t) => Some(t),
                None => cfg_map.get("tol")?,
            };
            let seed_file = match seed_file {
                Some(p) => Some(p),
                None => cfg_map.get("seed-file")?,
            };
            let newton = commands::newton_config(tol)?;
            let seeds = commands::load_seeds(seed_file.as_deref())?;
            let report =
                commands::cmd_solve_critical(&seeds, family, k, method, lambda_inc, &newton)?;
            emit_report(report, out, &cfg_map)
        }
        Command::Tables { which, tol, out } => {
            let which = require("which", which, cfg_map.get("which")?)?;
            let tol = match tol {
                Some(t) => Some(t),
                None => cfg_map.get("tol")?,
            };
            let newton = commands::newton_config(tol)?;
            let report = commands::cmd_tables(&which, &newton)?;
            emit_report(report, out, &cfg_map)
        }
        Command::Decay { family, k_min, k_max, seed_file, tol, out } => {
            let family = require("family", family, cfg_map.get("family")?)?;
            let k_min = require("k-min", k_min, cfg_map.get("k-min")?)?;
            let k_max = require("k-max", k_max, cfg_map.get("k-max")?)?;
            let tol = match tol {
                Some(t) => Some(t),
                None => cfg_map.get("tol")?,
            };
            let seed_file = match seed_file {
                Some(p) => Some(p),
                None => cfg_map.get("seed-file")?,
            };
            let newton = commands::newton_config(tol)?;
            let seeds = commands::load_seeds(seed_file.as_deref())?;
            let report = commands::cmd_decay(&seeds, family, k_min, k_max, &newton)?;
            emit_report(report, out, &cfg_map)
        }
        Command::Verify { only, seed_file } => {
            let only = match only {
                Some(s) => Some(s),
                None => cfg_map.get("only")?,
            };
            let seed_file = match seed_file {
                Some(p) => Some(p),
                None => cfg_map.get("seed-file")?,
            };
            verify::run(only.as_deref(), seed_file.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests print to stdout and succeed; real
            // parse errors go to stderr and exit with the usage code.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.code())
        }
    }
}
