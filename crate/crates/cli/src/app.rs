//! Argument parsing, subcommand dispatch and the exit-code contract.

use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ordinal_transport::partialid::Endpoint;
use thiserror::Error;

use crate::heatmap::{emit_heatmap, render_ascii, FigureMode};
use crate::ingest::{counts_csv, ingest, write_atomic, DatasetSpec, IngestError, InputFormat, DEFAULT_MISSING_CODES};
use crate::report::{render_distance, render_text, Analysis, Inputs, Report, Sections};

/// Environment variable capping the worker threads (0 = one per core).
pub const THREADS_ENV: &str = "ORDINAL_TRANSPORT_THREADS";

/// Replications used by `infer` when `--reps` is absent.
pub const DEFAULT_REPS: usize = 499;

#[derive(Debug, Parser)]
#[command(name = "ordinal-transport", version, about = "Distributional change between ordinal distributions, with bounds under nonresponse")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Discrepancy and its normalization (fully observed inputs only).
    Distance(CommonArgs),
    /// Identified interval for the discrepancy and CDF bounds.
    Bounds(CommonArgs),
    /// Flow bounds over minimal-mobility couplings, with heatmaps.
    Couplings(CommonArgs),
    /// Bootstrap confidence sets.
    Infer(CommonArgs),
    /// Everything above, written to <out>/report.json plus figures.
    Report(CommonArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Text,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Earlier cross-section (CSV).
    #[arg(long)]
    pub source: PathBuf,
    /// Later cross-section (CSV).
    #[arg(long)]
    pub target: PathBuf,
    /// Number of ordered categories.
    #[arg(long)]
    pub k: usize,
    /// Comma-separated codes counted as nonresponse in long files.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_MISSING_CODES.map(String::from))]
    pub missing_codes: Vec<String>,
    #[arg(long, value_enum, default_value_t = InputFormat::Auto)]
    pub input_format: InputFormat,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Bootstrap replications; `report` runs the bootstrap only when given.
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Response rate to assume for the source instead of the observed one.
    #[arg(long)]
    pub p_override: Option<f64>,
    /// Response rate to assume for the target instead of the observed one.
    #[arg(long)]
    pub q_override: Option<f64>,
    /// Output directory for report.json and figures.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
    /// Heatmap output; `report` defaults to svg, other commands to none.
    #[arg(long, value_enum)]
    pub figures: Option<FigureMode>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Ingest(#[from] IngestError),

    #[error(transparent)]
    Core(#[from] ordinal_transport::Error),

    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: io::Error },

    #[error("cannot serialize report: {0}")]
    Serialize(#[from] serde_json::Error),
}

impl CliError {
    /// 1 for bad data or usage, 2 for internal faults.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_internal() => 2,
            CliError::Serialize(_) => 2,
            _ => 1,
        }
    }
}

fn output_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Output { path: path.to_path_buf(), source }
}

/// Reads `ORDINAL_TRANSPORT_THREADS` and sizes the global thread pool.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("{THREADS_ENV}={raw:?} is not a thread count")))?;
    if threads > 0 {
        // a pool that is already initialized keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    Ok(())
}

fn dataset(args: &CommonArgs, path: &Path) -> DatasetSpec {
    DatasetSpec {
        format: args.input_format,
        path: path.to_path_buf(),
        k: args.k,
        missing_codes: args.missing_codes.clone(),
    }
}

fn figure_name(e: Endpoint) -> &'static str {
    match e {
        Endpoint::Lower => "lower_endpoint_coupling",
        Endpoint::Upper => "upper_endpoint_coupling",
    }
}

fn figure_title(e: Endpoint, value: f64) -> String {
    let side = match e {
        Endpoint::Lower => "Lower",
        Endpoint::Upper => "Upper",
    };
    format!("{side}-endpoint coupling (cost = {value:.3})")
}

/// Writes one heatmap per endpoint representative and records the paths
/// (relative to `out`) in the report. ASCII grids are also returned for
/// printing.
fn write_figures(report: &mut Report, out: &Path, mode: FigureMode) -> Result<String, CliError> {
    let Some(ext) = mode.extension() else { return Ok(String::new()) };
    let mut printed = String::new();
    for c in &report.endpoint_couplings {
        let rel = format!("figures/{}.{ext}", figure_name(c.endpoint));
        let path = out.join(&rel);
        let rows = c.representative.rows();
        let title = figure_title(c.endpoint, c.value);
        emit_heatmap(&rows, &title, &path, mode).map_err(output_err(&path))?;
        if mode == FigureMode::Ascii {
            printed.push_str(&render_ascii(&rows, &title).map_err(output_err(&path))?);
        }
        report.figures.push(rel);
    }
    Ok(printed)
}

fn to_json(report: &Report) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

/// Runs one subcommand and returns what goes to standard output.
pub fn run(cli: Cli) -> Result<String, CliError> {
    let (args, sections, default_figures) = match &cli.command {
        Command::Distance(a) => (a, Sections::default(), FigureMode::None),
        Command::Bounds(a) => (a, Sections::default(), FigureMode::None),
        Command::Couplings(a) => {
            (a, Sections { couplings: true, ..Default::default() }, FigureMode::None)
        }
        Command::Infer(a) => (a, Sections { inference: true, ..Default::default() }, FigureMode::None),
        Command::Report(a) => (
            a,
            Sections { couplings: true, max_mobility: true, inference: a.reps.is_some() },
            FigureMode::Svg,
        ),
    };
    let source = ingest(&dataset(args, &args.source))?;
    let target = ingest(&dataset(args, &args.target))?;
    let analysis = Analysis::new(source, target, args.p_override, args.q_override)?;
    if matches!(cli.command, Command::Distance(_)) && !analysis.point_identified() {
        return Err(CliError::Usage(
            "inputs have nonresponse, so the discrepancy is only partially identified; use `bounds`".into(),
        ));
    }
    let reps = match cli.command {
        Command::Infer(_) => Some(args.reps.unwrap_or(DEFAULT_REPS)),
        _ => args.reps,
    };
    let inputs = Inputs {
        source: dataset(args, &args.source),
        target: dataset(args, &args.target),
        k: args.k,
        p_override: args.p_override,
        q_override: args.q_override,
        alpha: args.alpha,
        reps,
    };
    let mut report = analysis.report(inputs, args.seed, sections)?;
    let figures = args.figures.unwrap_or(default_figures);
    let ascii = write_figures(&mut report, &args.out, figures)?;

    if let Command::Report(_) = cli.command {
        for (name, summary) in [("source", &report.source), ("target", &report.target)] {
            let path = args.out.join(format!("{name}_counts.csv"));
            write_atomic(&path, counts_csv(&summary.sample).as_bytes()).map_err(output_err(&path))?;
        }
        let path = args.out.join("report.json");
        write_atomic(&path, to_json(&report)?.as_bytes()).map_err(output_err(&path))?;
    }

    Ok(match (args.format, &cli.command) {
        (OutputFormat::Json, _) => to_json(&report)?,
        (OutputFormat::Text, Command::Distance(_)) => render_distance(&report),
        (OutputFormat::Text, _) => render_text(&report) + &ascii,
    })
}

/// Parses the process arguments, runs, and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let outcome = std::panic::catch_unwind(|| configure_threads().and_then(|_| run(cli)));
    match outcome {
        Ok(Ok(stdout)) => {
            print!("{stdout}");
            0
        }
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
        Err(_) => {
            eprintln!("error: internal fault");
            2
        }
    }
}
