//! `phasediff`: batch jobs for dephased phase-estimation probes.

mod commands;
mod config;
mod table;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use config::{
    resolve, Common, CrbMcSection, FileConfig, FitSection, Format, HomodyneSection, QfiSection, SweepSection,
    VarianceMapSection,
};
use table::{Provenance, Table};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Compute(#[from] phasediff::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::Io(io),
            other => CliError::Usage(format!("malformed csv: {other:?}")),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "phasediff", version, about = "Phase-estimation precision of dephased Gaussian probes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
    /// TOML job file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the effective configuration as TOML and exit
    #[arg(long, global = true)]
    print_config: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Quantum Fisher information on an (N, β, Δ) grid
    Qfi(QfiSection),
    /// Optimal squeezing and QFI over an (N, Δ) grid
    Sweep(SweepSection),
    /// Homodyne Fisher information against the QFI
    Homodyne(HomodyneSection),
    /// Quadrature variance over (β, θ) and the noise threshold
    VarianceMap(VarianceMapSection),
    /// Fit ln γ against ln ξ from a sweep table
    Fit(FitSection),
    /// Monte Carlo check of the homodyne Cramér-Rao bound
    CrbMc(CrbMcSection),
}

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct Effective<'a, S: Serialize> {
    #[serde(flatten)]
    common: &'a Common,
    #[serde(skip_serializing_if = "Option::is_none")]
    qfi: Option<&'a S>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<&'a S>,
    #[serde(skip_serializing_if = "Option::is_none")]
    homodyne: Option<&'a S>,
    #[serde(skip_serializing_if = "Option::is_none")]
    variance_map: Option<&'a S>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<&'a S>,
    #[serde(skip_serializing_if = "Option::is_none")]
    crb_mc: Option<&'a S>,
}

impl<'a, S: Serialize> Effective<'a, S> {
    fn new(common: &'a Common, name: &str, section: &'a S) -> Self {
        let pick = |n: &str| (n == name).then_some(section);
        Self {
            common,
            qfi: pick("qfi"),
            sweep: pick("sweep"),
            homodyne: pick("homodyne"),
            variance_map: pick("variance-map"),
            fit: pick("fit"),
            crb_mc: pick("crb-mc"),
        }
    }
}

struct Job {
    name: &'static str,
    common: Common,
    config: serde_json::Value,
    toml: String,
}

fn job<S: Serialize>(name: &'static str, common: Common, section: &S) -> Result<Job, CliError> {
    let effective = Effective::new(&common, name, section);
    let toml = toml::to_string(&effective).map_err(|e| CliError::Usage(format!("cannot render config: {e}")))?;
    let config = serde_json::to_value(&effective).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(Job { name, common, config, toml })
}

fn setup(job: &Job) -> Result<(), CliError> {
    faer::set_global_parallelism(faer::Par::Seq);
    rayon::ThreadPoolBuilder::new()
        .num_threads(job.common.workers.expect("resolved"))
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))
}

fn write_output(job: &Job, table: &Table, seconds: f64) -> Result<(), CliError> {
    let provenance = Provenance {
        tool: env!("CARGO_PKG_NAME").replace("-cli", ""),
        version: env!("CARGO_PKG_VERSION").into(),
        command: job.name.into(),
        config: job.config.clone(),
        wall_clock_seconds: seconds,
        rows_with_errors: table.error_count(),
    };
    let path = job.common.output.as_deref().unwrap_or("-");
    let mut out: Box<dyn Write> = if path == "-" {
        Box::new(std::io::stdout().lock())
    } else {
        Box::new(std::io::BufWriter::new(std::fs::File::create(path)?))
    };
    match job.common.format.unwrap_or(Format::Csv) {
        Format::Csv => table.write_csv(&mut out, &provenance)?,
        Format::Json => table.write_json(&mut out, &provenance)?,
    }
    out.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<usize, CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let mut common = file.common();
    common.overlay(&cli.common);
    let common = common.complete();
    common.validate().map_err(CliError::Usage)?;

    macro_rules! dispatch {
        ($name:literal, $file:expr, $flags:expr, |$sec:ident, $common:ident| $body:expr) => {{
            let $sec = resolve($file, $flags)?;
            let job = job($name, common, &$sec)?;
            if cli.print_config {
                print!("{}", job.toml);
                return Ok(0);
            }
            setup(&job)?;
            let start = Instant::now();
            let $common = &job.common;
            let table: Table = $body?;
            write_output(&job, &table, start.elapsed().as_secs_f64())?;
            table.error_count()
        }};
    }

    let errors = match &cli.command {
        Command::Qfi(flags) => dispatch!("qfi", file.qfi, flags, |s, c| commands::qfi(&s, c)),
        Command::Sweep(flags) => dispatch!("sweep", file.sweep, flags, |s, c| commands::sweep(&s, c)),
        Command::Homodyne(flags) => dispatch!("homodyne", file.homodyne, flags, |s, c| commands::homodyne(&s, c)),
        Command::VarianceMap(flags) => {
            dispatch!("variance-map", file.variance_map, flags, |s, c| commands::variance_map_cmd(&s, c))
        }
        Command::Fit(flags) => dispatch!("fit", file.fit, flags, |s, _c| commands::fit(&s)),
        Command::CrbMc(flags) => dispatch!("crb-mc", file.crb_mc, flags, |s, c| commands::crb_mc(&s, c)),
    };
    Ok(errors)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) => {
            eprintln!("phasediff: {n} rows reported errors");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("phasediff: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("phasediff: {e}");
            ExitCode::from(1)
        }
    }
}
