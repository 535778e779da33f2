//! Command-line configuration, study execution and table output.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};

use crate::assembly::MaterialParams;
use crate::error::FemError;
use crate::geometry::Diagonal;
use crate::harness::{convergence_study, manufactured_case, CaseId, ErrorReport, StudyOptions};

/// Exit status for a successful run.
pub const EXIT_OK: i32 = 0;
/// Exit status for invalid flags or values.
pub const EXIT_CONFIG: i32 = 1;
/// Exit status when assembly, solve or error measurement fails.
pub const EXIT_SOLVER: i32 = 2;

pub const CSV_HEADER: &str = "h,sigma_err,sigma_rate,u_err,u_rate,asym_err,asym_rate";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum OutputFormat {
    #[default]
    Csv,
    Markdown,
}

#[derive(Debug, Parser)]
#[command(
    name = "meridian-fem",
    version,
    about = "Convergence studies for the axisymmetric weak-symmetry mixed method"
)]
struct Args {
    /// Manufactured solution (1 polynomial, 2 trigonometric).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    experiment: u8,
    /// Polynomial degree k of the stress rows.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=3))]
    degree: u8,
    /// Comma-separated mesh sizes; the mesh has n×n squares.
    #[arg(long = "n", value_delimiter = ',', default_values_t = [4usize, 6, 8, 10, 12])]
    n_list: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0.5)]
    mu: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Square split: north-east (ne) or north-west (nw).
    #[arg(long, default_value = "north-east")]
    diagonal: Diagonal,
    /// Extra polynomial exactness added to every quadrature rule.
    #[arg(long, default_value_t = 0)]
    quad_bump: u32,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Everything needed for one refinement study.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: CaseId,
    pub degree: u8,
    pub n_list: Vec<usize>,
    pub params: MaterialParams,
    pub diagonal: Diagonal,
    pub quad_bump: u32,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: CaseId::Exp1,
            degree: 1,
            n_list: vec![4, 6, 8, 10, 12],
            params: MaterialParams::default(),
            diagonal: Diagonal::NorthEast,
            quad_bump: 0,
            format: OutputFormat::Csv,
            out: None,
        }
    }
}

/// Why argument parsing stopped.
#[derive(Debug, thiserror::Error)]
pub enum ArgsError {
    /// `--help` or `--version`; the text goes to stdout with status 0.
    #[error("{0}")]
    Info(String),
    #[error("{0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn from_args<I, T>(args: I) -> Result<RunConfig, ArgsError>
    where
        I: IntoIterator<Item = T>,
        T: Into<OsString> + Clone,
    {
        let args = Args::try_parse_from(args).map_err(|e| {
            use clap::error::ErrorKind;
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ArgsError::Info(e.to_string()),
                _ => ArgsError::Invalid(e.to_string()),
            }
        })?;
        let invalid = |msg: String| ArgsError::Invalid(msg);
        if args.n_list.is_empty() || args.n_list.contains(&0) {
            return Err(invalid("--n needs positive mesh sizes".into()));
        }
        if args.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("--n must be strictly increasing".into()));
        }
        let params = MaterialParams::new(args.mu, args.lambda, args.gamma).map_err(|e| invalid(e.to_string()))?;
        let experiment = CaseId::from_number(args.experiment).map_err(|e| invalid(e.to_string()))?;
        Ok(RunConfig {
            experiment,
            degree: args.degree,
            n_list: args.n_list,
            params,
            diagonal: args.diagonal,
            quad_bump: args.quad_bump,
            format: args.format,
            out: args.out,
        })
    }
}

/// `1.273E+00` style with four significant digits.
pub fn format_scientific(x: f64) -> String {
    let s = format!("{x:.3E}");
    match s.split_once('E') {
        Some((mantissa, exp)) => {
            let e: i32 = exp.parse().unwrap_or(0);
            let sign = if e < 0 { '-' } else { '+' };
            format!("{mantissa}E{sign}{:02}", e.abs())
        }
        None => s,
    }
}

/// Renders a report as CSV or a markdown table. Rates sit on the coarser row
/// of each pair; the last row has none.
pub fn render(report: &ErrorReport, format: OutputFormat) -> String {
    let rates = report.rates();
    let mut out = String::new();
    match format {
        OutputFormat::Csv => {
            out.push_str(CSV_HEADER);
            out.push('\n');
            for (i, row) in report.rows.iter().enumerate() {
                let rate = |c: usize| rates.get(i).map(|r| r[c].to_string()).unwrap_or_default();
                let e = &row.errors;
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    row.h,
                    e.sigma,
                    rate(0),
                    e.u,
                    rate(1),
                    e.asym,
                    rate(2)
                ));
            }
        }
        OutputFormat::Markdown => {
            out.push_str("| h | sigma_err | sigma_rate | u_err | u_rate | asym_err | asym_rate |\n");
            out.push_str("|---|---|---|---|---|---|---|\n");
            for (i, row) in report.rows.iter().enumerate() {
                let rate = |c: usize| {
                    rates
                        .get(i)
                        .map(|r| format!("{:.1}", r[c]))
                        .unwrap_or_else(|| "--".into())
                };
                let e = &row.errors;
                out.push_str(&format!(
                    "| 1/{} | {} | {} | {} | {} | {} | {} |\n",
                    row.n,
                    format_scientific(e.sigma),
                    rate(0),
                    format_scientific(e.u),
                    rate(1),
                    format_scientific(e.asym),
                    rate(2)
                ));
            }
        }
    }
    out
}

/// Runs the study and writes the table to `--out` or `stdout`. Returns the exit status.
pub fn run(config: &RunConfig, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let case = manufactured_case(config.experiment, &config.params);
    let options = StudyOptions {
        diagonal: config.diagonal,
        quad_bump: config.quad_bump,
    };
    let report = match convergence_study(&case, config.degree, &config.n_list, &options) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if !e.partial.rows.is_empty() {
                let _ = write!(stderr, "{}", render(&e.partial, config.format));
            }
            return match e.source {
                FemError::InvalidConfig(_) => EXIT_CONFIG,
                _ => EXIT_SOLVER,
            };
        }
    };
    let table = render(&report, config.format);
    let written = match &config.out {
        Some(path) => std::fs::write(path, table.as_bytes()),
        None => stdout.write_all(table.as_bytes()),
    };
    match written {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: cannot write output: {e}");
            EXIT_CONFIG
        }
    }
}

/// Parses `args` (program name first) and runs. Returns the exit status.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match RunConfig::from_args(args) {
        Ok(config) => run(&config, stdout, stderr),
        Err(ArgsError::Info(text)) => {
            let _ = write!(stdout, "{text}");
            EXIT_OK
        }
        Err(ArgsError::Invalid(text)) => {
            let _ = write!(stderr, "{text}");
            if !text.ends_with('\n') {
                let _ = writeln!(stderr);
            }
            EXIT_CONFIG
        }
    }
}
