//! `bloch-fem`: runs the scattering examples, convergence sweeps and the
//! supercell cross-check, and emits CSV (or JSON) with a config-echo header.

// NaN must fail every tolerance check, hence `!(a <= b)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use bloch_fem::config::{OutputFormat, ReferenceConfig, RunConfig};
use bloch_fem::experiment::{
    example_config, numerical_trace, run_convergence, run_example, solve_config, trace_error, Problem,
};
use bloch_fem::greens::{green_half_space, SourceKind};
use bloch_fem::oracle::run_oracle_check;
use bloch_fem::report::{write_csv, write_json};
use bloch_fem::Error;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_TOLERANCE: u8 = 4;

#[derive(Parser)]
#[command(name = "bloch-fem", version, about = "Floquet-Bloch FEM for two periodic layers with different periods")]
struct Cli {
    #[command(flatten)]
    out: OutputArgs,
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutputArgs {
    /// Emit JSON instead of CSV.
    #[arg(long, global = true)]
    json: bool,
    /// Write results here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Dump the cell mesh (nodes and triangles) to this file.
    #[arg(long, global = true)]
    mesh_dump: Option<PathBuf>,
    /// Dump the global block matrix as triplets, plus the right-hand side.
    #[arg(long, global = true)]
    system_dump: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// One run of example 1..8 at (N, h).
    Example {
        id: u8,
        #[arg(long = "N")]
        copies: usize,
        #[arg(long)]
        h: f64,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Reference solve for examples 5..8, default (2N, h/2).
        #[arg(long = "ref-N", requires = "ref_h")]
        ref_copies: Option<usize>,
        #[arg(long = "ref-h", requires = "ref_copies")]
        ref_h: Option<f64>,
        /// Exit with 4 if the relative error exceeds this.
        #[arg(long)]
        max_error: Option<f64>,
    },
    /// Tensor sweep over N and h with fitted log-log rates.
    Converge {
        #[arg(long)]
        example: u8,
        #[arg(long = "N-list", value_delimiter = ',', num_args = 1.., required = true)]
        copies: Vec<usize>,
        #[arg(long = "h-list", value_delimiter = ',', num_args = 1.., required = true)]
        hs: Vec<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "ref-N", requires = "ref_h")]
        ref_copies: Option<usize>,
        #[arg(long = "ref-h", requires = "ref_copies")]
        ref_h: Option<f64>,
        /// Exit with 4 unless the h-slope is at least this.
        #[arg(long)]
        min_rate_h: Option<f64>,
        /// Exit with 4 unless the N-slope is at most this.
        #[arg(long)]
        max_rate_n: Option<f64>,
    },
    /// Bloch solve against the brute-force supercell solve.
    Oracle {
        #[arg(long = "N")]
        copies: usize,
        #[arg(long)]
        h: f64,
        #[arg(long)]
        example: u8,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Largest acceptable relative difference.
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
    },
    /// Solve a fully custom configuration and emit the top trace.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
}

enum Failure {
    Run(Error),
    Tolerance(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Run(Error::Io(e))
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_)
        | Error::InvalidGeometry(_)
        | Error::InvalidArgument(_)
        | Error::InsufficientBand { .. }
        | Error::InsufficientPoints { .. } => EXIT_CONFIG,
        Error::Io(_) => 1,
        _ => EXIT_SOLVER,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Tolerance(msg)) => {
            eprintln!("tolerance not met: {msg}");
            ExitCode::from(EXIT_TOLERANCE)
        }
    }
}

fn load_base(path: Option<&PathBuf>, out: &OutputArgs) -> Result<RunConfig, Error> {
    let mut cfg = match path {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &out.mesh_dump {
        cfg.output.mesh_dump = Some(p.display().to_string());
    }
    if let Some(p) = &out.system_dump {
        cfg.output.system_dump = Some(p.display().to_string());
    }
    if out.json {
        cfg.output.format = OutputFormat::Json;
    }
    if let Some(p) = &out.output {
        cfg.output.path = Some(p.display().to_string());
    }
    Ok(cfg)
}

fn reference(copies: Option<usize>, h: Option<f64>) -> Option<ReferenceConfig> {
    Some(ReferenceConfig { copies: copies?, h: h? })
}

fn sink(cfg: &RunConfig) -> io::Result<Box<dyn Write>> {
    Ok(match &cfg.output.path {
        Some(p) => Box::new(io::BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Example {
            id,
            copies,
            h,
            config,
            ref_copies,
            ref_h,
            max_error,
        } => {
            let mut base = load_base(config.as_ref(), &cli.out)?;
            if let Some(r) = reference(ref_copies, ref_h) {
                base.reference = Some(r);
            }
            let cfg = example_config(id, copies, h, &base)?;
            let row = run_example(id, copies, h, &base, None)?;
            let mut header = vec![("command".to_string(), "example".to_string())];
            header.extend(cfg.echo());
            if cfg.source.kind == SourceKind::Incident {
                let r = base.reference.unwrap_or(ReferenceConfig {
                    copies: 2 * copies,
                    h: h / 2.0,
                });
                header.push(("reference".into(), format!("N={} h={}", r.copies, r.h)));
            }
            emit(&cfg, &header, std::slice::from_ref(&row), None::<&()>)?;
            if let Some(tol) = max_error {
                if !(row.relative_error <= tol) {
                    return Err(Failure::Tolerance(format!(
                        "relative error {:.3e} > {tol:.3e}",
                        row.relative_error
                    )));
                }
            }
        }
        Command::Converge {
            example,
            copies,
            hs,
            config,
            ref_copies,
            ref_h,
            min_rate_h,
            max_rate_n,
        } => {
            let mut base = load_base(config.as_ref(), &cli.out)?;
            if let Some(r) = reference(ref_copies, ref_h) {
                base.reference = Some(r);
            }
            let table = run_convergence(example, &copies, &hs, &base)?;
            let first = example_config(example, copies[0], hs[0], &base)?;
            let mut header = vec![("command".to_string(), "converge".to_string())];
            header.extend(
                first
                    .echo()
                    .into_iter()
                    .filter(|(k, _)| k != "N" && k != "h" && k != "band" && k != "samples" && k != "reference"),
            );
            let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |s| format!("{s:.4}"));
            header.push(("rate_N".into(), fmt(table.rate_n)));
            header.push(("rate_h".into(), fmt(table.rate_h)));
            if let Some((n, h)) = table.reference {
                header.push(("reference".into(), format!("N={n} h={h}")));
            }
            let rates = serde_json::json!({ "rate_N": table.rate_n, "rate_h": table.rate_h, "reference": table.reference });
            emit(&base, &header, &table.rows, Some(&rates))?;
            if let (Some(min), Some(rate)) = (min_rate_h, table.rate_h) {
                if !(rate >= min) {
                    return Err(Failure::Tolerance(format!("h-rate {rate:.3} < {min}")));
                }
            }
            if let (Some(max), Some(rate)) = (max_rate_n, table.rate_n) {
                if !(rate <= max) {
                    return Err(Failure::Tolerance(format!("N-rate {rate:.3} > {max}")));
                }
            }
        }
        Command::Oracle {
            copies,
            h,
            example,
            config,
            tolerance,
        } => {
            let base = load_base(config.as_ref(), &cli.out)?;
            let cfg = example_config(example, copies, h, &base)?;
            let problem = Problem::new(&cfg)?;
            let cmp = run_oracle_check(&problem)?;
            let record = OracleRecord {
                example,
                copies,
                h,
                block_dofs: cmp.block_dofs,
                difference: cmp.difference,
                bloch_count: cmp.bloch_counts.total(),
                bloch_formula: cmp.bloch_formula,
                supercell_count: cmp.supercell_counts.total(),
                supercell_formula: cmp.supercell_formula,
                count_ratio: cmp.supercell_counts.total() as f64 / cmp.bloch_counts.total() as f64,
                bloch_residual: cmp.bloch_residual,
                supercell_residual: cmp.supercell_residual,
            };
            let mut header = vec![("command".to_string(), "oracle".to_string())];
            header.extend(cfg.echo());
            header.push(("oracle_basis".into(), "quasi-periodic".into()));
            header.push(("tolerance".into(), tolerance.to_string()));
            let mut w = sink(&cfg)?;
            match cfg.output.format {
                OutputFormat::Json => {
                    let doc = serde_json::json!({ "config": header_map(&header), "oracle": record });
                    writeln!(w, "{}", serde_json::to_string_pretty(&doc).map_err(io::Error::other)?)?;
                }
                OutputFormat::Csv => {
                    write_header(&mut w, &header)?;
                    let mut c = csv::Writer::from_writer(&mut w);
                    c.serialize(&record).map_err(io::Error::other)?;
                    c.flush()?;
                }
            }
            w.flush()?;
            if !(record.difference <= tolerance) {
                return Err(Failure::Tolerance(format!(
                    "supercell difference {:.3e} > {tolerance:.3e}",
                    record.difference
                )));
            }
            if !cmp.counts_match() {
                return Err(Failure::Tolerance(format!(
                    "assembly counts {} / {} differ from (2+N)M = {} / 3NM = {}",
                    record.bloch_count, record.supercell_count, record.bloch_formula, record.supercell_formula
                )));
            }
        }
        Command::Solve { config } => {
            let cfg = load_base(Some(&config), &cli.out)?;
            let outcome = solve_config(&cfg)?;
            let (x1, u) = numerical_trace(&outcome);
            let exact = match cfg.source.kind {
                SourceKind::Volume => Some(
                    x1.iter()
                        .map(|&x| green_half_space([x, cfg.height], &outcome.problem.source))
                        .collect::<Result<Vec<_>, _>>()?,
                ),
                SourceKind::Incident => None,
            };
            let mut header = vec![("command".to_string(), "solve".to_string())];
            header.extend(cfg.echo());
            header.push(("solver_used".into(), outcome.report.method.name().into()));
            header.push(("iterations".into(), outcome.report.iterations.to_string()));
            header.push(("residual".into(), format!("{:e}", outcome.report.residual)));
            header.push(("wall_time".into(), format!("{:.3}", outcome.wall_time)));
            if exact.is_some() {
                header.push(("relative_error".into(), format!("{:e}", trace_error(&outcome, None)?)));
            }
            for w in &outcome.warnings {
                header.push(("warning".into(), w.clone()));
            }
            let rows: Vec<TraceRow> = x1
                .iter()
                .zip(&u)
                .enumerate()
                .map(|(i, (&x, v))| TraceRow {
                    x1: x,
                    re: v.re,
                    im: v.im,
                    exact_re: exact.as_ref().map(|e| e[i].re),
                    exact_im: exact.as_ref().map(|e| e[i].im),
                })
                .collect();
            let mut w = sink(&cfg)?;
            match cfg.output.format {
                OutputFormat::Json => {
                    let doc = serde_json::json!({ "config": header_map(&header), "trace": rows });
                    writeln!(w, "{}", serde_json::to_string_pretty(&doc).map_err(io::Error::other)?)?;
                }
                OutputFormat::Csv => {
                    write_header(&mut w, &header)?;
                    let mut c = csv::Writer::from_writer(&mut w);
                    for r in &rows {
                        c.serialize(r).map_err(io::Error::other)?;
                    }
                    c.flush()?;
                }
            }
            w.flush()?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct OracleRecord {
    example: u8,
    #[serde(rename = "N")]
    copies: usize,
    h: f64,
    block_dofs: usize,
    difference: f64,
    bloch_count: u64,
    bloch_formula: u64,
    supercell_count: u64,
    supercell_formula: u64,
    count_ratio: f64,
    bloch_residual: f64,
    supercell_residual: f64,
}

#[derive(Serialize)]
struct TraceRow {
    x1: f64,
    re: f64,
    im: f64,
    exact_re: Option<f64>,
    exact_im: Option<f64>,
}

fn header_map(header: &[(String, String)]) -> serde_json::Map<String, serde_json::Value> {
    let mut m = serde_json::Map::new();
    for (k, v) in header {
        match m.get_mut(k) {
            Some(serde_json::Value::Array(a)) => a.push(v.clone().into()),
            Some(prev) => *prev = serde_json::Value::Array(vec![prev.clone(), v.clone().into()]),
            None => {
                m.insert(k.clone(), v.clone().into());
            }
        }
    }
    m
}

fn write_header(w: &mut dyn Write, header: &[(String, String)]) -> io::Result<()> {
    writeln!(w, "# bloch-fem results")?;
    for (k, v) in header {
        writeln!(w, "# {k}={v}")?;
    }
    Ok(())
}

fn emit<E: Serialize>(
    cfg: &RunConfig,
    header: &[(String, String)],
    rows: &[bloch_fem::experiment::ErrorTableRow],
    extra: Option<&E>,
) -> Result<(), Failure> {
    let mut w = sink(cfg)?;
    match cfg.output.format {
        OutputFormat::Csv => write_csv(&mut w, header, rows)?,
        OutputFormat::Json => write_json(&mut w, header, rows, extra)?,
    }
    w.flush()?;
    Ok(())
}
