//! `gridfeas` command-line runner.
//!
//! Exit status: 0 on success, 1 when a solver fails or does not converge,
//! 2 for unreadable input or bad arguments.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use gridfeas::acopf::{solve_acopf, verify_acopf, AcOpfOptions};
use gridfeas::acpf::{solve_newton_pf, PfOptions, PfSetpoints};
use gridfeas::dcopf::{solve_dcopf, solve_economic_dispatch};
use gridfeas::feasgap::{check_dc_infeasibility, generation_gap_experiment_with, spearman, ExperimentConfig, LossMode};
use gridfeas::io::{
    residual_rows, write_csv_with_header, write_json, Envelope, GAP_CSV_HEADER, RESIDUAL_CSV_HEADER, TRACE_CSV_HEADER,
};
use gridfeas::netmodel::{read_case, validate_assumptions, NetworkCase};
use gridfeas::Error;

#[derive(Debug, Parser)]
#[command(name = "gridfeas", version, about = "Dispatch and optimal power flow solvers with AC-feasibility checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Seed for the load randomization.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Number of experiment runs.
    #[arg(long, global = true, default_value_t = 500)]
    runs: usize,

    /// Lower load factor.
    #[arg(long, global = true, default_value_t = 0.6)]
    lo: f64,

    /// Upper load factor.
    #[arg(long, global = true, default_value_t = 1.2)]
    hi: f64,

    /// Worker threads for the experiment (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Output format; `gap-experiment` defaults to csv, everything else to json.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Write to this file instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = LossModeArg::SlackAbsorbs)]
    loss_mode: LossModeArg,

    /// Also write the AC OPF iteration trace as CSV to this file.
    #[arg(long, global = true)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Economic dispatch (single system-wide balance).
    SolveEd { case: PathBuf },
    /// DC optimal power flow.
    SolveDc { case: PathBuf },
    /// AC optimal power flow.
    SolveAc { case: PathBuf },
    /// Newton-Raphson power flow at the case's scheduled dispatch.
    PowerFlow { case: PathBuf },
    /// DC OPF, loss-adjusted flat-voltage residual and certificates.
    CheckFeasibility { case: PathBuf },
    /// DC vs AC OPF total generation over random loadings.
    GapExperiment { case: PathBuf },
    /// Report the modelling assumptions the analysis relies on.
    Validate { case: PathBuf },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SolveEd { .. } => "solve-ed",
            Command::SolveDc { .. } => "solve-dc",
            Command::SolveAc { .. } => "solve-ac",
            Command::PowerFlow { .. } => "power-flow",
            Command::CheckFeasibility { .. } => "check-feasibility",
            Command::GapExperiment { .. } => "gap-experiment",
            Command::Validate { .. } => "validate",
        }
    }

    fn case(&self) -> &PathBuf {
        match self {
            Command::SolveEd { case }
            | Command::SolveDc { case }
            | Command::SolveAc { case }
            | Command::PowerFlow { case }
            | Command::CheckFeasibility { case }
            | Command::GapExperiment { case }
            | Command::Validate { case } => case,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LossModeArg {
    #[value(name = "slack-absorbs", alias = "SlackAbsorbs")]
    SlackAbsorbs,
    #[value(name = "fictitious-demand", alias = "FictitiousDemand")]
    FictitiousDemand,
}

impl From<LossModeArg> for LossMode {
    fn from(m: LossModeArg) -> Self {
        match m {
            LossModeArg::SlackAbsorbs => LossMode::SlackAbsorbs,
            LossModeArg::FictitiousDemand => LossMode::FictitiousDemand,
        }
    }
}

/// Resolved configuration echoed into every artifact.
#[derive(Debug, Serialize)]
struct RunConfig {
    command: &'static str,
    case_path: String,
    seed: u64,
    n_runs: usize,
    factor_lo: f64,
    factor_hi: f64,
    output_format: Format,
    loss_mode: LossMode,
}

impl RunConfig {
    fn pairs(&self) -> Vec<(String, String)> {
        match serde_json::to_value(self) {
            Ok(Value::Object(map)) => map
                .into_iter()
                .map(|(k, v)| (k, v.as_str().map_or_else(|| v.to_string(), str::to_string)))
                .collect(),
            _ => Vec::new(),
        }
    }
}

/// A failure with its exit status.
struct Failure {
    status: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Case(_) | Error::InvalidArgument(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) => 2,
            Error::Infeasible { .. } | Error::SingularJacobian { .. } | Error::NotConverged { .. } | Error::Numerical(_) => 1,
        };
        let message = match &e {
            Error::Infeasible { violated, .. } if !violated.is_empty() => {
                format!("{e} (violated: {})", violated.join(", "))
            }
            _ => e.to_string(),
        };
        Failure { status, message }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure { status: 2, message: e.to_string() }
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure { status: 2, message: message.into() }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| input_error(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_json<R: Serialize>(cli: &Cli, config: &RunConfig, result: R) -> Result<(), Failure> {
    let mut out = output(&cli.out)?;
    write_json(&Envelope { config, result }, &mut out)?;
    out.flush()?;
    Ok(())
}

fn emit_csv<S: Serialize>(cli: &Cli, config: &RunConfig, header: &[&str], rows: &[S]) -> Result<(), Failure> {
    let mut out = output(&cli.out)?;
    write_csv_with_header(&config.pairs(), header, rows, &mut out)?;
    out.flush()?;
    Ok(())
}

fn json_only(config: &RunConfig) -> Result<(), Failure> {
    if config.output_format == Format::Csv {
        return Err(input_error(format!("{} has no csv output", config.command)));
    }
    Ok(())
}

fn load(path: &Path) -> Result<NetworkCase, Failure> {
    read_case(path).map_err(|e| {
        let f = Failure::from(e);
        Failure { status: f.status, message: format!("{}: {}", path.display(), f.message) }
    })
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let default_format = match cli.command {
        Command::GapExperiment { .. } => Format::Csv,
        _ => Format::Json,
    };
    let config = RunConfig {
        command: cli.command.name(),
        case_path: cli.command.case().display().to_string(),
        seed: cli.seed,
        n_runs: cli.runs,
        factor_lo: cli.lo,
        factor_hi: cli.hi,
        output_format: cli.format.unwrap_or(default_format),
        loss_mode: cli.loss_mode.into(),
    };
    let case = load(cli.command.case())?;

    match &cli.command {
        Command::SolveEd { .. } => {
            json_only(&config)?;
            let (solution, diagnostics) = solve_economic_dispatch(&case)?;
            emit_json(cli, &config, json!({ "solution": solution, "diagnostics": diagnostics }))
        }
        Command::SolveDc { .. } => {
            json_only(&config)?;
            let (solution, diagnostics) = solve_dcopf(&case)?;
            emit_json(cli, &config, json!({ "solution": solution, "diagnostics": diagnostics }))
        }
        Command::SolveAc { .. } => {
            let res = solve_acopf(&case, &AcOpfOptions::default())?;
            if let Some(path) = &cli.trace {
                let mut f = BufWriter::new(File::create(path).map_err(|e| input_error(format!("{}: {e}", path.display())))?);
                write_csv_with_header(&config.pairs(), &TRACE_CSV_HEADER, &res.trace, &mut f)?;
                f.flush()?;
            }
            match config.output_format {
                Format::Csv => emit_csv(cli, &config, &TRACE_CSV_HEADER, &res.trace)?,
                Format::Json => {
                    let verification = verify_acopf(&res, &case)?;
                    emit_json(cli, &config, json!({ "opf": res, "verification": verification }))?
                }
            }
            if res.converged {
                Ok(())
            } else {
                Err(Failure {
                    status: 1,
                    message: format!(
                        "AC OPF stopped with status {:?} after {} iterations (kkt {:.3e}, feasibility {:.3e})",
                        res.status, res.iterations, res.kkt_norm, res.feasibility_norm
                    ),
                })
            }
        }
        Command::PowerFlow { .. } => {
            json_only(&config)?;
            let pf = solve_newton_pf(&case, &PfSetpoints::from_case(&case), &PfOptions::default())?;
            emit_json(cli, &config, &pf)?;
            if pf.converged {
                Ok(())
            } else {
                Err(Failure {
                    status: 1,
                    message: format!(
                        "power flow did not converge after {} iterations (residual {:.3e})",
                        pf.iterations, pf.final_residual_norm
                    ),
                })
            }
        }
        Command::CheckFeasibility { .. } => {
            let report = check_dc_infeasibility(&case, config.loss_mode, &AcOpfOptions::default())?;
            match config.output_format {
                Format::Json => emit_json(cli, &config, &report),
                Format::Csv => {
                    let rows = report.dc_point_residual.as_ref().map(residual_rows).unwrap_or_default();
                    emit_csv(cli, &config, &RESIDUAL_CSV_HEADER, &rows)
                }
            }
        }
        Command::GapExperiment { .. } => {
            let mut exp = ExperimentConfig::new(cli.runs, (cli.lo, cli.hi), cli.seed);
            exp.jobs = cli.jobs;
            let rows = generation_gap_experiment_with(&case, &exp)?;
            match config.output_format {
                Format::Csv => emit_csv(cli, &config, &GAP_CSV_HEADER, &rows),
                Format::Json => {
                    let (x, y): (Vec<f64>, Vec<f64>) =
                        rows.iter().filter_map(|r| Some((r.total_load, r.gap?))).unzip();
                    let summary = json!({
                        "runs": rows.len(),
                        "converged": x.len(),
                        "spearman_load_gap": spearman(&x, &y),
                    });
                    emit_json(cli, &config, json!({ "rows": rows, "summary": summary }))
                }
            }
        }
        Command::Validate { .. } => {
            json_only(&config)?;
            let checks = validate_assumptions(&case);
            emit_json(
                cli,
                &config,
                json!({
                    "case": case.name,
                    "buses": case.n_buses(),
                    "branches": case.n_branches(),
                    "generators": case.n_generators(),
                    "assumptions": checks,
                }),
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.status)
        }
    }
}
