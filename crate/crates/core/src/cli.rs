//! Command-line front end.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success (rank one or no verdict for `certify`) |
//! | 1 | parse error, invalid flags or I/O failure |
//! | 2 | solver suspects primal or dual infeasibility |
//! | 3 | numerical failure or iteration cap |
//! | 4 | `certify`: inexactness certified |
//! | 5 | `sweep`: invariant violations found |

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::casefile::{read_case, CaseFormat, CaseModel};
use crate::certify::{certify, CertificateReport, Tolerances, Verdict};
use crate::relaxation::{build_sdp, BuildOptions, SdpProblem};
use crate::solver::{solve, write_iteration_log, SdpSolution, SolveStatus, SolverConfig};
use crate::sweep::{emit_region_sections, run_sweep, write_records_csv, write_section_csv, SweepSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_INEXACT: i32 = 4;
pub const EXIT_VIOLATIONS: i32 = 5;

/// Environment variable holding the default sweep worker count.
pub const WORKERS_ENV: &str = "SDPOPF_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "sdpopf", version, about = "Semidefinite relaxation of AC optimal power flow")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the relaxation and write a solution summary.
    Solve(CaseArgs),
    /// Solve, certify and print a comparison-table row.
    Certify(CaseArgs),
    /// Sweep demand at chosen buses over a uniform grid.
    Sweep(SweepArgs),
    /// Collect saved certificate reports into one table.
    Report(ReportArgs),
}

#[derive(Debug, Args, Clone)]
pub struct CaseArgs {
    /// Case file (.m or .json).
    pub case: PathBuf,
    /// Case format, overriding the file extension.
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub gap_tol: Option<f64>,
    #[arg(long)]
    pub feas_tol: Option<f64>,
    #[arg(long)]
    pub rank_tol: Option<f64>,
    #[arg(long)]
    pub active_tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// JSON file with defaults for any of the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file (sweeps: output directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the per-iteration solver log as CSV.
    #[arg(long)]
    pub iter_log: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct SweepArgs {
    #[command(flatten)]
    pub case: CaseArgs,
    /// Comma-separated external bus numbers.
    #[arg(long, value_delimiter = ',')]
    pub buses: Option<Vec<usize>>,
    /// Demand range in MW / MVAr as `lo:hi`.
    #[arg(long)]
    pub range: Option<String>,
    #[arg(long)]
    pub points: Option<usize>,
    /// Re-solve rank-two points with relaxed balance and record the residual.
    #[arg(long)]
    pub oversat_crosscheck: bool,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args, Clone)]
pub struct ReportArgs {
    /// Certificate report JSON files.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Optional settings read from `--config`. Flags take precedence.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub format: Option<String>,
    pub gap_tol: Option<f64>,
    pub feas_tol: Option<f64>,
    pub rank_tol: Option<f64>,
    pub active_tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub buses: Option<Vec<usize>>,
    pub range: Option<[f64; 2]>,
    pub points: Option<usize>,
    pub oversat_crosscheck: Option<bool>,
    pub workers: Option<usize>,
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub case_path: PathBuf,
    pub format: Option<CaseFormat>,
    pub solver: SolverConfig,
    pub tolerances: Tolerances,
    pub out: Option<PathBuf>,
    pub iter_log: Option<PathBuf>,
    pub buses: Vec<usize>,
    pub range: (f64, f64),
    pub points: usize,
    pub oversat_crosscheck: bool,
    pub workers: usize,
}

#[derive(Debug)]
struct CliError(String);

impl<E: std::fmt::Display> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError(e.to_string())
    }
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError(format!("--{name} must be positive, got {v}")))
    }
}

fn parse_range(s: &str) -> Result<(f64, f64), CliError> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| CliError(format!("--range expects lo:hi, got `{s}`")))?;
    let lo: f64 = lo.trim().parse().map_err(|_| CliError(format!("bad range bound `{lo}`")))?;
    let hi: f64 = hi.trim().parse().map_err(|_| CliError(format!("bad range bound `{hi}`")))?;
    Ok((lo, hi))
}

fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&w: &usize| w > 0)
        .unwrap_or(1)
}

impl RunConfig {
    fn resolve(case: &CaseArgs, sweep: Option<&SweepArgs>) -> Result<Self, CliError> {
        if !case.case.exists() {
            return Err(CliError(format!("case file {} not found", case.case.display())));
        }
        let file: FileConfig = match &case.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError(format!("{}: {e}", p.display())))?
            }
            None => FileConfig::default(),
        };
        let format = match case.format.as_deref().or(file.format.as_deref()) {
            Some(f) => Some(f.parse::<CaseFormat>()?),
            None => None,
        };
        let mut solver = SolverConfig::default();
        if let Some(v) = case.gap_tol.or(file.gap_tol) {
            solver.gap_tol = positive("gap-tol", v)?;
        }
        if let Some(v) = case.feas_tol.or(file.feas_tol) {
            solver.feas_tol = positive("feas-tol", v)?;
        }
        if let Some(v) = case.max_iters.or(file.max_iters) {
            solver.max_iters = v;
        }
        solver.log_iterations = case.iter_log.is_some();
        solver.validate()?;
        let mut tolerances = Tolerances::default();
        if let Some(v) = case.rank_tol.or(file.rank_tol) {
            tolerances.rank = positive("rank-tol", v)?;
        }
        if let Some(v) = case.active_tol.or(file.active_tol) {
            tolerances.active = positive("active-tol", v)?;
        }
        let mut cfg = RunConfig {
            case_path: case.case.clone(),
            format,
            solver,
            tolerances,
            out: case.out.clone(),
            iter_log: case.iter_log.clone(),
            buses: file.buses.clone().unwrap_or_default(),
            range: file.range.map(|[a, b]| (a, b)).unwrap_or((0.0, 3.0)),
            points: file.points.unwrap_or(10),
            oversat_crosscheck: file.oversat_crosscheck.unwrap_or(false),
            workers: file.workers.unwrap_or_else(default_workers),
        };
        if let Some(s) = sweep {
            if let Some(b) = &s.buses {
                cfg.buses = b.clone();
            }
            if let Some(r) = &s.range {
                cfg.range = parse_range(r)?;
            }
            if let Some(p) = s.points {
                cfg.points = p;
            }
            cfg.oversat_crosscheck |= s.oversat_crosscheck;
            if let Some(w) = s.workers {
                cfg.workers = w;
            }
        }
        Ok(cfg)
    }

    fn load(&self) -> Result<(CaseModel, SdpProblem), CliError> {
        let case = read_case(&self.case_path, self.format)?;
        let problem = build_sdp(&case, BuildOptions::default())?;
        Ok((case, problem))
    }
}

/// Rounds to 9 significant digits so that printed numbers diff cleanly.
pub fn round9(x: f64) -> f64 {
    if x.is_finite() {
        format!("{x:.8e}").parse().unwrap_or(x)
    } else {
        x
    }
}

fn round_value(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => n
            .as_f64()
            .and_then(|f| serde_json::Number::from_f64(round9(f)))
            .map(Value::Number)
            .unwrap_or(Value::Null),
        Value::Array(a) => Value::Array(a.into_iter().map(round_value).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_value(v))).collect()),
        other => other,
    }
}

fn write_json(path: Option<&Path>, value: Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(&round_value(value))?;
    match path {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn status_code(status: SolveStatus) -> i32 {
    match status {
        SolveStatus::Optimal => EXIT_OK,
        SolveStatus::PrimalInfeasibleSuspected | SolveStatus::DualInfeasibleSuspected => EXIT_INFEASIBLE,
        SolveStatus::NumericalFailure | SolveStatus::MaxIters => EXIT_NUMERICAL,
    }
}

fn solution_summary(case: &CaseModel, problem: &SdpProblem, sol: &SdpSolution) -> Value {
    json!({
        "case": case.name,
        "status": sol.status.as_str(),
        "objective": sol.primal_obj + problem.cost_offset,
        "primal_obj": sol.primal_obj,
        "dual_obj": sol.dual_obj,
        "cost_offset": problem.cost_offset,
        "iterations": sol.iterations,
        "residuals": sol.residuals,
        "complementarity": sol.complementarity(),
        "n": problem.n,
        "m": problem.m(),
        "ell": problem.ell(),
        "diagnostics": sol.diagnostics,
    })
}

fn run_solve(cfg: &RunConfig) -> Result<(CaseModel, SdpProblem, SdpSolution), CliError> {
    let (case, problem) = cfg.load()?;
    let sol = solve(&problem, &cfg.solver)?;
    if let Some(p) = &cfg.iter_log {
        write_iteration_log(&sol.log, BufWriter::new(File::create(p)?))?;
    }
    Ok((case, problem, sol))
}

fn cmd_solve(cfg: &RunConfig) -> Result<i32, CliError> {
    let (case, problem, sol) = run_solve(cfg)?;
    write_json(cfg.out.as_deref(), solution_summary(&case, &problem, &sol))?;
    if sol.status != SolveStatus::Optimal {
        eprintln!("solver stopped with status {}", sol.status);
    }
    Ok(status_code(sol.status))
}

fn cmd_certify(cfg: &RunConfig) -> Result<i32, CliError> {
    let (case, problem, sol) = run_solve(cfg)?;
    if sol.status != SolveStatus::Optimal {
        eprintln!(
            "cannot certify: solver stopped with status {}{}",
            sol.status,
            sol.diagnostics.as_deref().map(|d| format!(" ({d})")).unwrap_or_default()
        );
        return Ok(status_code(sol.status));
    }
    let mut report = certify(&problem, &sol, &cfg.tolerances)?;
    if report.case.is_none() {
        report.case = case.name.clone();
    }
    if let Some(p) = &cfg.out {
        write_json(Some(p), serde_json::to_value(&report)?)?;
    }
    println!("{}", CertificateReport::table_header());
    println!("{}", report.table_row());
    println!(
        "objective {:.8e}  rank(Z) {}  strict complementarity {}  lemma1 {}  corollary1 {}  corollary3 {}",
        report.objective,
        report.rank_z,
        report.strict_complementarity,
        report.lemma1_condition,
        report.corollary1_condition,
        report.corollary3_condition.map_or("n/a".to_string(), |b| b.to_string())
    );
    for a in &report.annotations {
        println!("note: {a}");
    }
    Ok(if report.theorem2_verdict == Verdict::InexactCertified {
        EXIT_INEXACT
    } else {
        EXIT_OK
    })
}

fn cmd_sweep(cfg: &RunConfig) -> Result<i32, CliError> {
    let case = read_case(&cfg.case_path, cfg.format)?;
    if cfg.buses.is_empty() {
        return Err(CliError("--buses is required for a sweep".into()));
    }
    let mut spec = SweepSpec::new(case, cfg.buses.clone(), cfg.range.0, cfg.range.1, cfg.points);
    spec.oversatisfaction_crosscheck = cfg.oversat_crosscheck;
    spec.concurrency = cfg.workers;
    spec.solver = SolverConfig { log_iterations: false, ..cfg.solver };
    spec.tolerances = cfg.tolerances;
    spec.validate()?;
    let result = run_sweep(&spec)?;
    let summary = serde_json::to_value(&result.summary)?;
    match &cfg.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            write_records_csv(&result, BufWriter::new(File::create(dir.join("records.csv"))?))?;
            write_json(Some(&dir.join("summary.json")), summary)?;
            let k = spec.axis_count();
            for a in 0..k {
                for b in a + 1..k {
                    let rows = emit_region_sections(&spec, &result.records, (a, b), None)?;
                    let name = format!("section_{}_{}.csv", result.axis_names[a], result.axis_names[b]);
                    write_section_csv(&rows, BufWriter::new(File::create(dir.join(name))?))?;
                }
            }
        }
        None => write_json(None, summary)?,
    }
    let v = result.summary.invariant_violations;
    if v > 0 {
        eprintln!("{v} records violate the rank invariants");
        return Ok(EXIT_VIOLATIONS);
    }
    Ok(EXIT_OK)
}

fn cmd_report(args: &ReportArgs) -> Result<i32, CliError> {
    let mut out = String::new();
    out.push_str(&CertificateReport::table_header());
    out.push('\n');
    for p in &args.reports {
        let text = std::fs::read_to_string(p).map_err(|e| CliError(format!("{}: {e}", p.display())))?;
        let report: CertificateReport =
            serde_json::from_str(&text).map_err(|e| CliError(format!("{}: {e}", p.display())))?;
        out.push_str(&report.table_row());
        out.push('\n');
    }
    match &args.out {
        Some(p) => std::fs::write(p, out)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(out.as_bytes())?;
        }
    }
    Ok(EXIT_OK)
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => RunConfig::resolve(a, None).and_then(|c| cmd_solve(&c)),
        Command::Certify(a) => RunConfig::resolve(a, None).and_then(|c| cmd_certify(&c)),
        Command::Sweep(s) => RunConfig::resolve(&s.case, Some(s)).and_then(|c| cmd_sweep(&c)),
        Command::Report(r) => cmd_report(r),
    };
    match result {
        Ok(code) => code,
        Err(CliError(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INVALID
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_parsing() {
        assert_eq!(parse_range("0:3").unwrap(), (0.0, 3.0));
        assert_eq!(parse_range(" 1.5 : 2 ").unwrap(), (1.5, 2.0));
        assert!(parse_range("3").is_err());
        assert!(parse_range("a:b").is_err());
    }

    #[test]
    fn nine_digits() {
        assert_eq!(round9(1.0 / 3.0), 0.333333333);
        assert_eq!(round9(123456789012.0), 123456789000.0);
        assert_eq!(round9(0.0), 0.0);
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let case = dir.path().join("c.json");
        std::fs::write(&case, "{}").unwrap();
        let conf = dir.path().join("conf.json");
        std::fs::write(&conf, r#"{"gap_tol": 1e-6, "feas_tol": 1e-7, "points": 4, "buses": [3]}"#).unwrap();
        let cli = Cli::try_parse_from([
            "sdpopf",
            "sweep",
            case.to_str().unwrap(),
            "--config",
            conf.to_str().unwrap(),
            "--gap-tol",
            "1e-9",
            "--buses",
            "2,5",
        ])
        .unwrap();
        let Command::Sweep(s) = cli.command else { panic!() };
        let cfg = RunConfig::resolve(&s.case, Some(&s)).unwrap();
        assert_eq!(cfg.solver.gap_tol, 1e-9);
        assert_eq!(cfg.solver.feas_tol, 1e-7);
        assert_eq!(cfg.points, 4);
        assert_eq!(cfg.buses, vec![2, 5]);
        assert_eq!(cfg.range, (0.0, 3.0));
    }

    #[test]
    fn nonpositive_tolerance_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let case = dir.path().join("c.json");
        std::fs::write(&case, "{}").unwrap();
        let code = run(["sdpopf", "solve", case.to_str().unwrap(), "--gap-tol", "-1"]);
        assert_eq!(code, EXIT_INVALID);
    }
}
