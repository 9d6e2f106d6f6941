//! Batch front-end: identity verification, auxiliary solves and
//! coefficient sweeps with CSV/JSON/SVG output.

pub mod config;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use isoq_core::auxpde::{self, io as fieldio, AuxProblem, Grid2D, SolveOptions};
use isoq_core::expansion::{Case, CoefficientReport, CurvatureInputs, NumericsConfig, Pipeline};
use isoq_core::identities::{first_failure, run_suite, Perturbation, IDENTITY_NAMES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use config::{pick, pick_opt, ConfigFile, Format, RunConfig};
use report::SCHEMA_VERSION;

pub const DEFAULT_FUZZ: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(
    name = "isoq",
    version,
    about = "Verify isoperimetric-quotient expansion coefficients"
)]
pub struct Cli {
    /// Flat `key = value` file; explicit flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Seed for every randomized choice (e.g. the `--fuzz` target).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the exact-identity suite over a dimension range.
    Verify(VerifyArgs),
    /// Solve one auxiliary problem and write the field with its sidecar.
    Solve(SolveArgs),
    /// Sweep the expansion coefficients and their sign certificates.
    Coeffs(CoeffsArgs),
}

#[derive(Debug, Args, Default)]
pub struct GridArgs {
    #[arg(long)]
    pub rmax: Option<f64>,
    #[arg(long)]
    pub smax: Option<f64>,
    #[arg(long)]
    pub nr: Option<usize>,
    #[arg(long)]
    pub ns: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Number of nested larger domains supplying far-field data.
    #[arg(long)]
    pub far_field_levels: Option<u32>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub n_min: Option<u32>,
    #[arg(long)]
    pub n_max: Option<u32>,
    /// Negative control: multiply one rational (chosen from the seed) by 1+EPS.
    #[arg(long, num_args = 0..=1, default_missing_value = "1e-9", value_name = "EPS")]
    pub fuzz: Option<f64>,
    /// Also write the JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// `v` (p = 1) or `lambda` (p = 2).
    #[arg(long)]
    pub case: Option<String>,
    #[arg(long)]
    pub n: Option<u32>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CoeffsArgs {
    /// `nonumbilic` or `umbilic`.
    #[arg(long)]
    pub case: Option<String>,
    #[arg(long)]
    pub n_min: Option<u32>,
    #[arg(long)]
    pub n_max: Option<u32>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Allow dimensions below the proven threshold (rows are labelled).
    #[arg(long)]
    pub exploratory: bool,
    #[arg(long)]
    pub h2: Option<f64>,
    #[arg(long)]
    pub rninj2: Option<f64>,
    #[arg(long)]
    pub wbar2: Option<f64>,
    #[arg(long)]
    pub rnn2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success = 0,
    VerificationFailure = 1,
    SolverFailure = 2,
    ConfigError = 3,
}

impl From<Status> for ExitCode {
    fn from(s: Status) -> Self {
        ExitCode::from(s as u8)
    }
}

#[derive(Debug)]
pub struct Failure {
    pub status: Status,
    pub message: String,
}

fn config_err(message: impl Into<String>) -> Failure {
    Failure {
        status: Status::ConfigError,
        message: message.into(),
    }
}

fn solver_err(message: impl ToString) -> Failure {
    Failure {
        status: Status::SolverFailure,
        message: message.to_string(),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents)
        .map_err(|e| config_err(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize") + "\n"
}

struct Common<'a> {
    file: ConfigFile,
    format: Option<Format>,
    seed: Option<u64>,
    command: &'a str,
}

impl Common<'_> {
    fn base(&self, grid: &GridArgs) -> Result<RunConfig, String> {
        let f = &self.file;
        let d = NumericsConfig::default();
        Ok(RunConfig {
            command: self.command.to_string(),
            config_file: f.path.clone(),
            case: None,
            n: None,
            n_min: 0,
            n_max: 0,
            rmax: pick(grid.rmax, f, "rmax", d.grid.rmax)?,
            smax: pick(grid.smax, f, "smax", d.grid.smax)?,
            nr: pick(grid.nr, f, "nr", d.grid.nr)?,
            ns: pick(grid.ns, f, "ns", d.grid.ns)?,
            tol: pick(grid.tol, f, "tol", d.solve.tol)?,
            far_field_levels: pick(
                grid.far_field_levels,
                f,
                "far_field_levels",
                d.solve.far_field_levels,
            )?,
            curvature: CurvatureInputs::default(),
            seed: pick(self.seed, f, "seed", 0)?,
            format: pick(self.format, f, "format", Format::Text)?,
            fuzz: None,
            exploratory: false,
            out: None,
            csv: None,
            svg: None,
            json: None,
            report: None,
        })
    }
}

/// Resolves the effective configuration for the parsed command line.
pub fn resolve(cli: &Cli) -> Result<RunConfig, Failure> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p).map_err(config_err)?,
        None => ConfigFile::default(),
    };
    let name = match cli.command {
        Command::Verify(_) => "verify",
        Command::Solve(_) => "solve",
        Command::Coeffs(_) => "coeffs",
    };
    let common = Common {
        file,
        format: cli.format,
        seed: cli.seed,
        command: name,
    };
    let f = &common.file;
    let cfg = (|| -> Result<RunConfig, String> {
        Ok(match &cli.command {
            Command::Verify(a) => RunConfig {
                n_min: pick(a.n_min, f, "n_min", 6)?,
                n_max: pick(a.n_max, f, "n_max", 64)?,
                fuzz: pick_opt(a.fuzz, f, "fuzz")?,
                report: pick_opt(a.report.clone(), f, "report")?,
                ..common.base(&GridArgs::default())?
            },
            Command::Solve(a) => {
                let n = pick_opt(a.n, f, "n")?;
                RunConfig {
                    case: pick_opt(a.case.clone(), f, "case")?,
                    n,
                    n_min: n.unwrap_or(0),
                    n_max: n.unwrap_or(0),
                    out: pick_opt(a.out.clone(), f, "out")?,
                    ..common.base(&a.grid)?
                }
            }
            Command::Coeffs(a) => {
                let case = pick_opt(a.case.clone(), f, "case")?;
                let threshold = case
                    .as_deref()
                    .and_then(|c| c.parse::<Case>().ok())
                    .map(Case::threshold)
                    .unwrap_or(0);
                let d = CurvatureInputs::default();
                RunConfig {
                    case,
                    n_min: pick(a.n_min, f, "n_min", threshold)?,
                    n_max: pick(a.n_max, f, "n_max", 20)?,
                    curvature: CurvatureInputs {
                        h2: pick(a.h2, f, "h2", d.h2)?,
                        rninj2: pick(a.rninj2, f, "rninj2", d.rninj2)?,
                        wbar2: pick(a.wbar2, f, "wbar2", d.wbar2)?,
                        rnn2: pick(a.rnn2, f, "rnn2", d.rnn2)?,
                    },
                    exploratory: a.exploratory || f.get("exploratory")?.unwrap_or(false),
                    csv: pick_opt(a.csv.clone(), f, "csv")?,
                    svg: pick_opt(a.svg.clone(), f, "svg")?,
                    json: pick_opt(a.json.clone(), f, "json")?,
                    ..common.base(&a.grid)?
                }
            }
        })
    })()
    .map_err(config_err)?;
    cfg.validate().map_err(config_err)?;
    Ok(cfg)
}

fn numerics(cfg: &RunConfig) -> Result<NumericsConfig, Failure> {
    let grid =
        Grid2D::new(cfg.rmax, cfg.smax, cfg.nr, cfg.ns).map_err(|e| config_err(e.to_string()))?;
    Ok(NumericsConfig {
        grid,
        solve: SolveOptions {
            tol: cfg.tol,
            far_field_levels: cfg.far_field_levels,
            ..SolveOptions::default()
        },
    })
}

/// The perturbation `--fuzz` applies: identity and dimension drawn from the seed.
pub fn fuzz_target(cfg: &RunConfig) -> Result<Option<Perturbation>, Failure> {
    let Some(eps) = cfg.fuzz else { return Ok(None) };
    let lo = cfg.n_min.max(6);
    if lo > cfg.n_max {
        return Err(config_err(
            "--fuzz needs at least one dimension n >= 6 in range",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let identity = rng.gen_range(0..IDENTITY_NAMES.len());
    let n = rng.gen_range(lo..=cfg.n_max);
    Perturbation::relative(identity, n, eps)
        .map(Some)
        .ok_or_else(|| config_err(format!("cannot represent fuzz epsilon {eps}")))
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<Status, Failure> {
    let perturbation = fuzz_target(cfg)?;
    let checks = run_suite(cfg.n_min, cfg.n_max, perturbation.as_ref());
    let failed = checks.iter().filter(|c| !c.passed).count();
    let first = first_failure(&checks);
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "verify",
        "config": cfg,
        "checks": checks.len(),
        "failed": failed,
        "passed": failed == 0,
        "first_failure": first,
        "perturbation": perturbation.as_ref().map(|p| json!({
            "identity": IDENTITY_NAMES[p.identity],
            "n": p.n,
            "epsilon": cfg.fuzz,
        })),
    });
    if let Some(path) = &cfg.report {
        write_file(path, &to_json(&report))?;
    }
    match cfg.format {
        Format::Json => print!("{}", to_json(&report)),
        Format::Text => match first {
            None => println!(
                "verify: {} checks over n in [{}, {}]: all passed",
                checks.len(),
                cfg.n_min,
                cfg.n_max
            ),
            Some(c) => println!(
                "verify: {failed} of {} checks failed; first failing identity '{}' at n = {}: {}",
                checks.len(),
                c.name,
                c.n,
                c.detail.as_deref().unwrap_or("")
            ),
        },
    }
    if let Some(c) = first {
        eprintln!("first failing identity: {} (n = {})", c.name, c.n);
        Ok(Status::VerificationFailure)
    } else {
        Ok(Status::Success)
    }
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<Status, Failure> {
    let p = match cfg.case.as_deref() {
        Some("v") => 1,
        Some("lambda") => 2,
        Some(other) => {
            return Err(config_err(format!(
                "solve --case must be v or lambda, got '{other}'"
            )))
        }
        None => return Err(config_err("solve needs --case {v|lambda}")),
    };
    let n = cfg.n.ok_or_else(|| config_err("solve needs --n"))?;
    let problem = AuxProblem::new(n, p).map_err(|e| config_err(e.to_string()))?;
    let num = numerics(cfg)?;
    let (field, solve_report) = auxpde::solve_reduced_with(&problem, num.grid, &num.solve)
        .map_err(|e| match e {
            auxpde::AuxError::GridTooCoarse { .. } => config_err(e.to_string()),
            other => solver_err(other),
        })?;
    let out = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}{n}.isoqf", problem.label())));
    fieldio::write_field(&out, &field, &problem).map_err(|e| config_err(e.to_string()))?;
    let meta = fieldio::FieldMeta {
        schema_version: SCHEMA_VERSION,
        problem,
        grid: num.grid,
        report: solve_report,
    };
    let meta_path = fieldio::write_meta(&out, &meta).map_err(|e| config_err(e.to_string()))?;
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "solve",
        "config": cfg,
        "field_path": out,
        "meta_path": meta_path,
        "meta": meta,
    });
    match cfg.format {
        Format::Json => print!("{}", to_json(&report)),
        Format::Text => println!(
            "solve: {} n={n} on {}x{} [0,{}]x[0,{}]: residual {:.2e}, {} refinement sweeps, decay fit {}, {} positivity violations -> {}",
            problem.label(),
            num.grid.nr,
            num.grid.ns,
            num.grid.rmax,
            num.grid.smax,
            meta.report.residual_rel,
            meta.report.iterations,
            meta.report.decay_fit_exponent.map(|k| format!("{k:.3}")).unwrap_or_else(|| "n/a".into()),
            meta.report.positivity_violations,
            out.display()
        ),
    }
    Ok(Status::Success)
}

pub fn cmd_coeffs(cfg: &RunConfig) -> Result<Status, Failure> {
    let case: Case = cfg
        .case
        .as_deref()
        .ok_or_else(|| config_err("coeffs needs --case {nonumbilic|umbilic}"))?
        .parse()
        .map_err(config_err)?;
    if cfg.n_min < isoq_core::expansion::MIN_DIMENSION {
        return Err(config_err(format!(
            "n_min must be >= {}",
            isoq_core::expansion::MIN_DIMENSION
        )));
    }
    if case.is_exploratory(cfg.n_min) && !cfg.exploratory {
        return Err(config_err(format!(
            "n_min = {} is below the {} threshold n = {}; pass --exploratory to compute labelled exploratory rows",
            cfg.n_min,
            case.as_str(),
            case.threshold()
        )));
    }
    let pipeline = Pipeline::new(numerics(cfg)?);
    let dims: Vec<u32> = (cfg.n_min..=cfg.n_max).collect();
    let rows: Vec<CoefficientReport> = dims
        .par_iter()
        .map(|&n| pipeline.report(case, n, &cfg.curvature))
        .collect::<Result<_, _>>()
        .map_err(solver_err)?;
    let csv_text = report::coefficients_csv(&rows);
    let json_report = report::CoeffsReport {
        schema_version: SCHEMA_VERSION,
        command: "coeffs",
        config: cfg,
        rows: &rows,
    };
    if let Some(p) = &cfg.csv {
        write_file(p, &csv_text)?;
    }
    if let Some(p) = &cfg.svg {
        write_file(p, &report::coefficients_svg(&rows, case))?;
    }
    if let Some(p) = &cfg.json {
        write_file(p, &to_json(&json_report))?;
    }
    match cfg.format {
        Format::Json => print!("{}", to_json(&json_report)),
        Format::Text => print!("{csv_text}"),
    }
    let failed: Vec<u32> = rows
        .iter()
        .filter(|r| !r.exploratory && !r.positive)
        .map(|r| r.n)
        .collect();
    if failed.is_empty() {
        Ok(Status::Success)
    } else {
        eprintln!("sign certificate not established for n = {failed:?}");
        Ok(Status::VerificationFailure)
    }
}

pub fn run(cli: &Cli) -> Status {
    let outcome = resolve(cli).and_then(|cfg| match cli.command {
        Command::Verify(_) => cmd_verify(&cfg),
        Command::Solve(_) => cmd_solve(&cfg),
        Command::Coeffs(_) => cmd_coeffs(&cfg),
    });
    match outcome {
        Ok(s) => s,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.status
        }
    }
}
