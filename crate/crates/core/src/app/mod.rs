//! Batch runs driven by a JSON config: solve, glue, check and oracle.
//!
//! Every run writes its artifacts atomically into the output directory and
//! maps its outcome to an exit status: 0 success, 2 verification failure,
//! 3 solver non-convergence, 4 configuration error, 1 I/O failure.

pub mod config;
pub mod expr;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

pub use config::{CheckSpec, Command, FieldSpec, OracleSpec, RhsSpec, RunConfig, TorusSpec};
pub use expr::{parse_expression, Expr, ExprError};

use crate::cone::binomial;
use crate::glue::{run_pipeline, AdmissibilityReport, GlueError, PieceSummary};
use crate::grid::{build_domain, wedge_coefficient_ratio, wedge_normalization, GridError, GridField, GridGeometry};
use crate::io::{read_field, write_atomic, write_field, write_json, IoError};
use crate::sampling::{random_hermitian, rng};
use crate::solver::{solve_dirichlet, solve_homogeneous, SolveDiagnostics, SolveError};
use crate::validation::{viscosity_check_with, ValidationError, ViolationReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VERIFICATION: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("solver did not converge: {0}")]
    NotConverged(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => EXIT_CONFIG,
            AppError::Read { .. } | AppError::Io(_) => EXIT_IO,
            AppError::NotConverged(_) => EXIT_NOT_CONVERGED,
        }
    }
}

impl From<GridError> for AppError {
    fn from(e: GridError) -> Self {
        AppError::Config(e.to_string())
    }
}

impl From<SolveError> for AppError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Config(_) | SolveError::Grid(_) | SolveError::Argument(_) => {
                AppError::Config(e.to_string())
            }
            SolveError::NotAdmissible { .. } | SolveError::NotConverged(_) | SolveError::Init(_) => {
                AppError::NotConverged(e.to_string())
            }
        }
    }
}

impl From<ValidationError> for AppError {
    fn from(e: ValidationError) -> Self {
        AppError::Config(e.to_string())
    }
}

/// Options coming from the command line rather than the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the config's `output`.
    pub out: Option<PathBuf>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: i32,
    /// Deterministic summary, also written to `summary.txt`.
    pub summary: String,
    pub out_dir: PathBuf,
}

/// Executes `command` and writes its artifacts.
pub fn run(command: Command, cfg: &RunConfig, opts: &RunOptions) -> Result<RunOutcome, AppError> {
    cfg.validate(command)?;
    let out_dir = opts
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(|p| cfg.resolve(p)))
        .ok_or_else(|| AppError::Config("no output directory: pass --out or set 'output'".into()))?;
    std::fs::create_dir_all(&out_dir).map_err(|source| IoError::Io {
        path: out_dir.clone(),
        source,
    })?;
    let mut summary = String::new();
    let _ = writeln!(summary, "command: {}", command.name());
    let _ = writeln!(summary, "config sha256: {}", cfg.content_hash(command, opts.seed));
    let status = match command {
        Command::Solve => solve(cfg, &out_dir, &mut summary)?,
        Command::Glue => glue(cfg, &out_dir, &mut summary)?,
        Command::Check => check(cfg, &out_dir, &mut summary)?,
        Command::Oracle => oracle(cfg, opts.seed, &out_dir, &mut summary)?,
    };
    let _ = writeln!(summary, "status: {status}");
    write_atomic(&out_dir.join("summary.txt"), summary.as_bytes())?;
    Ok(RunOutcome {
        status,
        summary,
        out_dir,
    })
}

#[derive(Serialize)]
struct SolveReport<'a> {
    solve: &'a SolveDiagnostics,
    viscosity: &'a ViolationReport,
    density_normalization: Option<f64>,
    max_error: Option<f64>,
}

fn verification_tol(h: f64) -> f64 {
    10.0 * h * h
}

fn solve(cfg: &RunConfig, out: &Path, summary: &mut String) -> Result<i32, AppError> {
    let domain = cfg.domain.as_ref().expect("validated");
    let rhs = cfg.rhs.as_ref().expect("validated");
    let grid = build_domain(domain)?;
    let template = grid.mask_field();
    let phi = cfg
        .boundary
        .as_ref()
        .expect("validated")
        .field_like("boundary", &template)?;
    let (u, mut diag, kappa) = match rhs.as_field() {
        Some(spec) => {
            let mut f = spec.field_like("rhs", &template)?;
            let kappa = if cfg.density {
                let kappa = wedge_normalization(cfg.n, cfg.m)?;
                f = f.map(|v| v / kappa)?;
                Some(kappa)
            } else {
                None
            };
            let (u, diag) = solve_dirichlet(domain, &f, &phi, cfg.m, &cfg.solver)?;
            (u, diag, kappa)
        }
        None => {
            let (u, diag) = solve_homogeneous(domain, &phi, cfg.m, &cfg.solver)?;
            (u, diag, None)
        }
    };
    // Timing stays out of the artifacts so identical configs give identical files.
    diag.wall_time_s = 0.0;
    let h = domain.spacing;
    let viscosity = viscosity_check_with(&u, cfg.m, verification_tol(h), 0.0, None)?;
    let max_error = match &cfg.exact {
        Some(spec) => Some(u.max_abs_diff(&spec.field_like("exact", &template)?)?),
        None => None,
    };
    write_field(&out.join("u.csv"), &u)?;
    write_json(
        &out.join("diagnostics.json"),
        &SolveReport {
            solve: &diag,
            viscosity: &viscosity,
            density_normalization: kappa,
            max_error,
        },
    )?;
    let _ = writeln!(summary, "grid points: {} ({} interior)", u.len(), grid.interior_count());
    let _ = writeln!(
        summary,
        "scheme: {:?}, iterations: {}",
        diag.scheme, diag.iterations
    );
    let _ = writeln!(summary, "residual: {:e}", diag.residual_max);
    let _ = writeln!(summary, "cone margin min: {:e}", diag.cone_margin_min);
    if let Some(gap) = diag.level_gap {
        let _ = writeln!(summary, "last level gap: {gap:e}");
    }
    if let Some(k) = kappa {
        let _ = writeln!(summary, "density normalization: {k}");
    }
    if let Some(e) = max_error {
        let _ = writeln!(summary, "max error vs exact: {e:e}");
    }
    let _ = writeln!(
        summary,
        "viscosity check (tol {:e}): {}",
        viscosity.tol,
        pass_word(viscosity.pass)
    );
    finish_check(&viscosity, out)
}

fn pass_word(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}

/// Writes `violations.json` for a failed report and returns the status.
fn finish_check(report: &ViolationReport, out: &Path) -> Result<i32, AppError> {
    if report.pass {
        Ok(EXIT_OK)
    } else {
        write_json(&out.join("violations.json"), report)?;
        Ok(EXIT_VERIFICATION)
    }
}

#[derive(Serialize)]
struct GlueReport<'a> {
    charts: usize,
    j: f64,
    j_doublings: usize,
    sandwich: &'a ViolationReport,
    admissibility: &'a AdmissibilityReport,
    pieces: &'a [PieceSummary],
}

fn glue(cfg: &RunConfig, out: &Path, summary: &mut String) -> Result<i32, AppError> {
    let torus = cfg.torus.as_ref().expect("validated");
    let geom = std::sync::Arc::new(GridGeometry::torus(cfg.n, torus.points, torus.period)?);
    let values = cfg.input.as_ref().expect("validated").sample("input", &geom)?;
    let u = GridField::new(geom, None, values)?;
    let mut glue_cfg = cfg.glue.clone();
    glue_cfg.m = cfg.m;
    let result = match run_pipeline(&u, &glue_cfg) {
        Ok(r) => r,
        Err(e) => return glue_failure(e, out, summary),
    };
    write_field(&out.join("u.csv"), &result.u)?;
    write_field(&out.join("psi.csv"), &result.psi)?;
    write_json(
        &out.join("diagnostics.json"),
        &GlueReport {
            charts: result.pieces.len(),
            j: result.j,
            j_doublings: result.j_doublings,
            sandwich: &result.sandwich,
            admissibility: &result.admissibility,
            pieces: &result.pieces,
        },
    )?;
    let _ = writeln!(summary, "charts: {}", result.pieces.len());
    let _ = writeln!(summary, "j: {} after {} doublings", result.j, result.j_doublings);
    let _ = writeln!(
        summary,
        "sandwich (h = {}): worst {:e}, {}",
        glue_cfg.h_target,
        result.sandwich.worst,
        pass_word(result.sandwich.pass)
    );
    let _ = writeln!(
        summary,
        "admissibility margin: {:e}, {}",
        result.admissibility.margin_min,
        pass_word(result.admissibility.pass)
    );
    // The pipeline only returns once both checks pass.
    Ok(EXIT_OK)
}

fn glue_failure(e: GlueError, out: &Path, summary: &mut String) -> Result<i32, AppError> {
    match e {
        GlueError::Config(_) | GlueError::Grid(_) | GlueError::Validation(_) | GlueError::Cover(_) => {
            Err(AppError::Config(e.to_string()))
        }
        GlueError::Solve { .. } | GlueError::Infeasible { .. } => Err(AppError::NotConverged(e.to_string())),
        GlueError::Modification { .. } | GlueError::NotAdmissible { .. } => {
            let message = e.to_string();
            let _ = writeln!(summary, "verification failed: {message}");
            write_json(&out.join("violations.json"), &serde_json::json!({ "error": message }))?;
            Ok(EXIT_VERIFICATION)
        }
    }
}

fn check(cfg: &RunConfig, out: &Path, summary: &mut String) -> Result<i32, AppError> {
    let path = cfg.resolve(cfg.check.field.as_ref().expect("validated"));
    let u = read_field(&path)?;
    if u.geometry().n() != cfg.n {
        return Err(AppError::Config(format!(
            "field 'check.field': stored dimension {} but n = {}",
            u.geometry().n(),
            cfg.n
        )));
    }
    let tol = cfg
        .check
        .tol
        .unwrap_or_else(|| verification_tol(u.geometry().spacing()));
    let report = viscosity_check_with(&u, cfg.m, tol, cfg.check.shift, None)?;
    write_json(&out.join("check.json"), &report)?;
    let _ = writeln!(summary, "field: {}", path.display());
    let _ = writeln!(summary, "points checked: {}", report.checked);
    let _ = writeln!(summary, "worst violation: {:e} (tol {:e})", report.worst, tol);
    let _ = writeln!(summary, "violations: {}, {}", report.violations.len(), pass_word(report.pass));
    finish_check(&report, out)
}

#[derive(Serialize)]
struct OracleReport {
    n: usize,
    m: usize,
    kappa: f64,
    hypothesis: f64,
    hypothesis_holds: bool,
    samples: usize,
    seed: u64,
    max_sample_deviation: f64,
}

/// Relative agreement demanded of the closed form.
const HYPOTHESIS_TOL: f64 = 1e-12;
/// Agreement demanded of the ratio on random matrices, where `S_m` may be small.
const SAMPLE_TOL: f64 = 1e-9;

fn oracle(cfg: &RunConfig, seed: u64, out: &Path, summary: &mut String) -> Result<i32, AppError> {
    let (n, m) = (cfg.n, cfg.m);
    let kappa = wedge_normalization(n, m)?;
    let hypothesis = 1.0 / binomial(n, m);
    let mut r = rng(seed);
    let mut deviation: f64 = 0.0;
    let mut used = 0;
    while used < cfg.oracle.samples {
        let a = random_hermitian(&mut r, n, 1.0);
        // Matrices with S_m near zero leave the ratio undefined.
        let Ok(ratio) = wedge_coefficient_ratio(&a, m) else {
            continue;
        };
        deviation = deviation.max((ratio - kappa).abs());
        used += 1;
    }
    let hypothesis_holds = (kappa - hypothesis).abs() <= HYPOTHESIS_TOL * hypothesis;
    let report = OracleReport {
        n,
        m,
        kappa,
        hypothesis,
        hypothesis_holds,
        samples: used,
        seed,
        max_sample_deviation: deviation,
    };
    write_json(&out.join("oracle.json"), &report)?;
    let _ = writeln!(summary, "kappa({n},{m}) = {kappa}");
    let _ = writeln!(
        summary,
        "closed form m!(n-m)!/n! = {hypothesis}: {}",
        if hypothesis_holds { "agrees" } else { "DISAGREES" }
    );
    let _ = writeln!(
        summary,
        "max deviation over {used} random Hermitian matrices (seed {seed}): {deviation:e}"
    );
    Ok(if deviation <= SAMPLE_TOL {
        EXIT_OK
    } else {
        EXIT_VERIFICATION
    })
}
