//! Dirichlet solver for `S_m(H u) = f` on a discretized domain with `u = phi`
//! on the collar (every non-interior grid point).

mod gauss_seidel;
mod init;
mod newton;
mod relax;

pub use init::{initialize, initialize_detailed, InitReport};

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cone::{ConeMargin, HermitianMatrix};
use crate::exec::Exec;
use crate::grid::{build_domain, hessian_at, DomainGrid, DomainSpec, GridError, GridField, GridGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Newton,
    GaussSeidel,
}

/// Relaxation settings for the linear systems inside a Newton step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearSolverConfig {
    pub max_sweeps: usize,
    /// Relative max-norm residual at which sweeping stops.
    pub tol: f64,
    /// Over-relaxation factor in `(0, 2)`.
    pub omega: f64,
}

impl Default for LinearSolverConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 4000,
            tol: 1e-4,
            omega: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub scheme: Scheme,
    /// Bound on both `max |S_m - f|` and `max |S_m^{1/m} - f^{1/m}|`.
    pub tol_residual: f64,
    /// Newton steps, or Gauss-Seidel sweeps.
    pub max_outer: usize,
    /// First step length tried by the Newton line search.
    pub damping: f64,
    /// Newton iterates must keep every interior cone margin above this.
    pub cone_floor: f64,
    /// Levels `eps` for the homogeneous path; level `eps` solves
    /// `S_m^{1/m} = eps`.
    pub eps_schedule: Vec<f64>,
    pub linear: LinearSolverConfig,
    /// Gauss-Seidel sweeps allowed when repairing an inadmissible start.
    pub repair_sweeps: usize,
    pub exec: Exec,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Newton,
            tol_residual: 1e-8,
            max_outer: 60,
            damping: 1.0,
            cone_floor: 0.0,
            eps_schedule: vec![1e-2, 1e-3, 1e-4],
            linear: LinearSolverConfig::default(),
            repair_sweeps: 500,
            exec: Exec::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(SolveError::Config(msg.to_string()));
        if !(self.tol_residual.is_finite() && self.tol_residual > 0.0) {
            return bad("tol_residual must be positive");
        }
        if self.max_outer == 0 {
            return bad("max_outer must be at least 1");
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad("damping must lie in (0, 1]");
        }
        if !(self.cone_floor.is_finite() && self.cone_floor >= 0.0) {
            return bad("cone_floor must be non-negative");
        }
        if self.eps_schedule.iter().any(|e| !(e.is_finite() && *e > 0.0))
            || self.eps_schedule.windows(2).any(|w| w[1] >= w[0])
        {
            return bad("eps_schedule must be positive and strictly decreasing");
        }
        let lin = &self.linear;
        if lin.max_sweeps == 0 || !(lin.tol > 0.0 && lin.tol < 1.0) {
            return bad("linear: need max_sweeps >= 1 and 0 < tol < 1");
        }
        if !(lin.omega > 0.0 && lin.omega < 2.0) {
            return bad("linear.omega must lie in (0, 2)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub scheme: Scheme,
    pub iterations: usize,
    /// `max |S_m(H u) - f|` over interior points.
    pub residual_max: f64,
    /// `max |S_m(H u)^{1/m} - f^{1/m}|` over interior points.
    pub normalized_residual_max: f64,
    pub cone_margin_min: f64,
    /// `residual_max` before the first and after every outer iteration.
    pub residual_history: Vec<f64>,
    pub linear_sweeps: usize,
    pub init_multiplier: Option<f64>,
    pub init_repair_sweeps: usize,
    /// Max pointwise change between successive eps levels.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub level_gaps: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_gap: Option<f64>,
    pub wall_time_s: f64,
}

impl SolveDiagnostics {
    fn new(scheme: Scheme) -> Self {
        Self {
            scheme,
            iterations: 0,
            residual_max: f64::NAN,
            normalized_residual_max: f64::NAN,
            cone_margin_min: f64::NAN,
            residual_history: Vec::new(),
            linear_sweeps: 0,
            init_multiplier: None,
            init_repair_sweeps: 0,
            level_gaps: Vec::new(),
            level_gap: None,
            wall_time_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, Error)]
pub enum SolveError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("grid point {index:?} is not admissible (cone margin {margin:e})")]
    NotAdmissible { index: Vec<usize>, margin: f64 },
    #[error(
        "no convergence after {} iterations (residual {:e})",
        .0.iterations,
        .0.residual_max
    )]
    NotConverged(Box<SolveDiagnostics>),
    #[error("initialization failed: {0}")]
    Init(String),
}

pub type Result<T> = std::result::Result<T, SolveError>;

fn check_order(geom: &GridGeometry, m: usize) -> Result<()> {
    if m == 0 || m > geom.n() {
        return Err(SolveError::Argument(format!(
            "m = {m} outside 1..={}",
            geom.n()
        )));
    }
    Ok(())
}

/// `sign(x) |x|^{1/m}`.
fn root(x: f64, m: usize) -> f64 {
    match m {
        1 => x,
        2 => x.signum() * x.abs().sqrt(),
        _ => x.signum() * x.abs().powf(1.0 / m as f64),
    }
}

/// The interior equations of one solve.
pub(crate) struct Problem {
    pub geom: Arc<GridGeometry>,
    /// Interior points in lexicographic order.
    pub interior: Vec<usize>,
    /// Right-hand side per interior point.
    pub f: Vec<f64>,
    pub m: usize,
    pub exec: Exec,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Evaluation {
    pub margin_min: f64,
    pub raw_max: f64,
    pub norm_max: f64,
    pub norm_l2: f64,
    /// Position (in `interior`) of the smallest margin.
    pub worst: usize,
}

impl Evaluation {
    pub fn converged(&self, tol: f64) -> bool {
        self.raw_max <= tol && self.norm_max <= tol
    }
}

impl Problem {
    pub fn new(field: &GridField, f: &GridField, m: usize, exec: Exec) -> Result<Self> {
        if !field.same_grid(f) {
            return Err(SolveError::Argument("fields do not share a grid".into()));
        }
        check_order(field.geometry(), m)?;
        let interior = field.interior_points();
        let f = interior.iter().map(|&i| f.values()[i]).collect();
        Ok(Self {
            geom: field.geometry_arc().clone(),
            interior,
            f,
            m,
            exec,
        })
    }

    pub fn len(&self) -> usize {
        self.interior.len()
    }

    pub fn hessian(&self, values: &[f64], pos: usize) -> HermitianMatrix {
        hessian_at(&self.geom, values, self.interior[pos])
    }

    pub fn evaluate(&self, values: &[f64]) -> Evaluation {
        let m = self.m;
        let per_point = self.exec.map(self.len(), |pos| {
            let s = self.hessian(values, pos).symmetric_functions();
            let margin = ConeMargin::from_symmetric(&s, m).margin;
            let f = self.f[pos];
            (margin, (s[m] - f).abs(), root(s[m], m) - root(f, m))
        });
        let mut e = Evaluation {
            margin_min: f64::INFINITY,
            raw_max: 0.0,
            norm_max: 0.0,
            norm_l2: 0.0,
            worst: 0,
        };
        for (pos, &(margin, raw, norm)) in per_point.iter().enumerate() {
            if margin < e.margin_min {
                e.margin_min = margin;
                e.worst = pos;
            }
            e.raw_max = e.raw_max.max(raw);
            e.norm_max = e.norm_max.max(norm.abs());
            e.norm_l2 += norm * norm;
        }
        e.norm_l2 = e.norm_l2.sqrt();
        e
    }

    pub fn not_admissible(&self, eval: &Evaluation) -> SolveError {
        SolveError::NotAdmissible {
            index: self.geom.unravel(self.interior[eval.worst]).to_vec(),
            margin: eval.margin_min,
        }
    }
}

/// Pointwise `S_m(H u) - f` on interior points, zero on the collar.
pub fn residual(u: &GridField, f: &GridField, m: usize) -> Result<GridField> {
    let problem = Problem::new(u, f, m, Exec::default())?;
    let values = u.values();
    let per_point = problem.exec.map(problem.len(), |pos| {
        problem.hessian(values, pos).symmetric_functions()[m] - problem.f[pos]
    });
    let mut out = vec![0.0; u.len()];
    for (pos, r) in per_point.into_iter().enumerate() {
        out[problem.interior[pos]] = r;
    }
    Ok(u.with_values(out)?)
}

/// Pointwise `tr(D_m(H u) H w)`: the derivative of [`residual`] at `u` in
/// direction `w`. Zero on the collar.
pub fn linearized_apply(u: &GridField, w: &GridField, m: usize) -> Result<GridField> {
    let problem = Problem::new(u, w, m, Exec::default())?;
    let (uv, wv) = (u.values(), w.values());
    let per_point = problem.exec.map(problem.len(), |pos| {
        let (s, d) = problem.hessian(uv, pos).symmetric_functions_and_derivative(m);
        let margin = ConeMargin::from_symmetric(&s, m);
        let hw = problem.hessian(wv, pos);
        (margin.margin, d.trace_product(&hw).expect("same dimension"))
    });
    let mut out = vec![0.0; u.len()];
    for (pos, &(margin, value)) in per_point.iter().enumerate() {
        if margin <= 0.0 {
            return Err(SolveError::NotAdmissible {
                index: problem.geom.unravel(problem.interior[pos]).to_vec(),
                margin,
            });
        }
        out[problem.interior[pos]] = value;
    }
    Ok(u.with_values(out)?)
}

/// Re-homes `field` onto the domain grid (its mask), checking geometry.
fn on_domain(grid: &DomainGrid, field: &GridField, name: &str) -> Result<GridField> {
    if field.geometry() != grid.geometry().as_ref() {
        return Err(SolveError::Argument(format!(
            "{name} is not sampled on the domain grid"
        )));
    }
    if let Some(mask) = field.mask() {
        if mask != grid.mask() {
            return Err(SolveError::Argument(format!(
                "{name} carries a different interior mask"
            )));
        }
    }
    Ok(grid.rho.with_values(field.values().to_vec())?)
}

fn check_rhs(grid: &DomainGrid, f: &GridField, scheme: Scheme) -> Result<()> {
    let mask = grid.mask();
    let interior = f.values().iter().zip(mask).filter(|(_, &b)| b);
    let f_min = interior.map(|(v, _)| *v).fold(f64::INFINITY, f64::min);
    if f_min < 0.0 {
        return Err(SolveError::Argument(format!(
            "right-hand side is negative (min {f_min:e})"
        )));
    }
    if scheme == Scheme::Newton && f_min <= 0.0 {
        return Err(SolveError::Argument(
            "the newton scheme needs a strictly positive right-hand side".into(),
        ));
    }
    Ok(())
}

/// Solves the Dirichlet problem from the barrier start of [`initialize`].
pub fn solve_dirichlet(
    domain: &DomainSpec,
    f: &GridField,
    phi: &GridField,
    m: usize,
    cfg: &SolverConfig,
) -> Result<(GridField, SolveDiagnostics)> {
    cfg.validate()?;
    let start = Instant::now();
    let (u0, report) = initialize_detailed(domain, f, phi, m, cfg)?;
    let (u, mut diag) = solve_from(domain, f, phi, &u0, m, cfg)?;
    diag.init_multiplier = report.multiplier;
    diag.init_repair_sweeps = report.repair_sweeps;
    diag.wall_time_s = start.elapsed().as_secs_f64();
    Ok((u, diag))
}

/// Solves the Dirichlet problem from a caller-supplied start `u0`, which must
/// equal `phi` on the collar and (for Newton) be admissible.
pub fn solve_dirichlet_from(
    domain: &DomainSpec,
    f: &GridField,
    phi: &GridField,
    u0: &GridField,
    m: usize,
    cfg: &SolverConfig,
) -> Result<(GridField, SolveDiagnostics)> {
    cfg.validate()?;
    solve_from(domain, f, phi, u0, m, cfg)
}

fn solve_from(
    domain: &DomainSpec,
    f: &GridField,
    phi: &GridField,
    u0: &GridField,
    m: usize,
    cfg: &SolverConfig,
) -> Result<(GridField, SolveDiagnostics)> {
    let start = Instant::now();
    let grid = build_domain(domain)?;
    check_order(grid.geometry(), m)?;
    let f = on_domain(&grid, f, "f")?;
    let phi = on_domain(&grid, phi, "phi")?;
    let u0 = on_domain(&grid, u0, "initial guess")?;
    check_rhs(&grid, &f, cfg.scheme)?;
    let mask = grid.mask();
    if let Some(i) = (0..mask.len()).find(|&i| !mask[i] && u0.values()[i] != phi.values()[i]) {
        return Err(SolveError::Argument(format!(
            "initial guess differs from phi on the collar at {:?}",
            grid.geometry().unravel(i).as_slice()
        )));
    }
    let problem = Problem::new(&u0, &f, m, cfg.exec)?;
    let mut values = u0.values().to_vec();
    let mut diag = SolveDiagnostics::new(cfg.scheme);
    let outcome = match cfg.scheme {
        Scheme::Newton => newton::run(&problem, &mut values, cfg, &mut diag),
        Scheme::GaussSeidel => gauss_seidel::run(&problem, &mut values, cfg, &mut diag),
    };
    let u = u0.with_values(values)?;
    let eval = problem.evaluate(u.values());
    diag.residual_max = residual(&u, &f, m)?
        .values()
        .iter()
        .fold(0.0, |acc, r| acc.max(r.abs()));
    diag.normalized_residual_max = eval.norm_max;
    diag.cone_margin_min = eval.margin_min;
    diag.wall_time_s = start.elapsed().as_secs_f64();
    match outcome {
        Ok(()) => Ok((u, diag)),
        Err(Failure::NotConverged) => Err(SolveError::NotConverged(Box::new(diag))),
        Err(Failure::Other(e)) => Err(e),
    }
}

pub(crate) enum Failure {
    NotConverged,
    Other(SolveError),
}

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        Failure::Other(e)
    }
}

/// The degenerate problem `S_m(H u) = 0` approached through the levels
/// `S_m^{1/m} = eps` of `cfg.eps_schedule`, each warm-started from the last.
pub fn solve_homogeneous(
    domain: &DomainSpec,
    phi: &GridField,
    m: usize,
    cfg: &SolverConfig,
) -> Result<(GridField, SolveDiagnostics)> {
    cfg.validate()?;
    if cfg.eps_schedule.is_empty() {
        return Err(SolveError::Config("eps_schedule is empty".into()));
    }
    let start = Instant::now();
    let level_rhs = |eps: f64| phi.constant_like(eps.powi(m as i32));
    let first = level_rhs(cfg.eps_schedule[0])?;
    let (mut u, report) = initialize_detailed(domain, &first, phi, m, cfg)?;
    let mut total = SolveDiagnostics::new(cfg.scheme);
    total.init_multiplier = report.multiplier;
    total.init_repair_sweeps = report.repair_sweeps;
    for (level, &eps) in cfg.eps_schedule.iter().enumerate() {
        let f = level_rhs(eps)?;
        let (next, diag) = match solve_from(domain, &f, phi, &u, m, cfg) {
            Ok(ok) => ok,
            Err(SolveError::NotConverged(mut diag)) => {
                diag.iterations += total.iterations;
                return Err(SolveError::NotConverged(diag));
            }
            Err(e) => return Err(e),
        };
        if level > 0 {
            total.level_gaps.push(next.max_abs_diff(&u)?);
        }
        total.iterations += diag.iterations;
        total.linear_sweeps += diag.linear_sweeps;
        total.residual_history.extend(diag.residual_history);
        total.residual_max = diag.residual_max;
        total.normalized_residual_max = diag.normalized_residual_max;
        total.cone_margin_min = diag.cone_margin_min;
        u = next;
    }
    total.level_gap = total.level_gaps.last().copied();
    total.wall_time_s = start.elapsed().as_secs_f64();
    Ok((u, total))
}
