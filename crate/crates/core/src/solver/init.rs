//! Admissible starting fields.

use serde::{Deserialize, Serialize};

use super::{check_rhs, gauss_seidel, on_domain, Problem, Result, SolveError, SolverConfig};
use crate::cone::ConeMargin;
use crate::grid::{build_domain, DomainGrid, DomainSpec, GridField};

/// Largest barrier exponent tried: `B <= 2^40`.
const MAX_EXPONENT: i32 = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitReport {
    /// Barrier multiplier `B` of `phi + B rho`, when the barrier alone worked.
    pub multiplier: Option<f64>,
    /// Gauss-Seidel sweeps spent repairing the barrier start.
    pub repair_sweeps: usize,
    pub margin_min: f64,
}

fn candidates() -> impl Iterator<Item = f64> {
    std::iter::once(0.0).chain((0..=MAX_EXPONENT).map(|e| 2f64.powi(e)))
}

/// `phi + B rho` on the interior, `phi` on the collar.
fn barrier(grid: &DomainGrid, phi: &GridField, b: f64) -> Vec<f64> {
    let rho = grid.rho.values();
    phi.values()
        .iter()
        .zip(rho)
        .zip(grid.mask())
        .map(|((p, r), &inside)| if inside { p + b * r } else { *p })
        .collect()
}

/// Interior positions whose stencil touches only interior points.
fn deep_positions(problem: &Problem, mask: &[bool]) -> Vec<usize> {
    let geom = &problem.geom;
    let offsets = super::relax::stencil_offsets(geom.strides());
    (0..problem.len())
        .filter(|&pos| {
            let lin = problem.interior[pos] as isize;
            offsets.iter().all(|off| mask[(lin + off) as usize])
        })
        .collect()
}

/// Barrier start `u0 = phi + B rho` with the smallest `B` in `{0, 1, 2, 4, ..,
/// 2^40}` whose discrete Hessian is admissible with `S_m >= max f` at every
/// interior point; collar values equal `phi`.
///
/// Because the collar is clamped to `phi`, points next to the boundary can
/// stay inadmissible for every `B`. The start is then taken from the deep
/// interior and repaired by Gauss-Seidel sweeps towards `S_m = max f` until
/// every interior margin is positive.
pub fn initialize(
    domain: &DomainSpec,
    f: &GridField,
    phi: &GridField,
    m: usize,
) -> Result<GridField> {
    Ok(initialize_detailed(domain, f, phi, m, &SolverConfig::default())?.0)
}

pub fn initialize_detailed(
    domain: &DomainSpec,
    f: &GridField,
    phi: &GridField,
    m: usize,
    cfg: &SolverConfig,
) -> Result<(GridField, InitReport)> {
    let grid = build_domain(domain)?;
    let f = on_domain(&grid, f, "f")?;
    let phi = on_domain(&grid, phi, "phi")?;
    check_rhs(&grid, &f, super::Scheme::GaussSeidel)?;
    let problem = Problem::new(&phi, &f, m, cfg.exec)?;
    let f_max = problem.f.iter().copied().fold(0.0, f64::max);
    let slack = 1e-10 * (1.0 + f_max);

    // Per interior point: positive margin and S_m >= max f.
    let point_ok = |values: &[f64]| {
        problem.exec.map(problem.len(), |pos| {
            let s = problem.hessian(values, pos).symmetric_functions();
            ConeMargin::from_symmetric(&s, m).member && s[m] >= f_max - slack
        })
    };
    let deep = deep_positions(&problem, grid.mask());
    let mut deep_start = None;
    for b in candidates() {
        let values = barrier(&grid, &phi, b);
        let ok = point_ok(&values);
        if ok.iter().all(|&v| v) {
            let eval = problem.evaluate(&values);
            let report = InitReport {
                multiplier: Some(b),
                repair_sweeps: 0,
                margin_min: eval.margin_min,
            };
            return Ok((phi.with_values(values)?, report));
        }
        if deep_start.is_none() && deep.iter().all(|&pos| ok[pos]) {
            deep_start = Some(values);
        }
    }
    let mut values = deep_start.ok_or_else(|| {
        SolveError::Init(format!(
            "no barrier multiplier up to 2^{MAX_EXPONENT} makes the start admissible"
        ))
    })?;

    let target = if f_max > 0.0 { f_max } else { 1.0 };
    for sweep in 1..=cfg.repair_sweeps {
        gauss_seidel::sweep(&problem, &mut values, |_| target);
        let eval = problem.evaluate(&values);
        if eval.margin_min > 0.0 {
            let report = InitReport {
                multiplier: None,
                repair_sweeps: sweep,
                margin_min: eval.margin_min,
            };
            return Ok((phi.with_values(values)?, report));
        }
    }
    Err(SolveError::Init(format!(
        "start still inadmissible after {} repair sweeps",
        cfg.repair_sweeps
    )))
}
