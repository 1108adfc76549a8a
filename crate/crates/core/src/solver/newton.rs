//! Damped Newton on `S_m(H u)^{1/m} = f^{1/m}`.

use crate::cone::HermitianMatrix;

use super::relax::{Operator, Relaxation};
use super::{root, Evaluation, Failure, Problem, SolveDiagnostics, SolveError, SolverConfig};
use crate::grid::Topology;

/// Step lengths below this end the line search.
const MIN_STEP: f64 = 1.0 / (1u64 << 30) as f64;

/// Normalized Jacobian symbols `D_m / (m S_m^{(m-1)/m})` and right-hand side
/// `f^{1/m} - S_m^{1/m}` per interior point.
fn linearize(problem: &Problem, values: &[f64]) -> (Vec<HermitianMatrix>, Vec<f64>) {
    let m = problem.m;
    let per_point = problem.exec.map(problem.len(), |pos| {
        let (s, d) = problem.hessian(values, pos).symmetric_functions_and_derivative(m);
        let sm = s[m];
        let scale = 1.0 / (m as f64 * sm.powf((m - 1) as f64 / m as f64));
        (d.scaled(scale), root(problem.f[pos], m) - root(sm, m))
    });
    per_point.into_iter().unzip()
}

pub(super) fn run(
    problem: &Problem,
    values: &mut [f64],
    cfg: &SolverConfig,
    diag: &mut SolveDiagnostics,
) -> Result<(), Failure> {
    if problem.geom.topology() != Topology::Box {
        return Err(SolveError::Argument("the newton scheme needs a box grid".into()).into());
    }
    let tol = cfg.tol_residual;
    let mut eval = problem.evaluate(values);
    if eval.margin_min <= cfg.cone_floor {
        return Err(problem.not_admissible(&eval).into());
    }
    diag.residual_history.push(eval.raw_max);
    let relax = Relaxation::new(problem);
    let mut trial = values.to_vec();
    while !eval.converged(tol) {
        if diag.iterations == cfg.max_outer {
            return Err(Failure::NotConverged);
        }
        let (symbols, rhs) = linearize(problem, values);
        let op = Operator::assemble(problem, &symbols);
        let (w, sweeps, _) = relax.solve(problem, &op, &rhs, &cfg.linear);
        diag.linear_sweeps += sweeps;

        let mut step = cfg.damping;
        let accepted: Evaluation = loop {
            for &lin in &problem.interior {
                trial[lin] = values[lin] + step * w[lin];
            }
            let e = problem.evaluate(&trial);
            let improves = e.norm_l2 < eval.norm_l2 || e.converged(tol);
            if e.margin_min > cfg.cone_floor && improves {
                break e;
            }
            step *= 0.5;
            if step < MIN_STEP {
                return Err(Failure::NotConverged);
            }
        };
        values.copy_from_slice(&trial);
        eval = accepted;
        diag.iterations += 1;
        diag.residual_history.push(eval.raw_max);
    }
    Ok(())
}
