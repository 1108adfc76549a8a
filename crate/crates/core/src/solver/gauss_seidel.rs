//! Nonlinear Gauss-Seidel: lexicographic sweeps, each point solving for its
//! own value by bisection.
//!
//! Raising the center value by `δ` lowers the discrete complex Hessian there by
//! `(δ / h^2) I`, so the pointwise equation is `S_m(H - s I) = f` in the shift
//! `s = δ / h^2`, evaluated from `S_0..S_n` of `H` without re-factoring.

use crate::cone::binomial;

use super::{Failure, Problem, SolveDiagnostics, SolverConfig};

const MAX_BISECTIONS: usize = 60;
const MAX_EXPANSIONS: usize = 200;

/// `S_j(H - sI) = Σ_{i <= j} C(n - i, j - i) (-s)^{j - i} S_i(H)`.
pub(crate) fn shifted_symmetric(s: &[f64], j: usize, shift: f64) -> f64 {
    let n = s.len() - 1;
    let mut acc = 0.0;
    let mut power = 1.0;
    for i in (0..=j).rev() {
        acc += binomial(n - i, j - i) * power * s[i];
        power *= -shift;
    }
    acc
}

/// Whether `H - shift I` lies in the open cone with `S_m > target`.
fn admissible_above(s: &[f64], m: usize, target: f64, shift: f64) -> bool {
    (1..m).all(|k| shifted_symmetric(s, k, shift) > 0.0) && shifted_symmetric(s, m, shift) > target
}

/// The shift solving `S_m(H - sI) = target` on the admissible branch, from
/// `S_0..S_n` of `H`. `None` if the bracket cannot be found.
pub(crate) fn pointwise_shift(s: &[f64], m: usize, target: f64) -> Option<f64> {
    let ok = |shift: f64| admissible_above(s, m, target, shift);
    let mut lo = 0.0;
    let mut width = 1.0;
    let mut expansions = 0;
    while !ok(lo) {
        lo = -width;
        width *= 2.0;
        expansions += 1;
        if expansions > MAX_EXPANSIONS {
            return None;
        }
    }
    let mut width = 1.0;
    let mut hi = lo + width;
    while ok(hi) {
        width *= 2.0;
        hi = lo + width;
        expansions += 1;
        if expansions > MAX_EXPANSIONS {
            return None;
        }
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// One lexicographic sweep towards `S_m = target(pos)`.
pub(crate) fn sweep(problem: &Problem, values: &mut [f64], target: impl Fn(usize) -> f64) {
    let h2 = problem.geom.spacing() * problem.geom.spacing();
    for pos in 0..problem.len() {
        let s = problem.hessian(values, pos).symmetric_functions();
        if let Some(shift) = pointwise_shift(&s, problem.m, target(pos)) {
            values[problem.interior[pos]] += shift * h2;
        }
    }
}

pub(super) fn run(
    problem: &Problem,
    values: &mut [f64],
    cfg: &SolverConfig,
    diag: &mut SolveDiagnostics,
) -> Result<(), Failure> {
    let mut eval = problem.evaluate(values);
    diag.residual_history.push(eval.raw_max);
    while !eval.converged(cfg.tol_residual) {
        if diag.iterations == cfg.max_outer {
            return Err(Failure::NotConverged);
        }
        sweep(problem, values, |pos| problem.f[pos]);
        eval = problem.evaluate(values);
        diag.iterations += 1;
        diag.residual_history.push(eval.raw_max);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::HermitianMatrix;
    use num_complex::Complex64;

    #[test]
    fn shift_identity_matches_direct_evaluation() {
        let a = HermitianMatrix::from_fn(3, |p, q| match (p, q) {
            (0, 0) => Complex64::new(1.5, 0.0),
            (1, 1) => Complex64::new(-0.3, 0.0),
            (2, 2) => Complex64::new(2.0, 0.0),
            (0, 1) => Complex64::new(0.2, 0.7),
            (1, 0) => Complex64::new(0.2, -0.7),
            (1, 2) => Complex64::new(-0.4, 0.1),
            (2, 1) => Complex64::new(-0.4, -0.1),
            _ => Complex64::new(0.0, 0.0),
        })
        .unwrap();
        let s = a.symmetric_functions();
        for &shift in &[-1.3, 0.0, 0.4, 2.5] {
            let direct = a.shifted(-shift).symmetric_functions();
            for j in 0..=3 {
                let via = shifted_symmetric(&s, j, shift);
                assert!((via - direct[j]).abs() < 1e-12 * (1.0 + direct[j].abs()));
            }
        }
    }

    #[test]
    fn pointwise_root_solves_the_scalar_equation() {
        // H = diag(1, 3): S_2(H - sI) = (1 - s)(3 - s) = 1.25 at s = 0.5.
        let s = HermitianMatrix::diag(&[1.0, 3.0]).symmetric_functions();
        let shift = pointwise_shift(&s, 2, 1.25).unwrap();
        assert!((shift - 0.5).abs() < 1e-14, "{shift}");
        // Inadmissible H needs a negative shift.
        let s = HermitianMatrix::diag(&[-2.0, 1.0]).symmetric_functions();
        let shift = pointwise_shift(&s, 2, 1.0).unwrap();
        let after = shifted_symmetric(&s, 2, shift);
        assert!((after - 1.0).abs() < 1e-12);
        assert!(shifted_symmetric(&s, 1, shift) > 0.0);
    }
}
