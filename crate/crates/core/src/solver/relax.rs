//! Multicolor SOR for the linearized operator `w -> Σ_ab M_ab D_ab w` with
//! `w = 0` on the collar.
//!
//! Point colors are `Σ_a (a + 1) i_a mod 4n`: every stencil offset changes the
//! color, so points of one color can be relaxed simultaneously and the result
//! does not depend on the execution mode.

use crate::cone::HermitianMatrix;
use crate::exec::Exec;
use crate::grid::Topology;

use super::{LinearSolverConfig, Problem};

/// Stencil coefficients per interior point.
pub(super) struct Operator {
    /// Neighbor offsets shared by all points: `+e_a, -e_a` for every axis,
    /// then `++, +-, -+, --` for every axis pair `a < b`.
    offsets: Vec<isize>,
    /// `offsets.len()` weights per interior point.
    weights: Vec<f64>,
    center: Vec<f64>,
}

pub(super) fn stencil_offsets(strides: &[usize]) -> Vec<isize> {
    let s: Vec<isize> = strides.iter().map(|&v| v as isize).collect();
    let axes = s.len();
    let mut offsets = Vec::new();
    for a in 0..axes {
        offsets.push(s[a]);
        offsets.push(-s[a]);
    }
    for a in 0..axes {
        for b in a + 1..axes {
            offsets.extend([s[a] + s[b], s[a] - s[b], -s[a] + s[b], -s[a] - s[b]]);
        }
    }
    offsets
}

/// Real `2n x 2n` symbol `M` with `tr(D H w) = Σ_ab M_ab ∂_a ∂_b w`.
pub(super) fn real_symbol(d: &HermitianMatrix) -> [[f64; 6]; 6] {
    let n = d.dim();
    let mut m = [[0.0; 6]; 6];
    for p in 0..n {
        for q in 0..n {
            let z = d.get(p, q);
            m[2 * p][2 * q] = 0.25 * z.re;
            m[2 * p + 1][2 * q + 1] = 0.25 * z.re;
            m[2 * p][2 * q + 1] = 0.25 * z.im;
            m[2 * q + 1][2 * p] = 0.25 * z.im;
        }
    }
    m
}

impl Operator {
    /// Assembles the operator from one symbol matrix `D` per interior point.
    pub fn assemble(problem: &Problem, symbols: &[HermitianMatrix]) -> Self {
        let geom = &problem.geom;
        debug_assert_eq!(geom.topology(), Topology::Box);
        let axes = geom.axes();
        let offsets = stencil_offsets(geom.strides());
        let k = offsets.len();
        let inv_h2 = 1.0 / (geom.spacing() * geom.spacing());
        let per_point = problem.exec.map_slice(symbols, |d| {
            let m = real_symbol(d);
            let mut w = vec![0.0; k];
            let mut center = 0.0;
            for a in 0..axes {
                w[2 * a] = m[a][a] * inv_h2;
                w[2 * a + 1] = m[a][a] * inv_h2;
                center -= 2.0 * m[a][a] * inv_h2;
            }
            let mut slot = 2 * axes;
            for a in 0..axes {
                for b in a + 1..axes {
                    let c = 0.5 * m[a][b] * inv_h2;
                    w[slot..slot + 4].copy_from_slice(&[c, -c, -c, c]);
                    slot += 4;
                }
            }
            (w, center)
        });
        let mut weights = Vec::with_capacity(k * symbols.len());
        let mut center = Vec::with_capacity(symbols.len());
        for (w, c) in per_point {
            weights.extend(w);
            center.push(c);
        }
        Self {
            offsets,
            weights,
            center,
        }
    }

    fn neighbor_sum(&self, pos: usize, lin: usize, w: &[f64]) -> f64 {
        let k = self.offsets.len();
        let weights = &self.weights[pos * k..(pos + 1) * k];
        weights
            .iter()
            .zip(&self.offsets)
            .map(|(c, &off)| c * w[(lin as isize + off) as usize])
            .sum()
    }

    /// `(J w)` at every interior point.
    pub fn apply(&self, problem: &Problem, w: &[f64], exec: Exec) -> Vec<f64> {
        exec.map(problem.len(), |pos| {
            let lin = problem.interior[pos];
            self.neighbor_sum(pos, lin, w) + self.center[pos] * w[lin]
        })
    }
}

pub(super) struct Relaxation {
    /// Interior positions grouped by color.
    colors: Vec<Vec<usize>>,
}

impl Relaxation {
    pub fn new(problem: &Problem) -> Self {
        let geom = &problem.geom;
        let palette = 2 * geom.axes();
        let mut colors = vec![Vec::new(); palette];
        for (pos, &lin) in problem.interior.iter().enumerate() {
            let idx = geom.unravel(lin);
            let c: usize = idx.iter().enumerate().map(|(a, &i)| (a + 1) * i).sum();
            colors[c % palette].push(pos);
        }
        colors.retain(|c| !c.is_empty());
        Self { colors }
    }

    /// Relaxes `J w = rhs`; returns the full-grid `w` (zero on the collar),
    /// the sweep count and the final relative residual.
    pub fn solve(
        &self,
        problem: &Problem,
        op: &Operator,
        rhs: &[f64],
        cfg: &LinearSolverConfig,
    ) -> (Vec<f64>, usize, f64) {
        let exec = problem.exec;
        let mut w = vec![0.0; problem.geom.len()];
        let rhs_norm = rhs.iter().fold(0.0f64, |a, r| a.max(r.abs()));
        if rhs_norm == 0.0 {
            return (w, 0, 0.0);
        }
        let relative_residual = |w: &[f64]| {
            let jw = op.apply(problem, w, exec);
            jw.iter()
                .zip(rhs)
                .fold(0.0f64, |a, (j, r)| a.max((r - j).abs()))
                / rhs_norm
        };
        let omega = cfg.omega;
        let mut sweeps = 0;
        let mut rel = 1.0;
        while sweeps < cfg.max_sweeps {
            for group in &self.colors {
                let updates = exec.map_slice(group, |&pos| {
                    let lin = problem.interior[pos];
                    let gs = (rhs[pos] - op.neighbor_sum(pos, lin, &w)) / op.center[pos];
                    w[lin] + omega * (gs - w[lin])
                });
                for (&pos, v) in group.iter().zip(updates) {
                    w[problem.interior[pos]] = v;
                }
            }
            sweeps += 1;
            if sweeps % 10 == 0 || sweeps == cfg.max_sweeps {
                rel = relative_residual(&w);
                if rel <= cfg.tol || !rel.is_finite() {
                    break;
                }
            }
        }
        (w, sweeps, rel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_domain, DomainSpec};
    use crate::solver::{linearized_apply, Problem};
    use num_complex::Complex64;

    #[test]
    fn colors_separate_stencil_neighbors() {
        for n in 1..=3usize {
            let palette = 4 * n;
            let weights: Vec<usize> = (1..=2 * n).collect();
            let mut diffs: Vec<isize> = Vec::new();
            for a in 0..2 * n {
                diffs.push(weights[a] as isize);
                for b in a + 1..2 * n {
                    diffs.push((weights[a] + weights[b]) as isize);
                    diffs.push(weights[a] as isize - weights[b] as isize);
                }
            }
            assert!(diffs.iter().all(|d| d.rem_euclid(palette as isize) != 0));
        }
    }

    #[test]
    fn assembled_operator_matches_linearization() {
        let grid = build_domain(&DomainSpec::ball(2, 1.0, 1.0, 0.25)).unwrap();
        let u = grid
            .field(|x| x[0] * x[0] + 2.0 * x[1] * x[1] + x[2] * x[2] + x[3] * x[3] + x[0] * x[3])
            .unwrap();
        let w = grid.field(|x| (x[0] + 2.0 * x[3]).sin() * x[1].cos() + x[2]).unwrap();
        let exact = linearized_apply(&u, &w, 2).unwrap();
        let problem = Problem::new(&u, &w, 2, Exec::Sequential).unwrap();
        let symbols: Vec<HermitianMatrix> = (0..problem.len())
            .map(|pos| {
                problem
                    .hessian(u.values(), pos)
                    .symmetric_functions_and_derivative(2)
                    .1
            })
            .collect();
        let op = Operator::assemble(&problem, &symbols);
        let jw = op.apply(&problem, w.values(), Exec::Sequential);
        for (pos, &lin) in problem.interior.iter().enumerate() {
            assert!((jw[pos] - exact.values()[lin]).abs() < 1e-10);
        }
    }

    #[test]
    fn symbol_of_identity_is_quarter_identity() {
        let d = HermitianMatrix::from_fn(2, |p, q| {
            if p == q {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .unwrap();
        let m = real_symbol(&d);
        for a in 0..4 {
            for b in 0..4 {
                assert_eq!(m[a][b], if a == b { 0.25 } else { 0.0 });
            }
        }
    }
}
