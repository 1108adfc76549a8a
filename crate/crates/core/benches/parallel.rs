//! Sequential against data-parallel execution of the pointwise kernels.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hessianlab::cone::ConeMargin;
use hessianlab::exec::Exec;
use hessianlab::grid::{build_domain, complex_hessian, DomainSpec};
use hessianlab::solver::{solve_dirichlet, SolverConfig};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn bench_cone_margins(c: &mut Criterion) {
    let grid = build_domain(&DomainSpec::ball(2, 1.0, 1.0, 0.1)).unwrap();
    let u = grid.field(|x| 2.0 * x.iter().map(|v| v * v).sum::<f64>() + x[0] * x[1]).unwrap();
    let points: Vec<Vec<usize>> = u
        .interior_points()
        .into_iter()
        .map(|lin| u.geometry().unravel(lin).to_vec())
        .collect();
    let mut group = c.benchmark_group("cone_margins_21x4");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                exec.map_slice(&points, |idx| {
                    let s = complex_hessian(&u, idx).unwrap().symmetric_functions();
                    ConeMargin::from_symmetric(&s, 2).margin
                })
            })
        });
    }
    group.finish();
}

fn bench_newton(c: &mut Criterion) {
    let domain = DomainSpec::ball(2, 1.0, 1.0, 0.2);
    let grid = build_domain(&domain).unwrap();
    let exact = |x: &[f64]| 2.0 * x.iter().map(|v| v * v).sum::<f64>() + 0.3 * x[0] * x[2];
    let phi = grid.field(exact).unwrap();
    let f = grid.field(|_| 4.0 - 0.09 / 16.0).unwrap();
    let mut group = c.benchmark_group("newton_11x4");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = SolverConfig {
            exec,
            ..SolverConfig::default()
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| solve_dirichlet(&domain, &f, &phi, 2, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_cone_margins, bench_newton);
criterion_main!(benches);
