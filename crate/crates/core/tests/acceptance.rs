//! Acceptance suite: one PASS/FAIL line per criterion, each also held to its
//! runtime budget. Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --release --test acceptance -- 3 7`.

use std::f64::consts::TAU;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use hessianlab::app::{run, Command, RunConfig, RunOptions};
use hessianlab::cone::{
    d_matrix, euler_residual, garding_gap, product_hermiticity_defect, sigma_k, HermitianMatrix,
};
use hessianlab::glue::{run_pipeline, smooth_max, GlueConfig};
use hessianlab::grid::{build_domain, wedge_normalization, DomainGrid, DomainSpec, GridField, GridGeometry};
use hessianlab::io::{read_field, write_field};
use hessianlab::sampling::{random_cone_member, random_hermitian, rng};
use hessianlab::solver::{solve_dirichlet, solve_dirichlet_from, solve_homogeneous, SolverConfig};
use hessianlab::validation::{comparison_check, viscosity_check};
use num_complex::Complex64;
use rand::Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// Solver outputs shared between criteria.
#[derive(Default)]
struct Shared {
    /// `(label, m, field)` of every solve so far.
    solutions: Vec<(String, usize, GridField)>,
}

fn unit_ball() -> (DomainSpec, DomainGrid) {
    let spec = DomainSpec::ball(2, 1.0, 1.0, 0.1);
    let grid = build_domain(&spec).unwrap();
    (spec, grid)
}

fn abs2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn solver_cfg() -> SolverConfig {
    SolverConfig::default()
}

fn cone_identities(_: &mut Shared) -> Verdict {
    let mut r = rng(1);
    let (mut euler, mut hermiticity, mut garding) = (0f64, 0f64, f64::INFINITY);
    for n in 1..=6 {
        for m in 1..=n {
            for _ in 0..1000 {
                let a = random_hermitian(&mut r, n, 1.0);
                euler = euler.max(euler_residual(&a, m).unwrap().abs());
                hermiticity = hermiticity.max(product_hermiticity_defect(&a, m).unwrap());
                let a1 = random_cone_member(&mut r, n, m, 1.0);
                let a2 = random_cone_member(&mut r, n, m, 1.0);
                garding = garding.min(garding_gap(&a1, &a2, m).unwrap());
            }
        }
    }
    Verdict::new(
        euler <= 1e-10 && hermiticity <= 1e-10 && garding >= -1e-10,
        format!("euler {euler:.1e}, hermiticity {hermiticity:.1e}, min garding gap {garding:.1e}"),
    )
}

/// `D_pq = dS_m / da_pq`: probing along `E = e_pp`, `e_pq + e_qp` and
/// `i e_pq - i e_qp` recovers `D_pp`, `2 Re D_pq` and `2 Im D_pq`.
fn derivative_oracle(_: &mut Shared) -> Verdict {
    let mut r = rng(2);
    let t = 1e-5;
    let mut worst: f64 = 0.0;
    for sample in 0..200 {
        let n = 1 + sample % 5;
        let m = 1 + r.gen_range(0..n);
        let a = random_hermitian(&mut r, n, 1.0);
        let d = d_matrix(&a, m).unwrap();
        let probe = |dir: &dyn Fn(usize, usize) -> Complex64| {
            let along = |s: f64| {
                let b = HermitianMatrix::from_fn(n, |p, q| a.get(p, q) + dir(p, q) * s).unwrap();
                sigma_k(&b, m).unwrap()
            };
            (along(t) - along(-t)) / (2.0 * t)
        };
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        for p in 0..n {
            let fd = probe(&|i, j| if i == p && j == p { one } else { zero });
            worst = worst.max((fd - d.get(p, p).re).abs());
            for q in p + 1..n {
                let fd_re = probe(&|i, j| if (i, j) == (p, q) || (i, j) == (q, p) { one } else { zero });
                let fd_im = probe(&|i, j| match (i == p && j == q, i == q && j == p) {
                    (true, _) => Complex64::new(0.0, 1.0),
                    (_, true) => Complex64::new(0.0, -1.0),
                    _ => zero,
                });
                worst = worst.max((fd_re / 2.0 - d.get(p, q).re).abs());
                worst = worst.max((fd_im / 2.0 - d.get(p, q).im).abs());
            }
        }
    }
    Verdict::new(worst <= 1e-6, format!("max entrywise deviation {worst:.1e}"))
}

fn quadratic_exactness(shared: &mut Shared) -> Verdict {
    let (spec, grid) = unit_ball();
    let exact = grid.field(|x| 2.0 * abs2(x)).unwrap();
    let mut details = Vec::new();
    let mut pass = true;
    for m in 1..=2 {
        // Complex Hessian of 2|z|^2 is 2I: S_1 = 4, S_2 = 4.
        let f = grid.field(|_| 4.0).unwrap();
        let start = Instant::now();
        let (u, diag) = solve_dirichlet(&spec, &f, &exact, m, &solver_cfg()).unwrap();
        let err = u.max_abs_diff(&exact).unwrap();
        let secs = start.elapsed().as_secs_f64();
        pass &= diag.residual_max <= 1e-7 && err <= 1e-6 && secs < 15.0 * 60.0;
        details.push(format!(
            "m={m}: residual {:.1e}, error {err:.1e}, {secs:.1}s",
            diag.residual_max
        ));
        shared.solutions.push((format!("quadratic m={m}"), m, u));
    }
    Verdict::new(pass, details.join("; "))
}

fn homogeneous(shared: &mut Shared) -> Verdict {
    let (spec, grid) = unit_ball();
    let phi = grid.field(|x| x[0]).unwrap();
    let cfg = SolverConfig {
        eps_schedule: vec![1e-2, 1e-3, 1e-4],
        ..solver_cfg()
    };
    let (u, diag) = solve_homogeneous(&spec, &phi, 2, &cfg).unwrap();
    let err = u.max_abs_diff(&phi).unwrap();
    shared.solutions.push(("homogeneous Re z1".into(), 2, u));
    Verdict::new(
        err <= 1e-3,
        format!(
            "error vs Re(z1) {err:.2e}, level gaps {}, init repair sweeps {}",
            diag.level_gaps.iter().map(|g| format!("{g:.1e}")).collect::<Vec<_>>().join(" "),
            diag.init_repair_sweeps
        ),
    )
}

fn comparison_suite(shared: &mut Shared) -> Verdict {
    let (spec, grid) = unit_ball();
    let cfg = solver_cfg();
    let tol = 10.0 * cfg.tol_residual;
    let field = |f: &dyn Fn(&[f64]) -> f64| grid.field(f).unwrap();
    let quad = |x: &[f64]| 2.0 * abs2(x);
    // (label, m, f_u, phi_u, f_v, phi_v) with f_u >= f_v and phi_u <= phi_v.
    type Data = Box<dyn Fn(&[f64]) -> f64>;
    let pairs: Vec<(&str, usize, Data, Data, Data, Data)> = vec![
        (
            "lower boundary data",
            2,
            Box::new(|_| 4.0),
            Box::new(quad),
            Box::new(|_| 4.0),
            Box::new(move |x| quad(x) + 0.1),
        ),
        (
            "larger density",
            2,
            Box::new(|_| 5.0),
            Box::new(quad),
            Box::new(|_| 4.0),
            Box::new(quad),
        ),
        (
            "both, m=1",
            1,
            Box::new(|x| 4.0 + (TAU * x[0]).cos()),
            Box::new(move |x| quad(x) - 0.05),
            Box::new(|_| 3.0),
            Box::new(quad),
        ),
        (
            "against the homogeneous level",
            2,
            Box::new(|_| 1.0),
            Box::new(|x| x[0]),
            Box::new(|_| 1e-8),
            Box::new(|x| x[0]),
        ),
    ];
    let mut pass = true;
    let mut details = Vec::new();
    for (label, m, fu, pu, fv, pv) in pairs {
        let (fu, pu, fv, pv) = (field(&*fu), field(&*pu), field(&*fv), field(&*pv));
        let (u, _) = solve_dirichlet(&spec, &fu, &pu, m, &cfg).unwrap();
        let v = if label == "against the homogeneous level" {
            shared
                .solutions
                .iter()
                .find(|(l, _, _)| l == "homogeneous Re z1")
                .map(|(_, _, v)| v.clone())
                .unwrap_or_else(|| solve_dirichlet(&spec, &fv, &pv, m, &cfg).unwrap().0)
        } else {
            solve_dirichlet(&spec, &fv, &pv, m, &cfg).unwrap().0
        };
        let report = comparison_check(&u, &v, &fu, &fv, m, tol).unwrap();
        pass &= report.pass;
        details.push(format!("{label}: worst {:.1e}", report.worst));
        shared.solutions.push((format!("comparison {label}"), m, u));
    }
    Verdict::new(pass, details.join("; "))
}

fn uniqueness(shared: &mut Shared) -> Verdict {
    let (spec, grid) = unit_ball();
    let cfg = solver_cfg();
    let phi = grid.field(|x| 2.0 * abs2(x)).unwrap();
    let f = grid.field(|_| 4.0).unwrap();
    let (a, _) = solve_dirichlet(&spec, &f, &phi, 2, &cfg).unwrap();
    // The discrete solution for density 1 with the same boundary data: admissible,
    // and about |z|^2 + 1 against 2|z|^2, so it starts far from `a`.
    let (start, _) = solve_dirichlet(&spec, &grid.field(|_| 1.0).unwrap(), &phi, 2, &cfg).unwrap();
    let start_gap = start.max_abs_diff(&a).unwrap();
    let (b, _) = solve_dirichlet_from(&spec, &f, &phi, &start, 2, &cfg).unwrap();
    let diff = a.max_abs_diff(&b).unwrap();
    shared.solutions.push(("uniqueness".into(), 2, b));
    Verdict::new(
        diff <= 10.0 * cfg.tol_residual && start_gap > 0.1,
        format!("starts differ by {start_gap:.2}, solutions by {diff:.1e}"),
    )
}

fn viscosity_suite(shared: &mut Shared) -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let mut saved = Vec::new();
    for (k, (label, m, u)) in shared.solutions.iter().enumerate() {
        let path = dir.path().join(format!("u{k}.csv"));
        write_field(&path, u).unwrap();
        saved.push((label.clone(), *m, path));
    }
    let (_, grid) = unit_ball();
    let concave = dir.path().join("concave.csv");
    write_field(&concave, &grid.field(|x| -abs2(x)).unwrap()).unwrap();

    let start = Instant::now();
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for (label, m, path) in &saved {
        let u = read_field(path).unwrap();
        let h = u.geometry().spacing();
        let report = viscosity_check(&u, *m, 10.0 * h * h).unwrap();
        worst = worst.max(report.worst);
        if !report.pass {
            failures.push(label.clone());
        }
    }
    let negative = viscosity_check(&read_field(&concave).unwrap(), 1, 0.1).unwrap();
    let secs = start.elapsed().as_secs_f64();
    Verdict::new(
        !saved.is_empty() && failures.is_empty() && !negative.pass && secs < 60.0,
        format!(
            "{} solver outputs, worst violation {worst:.1e}, failing {failures:?}; concave field flagged at {} points; {secs:.1}s",
            saved.len(),
            negative.violations.len()
        ),
    )
}

fn richberg(_: &mut Shared) -> Verdict {
    // 33 points per axis with the periodic endpoint identified; solved on every other one.
    let geom = Arc::new(GridGeometry::torus(2, 32, 1.0).unwrap());
    let inputs: [(&str, f64, Box<dyn Fn(&[f64]) -> f64>); 2] = [
        ("u=0", 0.5, Box::new(|_| 0.0)),
        (
            "u=0.05 max(cos)",
            0.2,
            Box::new(|x| 0.05 * (TAU * x[0]).cos().max((TAU * x[1]).cos())),
        ),
    ];
    let mut pass = true;
    let mut details = Vec::new();
    for (label, h, u) in inputs {
        let u = GridField::from_fn(geom.clone(), None, |x| u(x)).unwrap();
        let cfg = GlueConfig {
            h_target: h,
            ..GlueConfig::default()
        };
        match run_pipeline(&u, &cfg) {
            Ok(r) => {
                let ok = r.sandwich.pass && r.admissibility.margin_min > 0.0;
                pass &= ok;
                details.push(format!(
                    "{label}: {} charts, j {:.1}, sandwich worst {:.1e}, margin {:.2e}",
                    r.pieces.len(),
                    r.j,
                    r.sandwich.worst,
                    r.admissibility.margin_min
                ));
            }
            Err(e) => {
                pass = false;
                details.push(format!("{label}: {e}"));
            }
        }
    }
    Verdict::new(pass, details.join("; "))
}

fn smooth_max_bounds(_: &mut Shared) -> Verdict {
    let mut r = rng(9);
    let mut violations = 0;
    for _ in 0..100_000 {
        let len = r.gen_range(1..=16);
        let scale = 10f64.powi(r.gen_range(-3..=3));
        let values: Vec<f64> = (0..len).map(|_| r.gen_range(-1.0..1.0) * scale).collect();
        let j = 10f64.powf(r.gen_range(-2.0..4.0));
        let s = smooth_max(&values, j).unwrap();
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let slack = 1e-12 * (1.0 + max.abs());
        if s < max - slack || s > max + (len as f64).ln() / j + slack {
            violations += 1;
        }
    }
    Verdict::new(violations == 0, format!("{violations} violations in 1e5 vectors"))
}

fn wedge_oracle(_: &mut Shared) -> Verdict {
    let top: Vec<f64> = (1..=3).map(|n| wedge_normalization(n, n).unwrap()).collect();
    let k21 = wedge_normalization(2, 1).unwrap();
    let k32 = wedge_normalization(3, 2).unwrap();

    // A density solve must divide by the oracle value and nothing else.
    let dir = tempfile::tempdir().unwrap();
    let density = 2.0;
    let a = density / k21 / 2.0;
    let json = serde_json::json!({
        "n": 2, "m": 1,
        "domain": DomainSpec::ball(2, 1.0, 1.0, 0.25),
        "rhs": {"constant": density},
        "density": true,
        "boundary": {"expression": format!("{a:?}*absz2")},
        "exact": {"expression": format!("{a:?}*absz2")}
    });
    let cfg = RunConfig::from_json(&json.to_string()).unwrap();
    let opts = RunOptions {
        out: Some(dir.path().to_path_buf()),
        seed: 0,
    };
    let outcome = run(Command::Solve, &cfg, &opts).unwrap();
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("diagnostics.json")).unwrap()).unwrap();
    let used = diag["density_normalization"].as_f64().unwrap();
    let err = diag["max_error"].as_f64().unwrap();
    Verdict::new(
        top.iter().all(|&k| k == 1.0) && used == k21 && err <= 1e-9 && outcome.status == 0,
        format!("kappa(n,n) = {top:?}, kappa(2,1) = {k21}, kappa(3,2) = {k32}; density solve used {used}, error {err:.1e}"),
    )
}

type Criterion = (usize, &'static str, Duration, fn(&mut Shared) -> Verdict);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (1, "cone-algebra identities", Duration::from_secs(10), cone_identities),
        (2, "derivative oracle", Duration::from_secs(10), derivative_oracle),
        (3, "quadratic exactness", Duration::from_secs(30 * 60), quadratic_exactness),
        (4, "homogeneous solve", Duration::from_secs(20 * 60), homogeneous),
        (5, "comparison principle", Duration::from_secs(60 * 60), comparison_suite),
        (6, "uniqueness probe", Duration::from_secs(30 * 60), uniqueness),
        (7, "viscosity suite", Duration::from_secs(60), viscosity_suite),
        (8, "smoothing pipeline on the torus", Duration::from_secs(2 * 60 * 60), richberg),
        (9, "smooth_max bounds", Duration::from_secs(5), smooth_max_bounds),
        (10, "wedge normalization oracle", Duration::from_secs(1), wedge_oracle),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut shared = Shared::default();
    let mut failed = 0;
    for (id, name, budget, check) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let verdict = check(&mut shared);
        let elapsed = start.elapsed();
        let pass = verdict.pass && elapsed <= budget;
        failed += usize::from(!pass);
        println!(
            "criterion {id:>2} {}: {name}: {} [{:.1}s of {}s]",
            if pass { "PASS" } else { "FAIL" },
            verdict.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
