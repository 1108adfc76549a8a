//! Smoothing by local solves and a regularized maximum on the flat torus.
//!
//! For a continuous `u` with `H u + I` in the cone (ω-m-subharmonic for the
//! flat `ω = dd^c |z|^2`), each chart lifts `u` to `u + rho_k`, solves a local
//! Dirichlet problem with a small right-hand side and boundary data pulled
//! down by `δ`, blends the result back into `u - 2 h` with a radial cutoff,
//! and the pieces are combined by `psi = (1/j) log Σ_k exp(j u_k)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cone::ConeMargin;
use crate::exec::Exec;
use crate::grid::{
    hessian_at, BoxBounds, Chart, ChartCover, DomainKind, DomainSpec, GridError, GridField,
    GridGeometry, Topology,
};
use crate::solver::{solve_dirichlet, SolveError, SolverConfig};
use crate::validation::{sandwich_check, ValidationError, ViolationReport};

#[derive(Debug, Clone, Error)]
pub enum GlueError {
    #[error("invalid glue configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("chart {chart}: {source}")]
    Solve { chart: usize, source: SolveError },
    #[error("chart {chart}: local solution stays below the lift on the inner set (worst margin {worst_margin:e}, δ = {delta:e})")]
    Infeasible {
        chart: usize,
        worst_margin: f64,
        delta: f64,
    },
    #[error("chart {chart}: bullet '{bullet}' fails at {index:?} (value {value:e})")]
    Modification {
        chart: usize,
        bullet: Bullet,
        index: Vec<usize>,
        value: f64,
    },
    #[error("cover gap: grid point {0:?} lies in no inner set")]
    Cover(Vec<usize>),
    #[error("glued field fails its checks up to j = {j} (sandwich worst {sandwich_worst:e}, margin {margin:e})")]
    NotAdmissible {
        j: f64,
        sandwich_worst: f64,
        margin: f64,
    },
}

pub type Result<T> = std::result::Result<T, GlueError>;

/// The four properties every modified piece must have.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bullet {
    /// `u_k < u + h` everywhere.
    BelowUpper,
    /// `u_k > u` on the closed inner ball.
    AboveOnInner,
    /// `u_k < u` outside the chart.
    BelowOutside,
    /// `H u_k + I` in the open cone where `u_k - u` exceeds the threshold.
    StrictWhereLarge,
}

impl std::fmt::Display for Bullet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let text = match self {
            Bullet::BelowUpper => "u_k < u + h",
            Bullet::AboveOnInner => "u_k > u on closure(U'_k)",
            Bullet::BelowOutside => "u_k < u outside U_k",
            Bullet::StrictWhereLarge => "strictly admissible where u_k - u is large",
        };
        f.write_str(text)
    }
}

/// Radial transition of the cutoff, as fractions of the chart's outer radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CutoffConfig {
    pub inner_fraction: f64,
    pub outer_fraction: f64,
}

impl Default for CutoffConfig {
    fn default() -> Self {
        Self {
            inner_fraction: 0.95,
            outer_fraction: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlueConfig {
    pub m: usize,
    /// The approximation gap `h` in `u <= psi <= u + h`.
    pub h_target: f64,
    /// Initial sharpness; defaults to `2 ln(N) / h_target`.
    pub j: Option<f64>,
    /// Cap for the doubling of `j`.
    pub j_max: f64,
    pub delta_boundary: f64,
    pub max_delta_halvings: usize,
    pub eps_rhs: f64,
    pub cutoff: CutoffConfig,
    /// Points per axis of the grid the charts are solved on.
    pub solve_points: usize,
    pub charts_per_axis: usize,
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Required margin of `H psi + I`; the strictness reserve.
    pub admissibility_floor: f64,
    pub solver: SolverConfig,
    pub exec: Exec,
}

impl Default for GlueConfig {
    fn default() -> Self {
        Self {
            m: 2,
            h_target: 0.5,
            j: None,
            j_max: (1u64 << 20) as f64,
            delta_boundary: 0.09,
            max_delta_halvings: 20,
            eps_rhs: 0.01,
            cutoff: CutoffConfig::default(),
            solve_points: 16,
            charts_per_axis: 4,
            inner_radius: 0.3125,
            outer_radius: 0.49,
            admissibility_floor: 0.0,
            solver: SolverConfig::default(),
            exec: Exec::default(),
        }
    }
}

impl GlueConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GlueError::Config(msg));
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.h_target) {
            return bad("h_target must be positive".into());
        }
        if !positive(self.delta_boundary) || !positive(self.eps_rhs) {
            return bad("delta_boundary and eps_rhs must be positive".into());
        }
        let c = &self.cutoff;
        if !(c.inner_fraction > 0.0 && c.inner_fraction < c.outer_fraction && c.outer_fraction <= 1.0) {
            return bad("cutoff needs 0 < inner_fraction < outer_fraction <= 1".into());
        }
        if c.inner_fraction * self.outer_radius <= self.inner_radius {
            return bad("the cutoff must equal 1 on the inner ball".into());
        }
        if let Some(j) = self.j {
            if !positive(j) {
                return bad("j must be positive".into());
            }
        }
        if !(self.admissibility_floor.is_finite() && self.admissibility_floor >= 0.0) {
            return bad("admissibility_floor must be >= 0".into());
        }
        self.solver
            .validate()
            .map_err(|e| GlueError::Config(e.to_string()))
    }

    /// `ln(N) / h`: the least `j` for which the sandwich upper bound can hold.
    pub fn j_lower_bound(&self, charts: usize) -> f64 {
        (charts as f64).ln() / self.h_target
    }
}

/// `(1/j) ln Σ exp(j v_i)`, evaluated relative to the maximum.
pub fn smooth_max(values: &[f64], j: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(GlueError::Config("smooth_max of an empty list".into()));
    }
    if !(j.is_finite() && j > 0.0) {
        return Err(GlueError::Config(format!("sharpness j = {j} must be positive")));
    }
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = values.iter().map(|v| (j * (v - top)).exp()).sum();
    Ok(top + sum.ln() / j)
}

/// Smooth step: 1 for `r <= a`, 0 for `r >= b`.
fn cutoff(r: f64, a: f64, b: f64) -> f64 {
    if r <= a {
        return 1.0;
    }
    if r >= b {
        return 0.0;
    }
    let t = (b - r) / (b - a);
    let bump = |s: f64| if s <= 0.0 { 0.0 } else { (-1.0 / s).exp() };
    let (p, q) = (bump(t), bump(1.0 - t));
    p / (p + q)
}

/// Lifted box around a chart: `2 half + 1` points per axis.
struct ChartBox {
    spec: DomainSpec,
    half: usize,
}

fn chart_box(torus: &GridGeometry, chart: &Chart) -> ChartBox {
    let h = torus.spacing();
    let half = chart.box_half_width(torus);
    let extent = half as f64 * h;
    let n = torus.n();
    let spec = DomainSpec {
        kind: DomainKind::Ball,
        center: (0..n)
            .map(|p| [chart.center[2 * p], chart.center[2 * p + 1]])
            .collect(),
        radii: vec![chart.outer_radius],
        bounds: BoxBounds {
            lower: chart.center.iter().map(|c| c - extent).collect(),
            upper: chart.center.iter().map(|c| c + extent).collect(),
        },
        spacing: h,
    };
    ChartBox { spec, half }
}

/// Torus index of a chart-box point.
fn torus_index(torus: &GridGeometry, chart: &Chart, half: usize, local: &[usize]) -> usize {
    let idx: Vec<usize> = local
        .iter()
        .zip(&chart.center_index)
        .zip(torus.shape())
        .map(|((&l, &c), &s)| (c + s + l - half) % s)
        .collect();
    torus.ravel(&idx)
}

/// Output of [`local_solution`]: the chart solve `v_k` on the lifted box.
#[derive(Debug, Clone)]
pub struct LocalSolution {
    pub chart: usize,
    pub v: GridField,
    pub delta: f64,
    /// `min (v_k - u - rho_k)` over the inner ball.
    pub inner_margin: f64,
    pub newton_iterations: usize,
}

/// Solves `S_m(H v) = eps_rhs` on the chart ball with `v = u + rho_k - δ`
/// outside it, halving `δ` until `v > u + rho_k` on the inner ball.
pub fn local_solution(
    u: &GridField,
    cover: &ChartCover,
    chart: usize,
    cfg: &GlueConfig,
) -> Result<LocalSolution> {
    let torus = cover.geometry();
    if u.geometry() != torus.as_ref() {
        return Err(GridError::Mismatch.into());
    }
    let chart = &cover.charts()[chart];
    let h = torus.spacing();
    if chart.outer_radius <= 2.0 * h {
        return Err(GlueError::Infeasible {
            chart: chart.id,
            worst_margin: f64::NEG_INFINITY,
            delta: cfg.delta_boundary,
        });
    }
    let cb = chart_box(torus, chart);
    let local_geom = Arc::new(cb.spec.geometry()?);
    let lifted: Vec<f64> = (0..local_geom.len())
        .map(|i| {
            let local = local_geom.unravel(i);
            let x = local_geom.coords(i);
            let rho: f64 = x
                .iter()
                .zip(&chart.center)
                .map(|(a, c)| (a - c) * (a - c))
                .sum();
            u.values()[torus_index(torus, chart, cb.half, &local)] + rho
        })
        .collect();
    let inner: Vec<usize> = (0..local_geom.len())
        .filter(|&i| {
            let x = local_geom.coords(i);
            let r2: f64 = x
                .iter()
                .zip(&chart.center)
                .map(|(a, c)| (a - c) * (a - c))
                .sum();
            r2 <= chart.inner_radius * chart.inner_radius
        })
        .collect();
    let fail = |e: SolveError| match e {
        SolveError::Grid(GridError::EmptyInterior) => GlueError::Infeasible {
            chart: chart.id,
            worst_margin: f64::NEG_INFINITY,
            delta: cfg.delta_boundary,
        },
        other => GlueError::Solve {
            chart: chart.id,
            source: other,
        },
    };
    let grid = crate::grid::build_domain(&cb.spec).map_err(|e| fail(e.into()))?;
    let f = grid.field(|_| cfg.eps_rhs)?;
    let mut delta = cfg.delta_boundary;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..=cfg.max_delta_halvings {
        let phi = grid.rho.with_values(lifted.iter().map(|v| v - delta).collect())?;
        let (v, diag) = solve_dirichlet(&cb.spec, &f, &phi, cfg.m, &cfg.solver).map_err(fail)?;
        worst = inner
            .iter()
            .map(|&i| v.values()[i] - lifted[i])
            .fold(f64::INFINITY, f64::min);
        if worst > 0.0 {
            return Ok(LocalSolution {
                chart: chart.id,
                v,
                delta,
                inner_margin: worst,
                newton_iterations: diag.iterations,
            });
        }
        delta *= 0.5;
    }
    Err(GlueError::Infeasible {
        chart: chart.id,
        worst_margin: worst,
        delta,
    })
}

/// Recorded values of the four bullet checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BulletReport {
    /// `max (u_k - u)`; must stay below `h`.
    pub max_gap: f64,
    /// `min (u_k - u)` over the closed inner ball; must be positive.
    pub inner_min_gap: f64,
    /// `max (u_k - u)` outside the chart; must be negative.
    pub outside_max_gap: f64,
    /// `½ min over the inner ball of (u_k - u)`.
    pub strict_threshold: f64,
    /// Smallest margin of `H u_k + I` where `u_k - u > strict_threshold`.
    pub strict_margin_min: f64,
    pub strict_points: usize,
}

#[derive(Debug, Clone)]
pub struct LocalPiece {
    pub chart: usize,
    pub delta: f64,
    /// `u_k` on the torus grid.
    pub field: GridField,
    /// Points where the piece claims strict admissibility.
    pub strict_region: Vec<bool>,
    pub bullets: BulletReport,
}

/// Builds `u_k = χ (v_k - rho_k) + (1 - χ)(u - 2h)` on the torus and verifies
/// the four bullets.
pub fn modify_extend(
    local: &LocalSolution,
    u: &GridField,
    cover: &ChartCover,
    cfg: &GlueConfig,
) -> Result<LocalPiece> {
    let torus = cover.geometry();
    let chart = &cover.charts()[local.chart];
    let h = cfg.h_target;
    let radius = chart.outer_radius;
    let (a, b) = (
        cfg.cutoff.inner_fraction * radius,
        cfg.cutoff.outer_fraction * radius,
    );
    let half = chart.box_half_width(torus) as f64;
    let local_geom = local.v.geometry();
    let spacing = torus.spacing();

    let uv = u.values();
    let values: Vec<f64> = (0..torus.len())
        .map(|lin| {
            let d = chart.displacement(torus, &torus.coords(lin));
            let rho: f64 = d.iter().map(|x| x * x).sum();
            let chi = cutoff(rho.sqrt(), a, b);
            let base = uv[lin] - 2.0 * h;
            if chi == 0.0 {
                return base;
            }
            let idx: Vec<usize> = d
                .iter()
                .map(|x| (half + (x / spacing).round()) as usize)
                .collect();
            let v = local.v.values()[local_geom.ravel(&idx)];
            chi * (v - rho) + (1.0 - chi) * base
        })
        .collect();
    let field = u.with_values(values)?;

    let fail = |bullet, lin: usize, value| GlueError::Modification {
        chart: chart.id,
        bullet,
        index: torus.unravel(lin).to_vec(),
        value,
    };
    let gap: Vec<f64> = field.values().iter().zip(uv).map(|(k, u)| k - u).collect();
    let rho_of = |lin: usize| chart.rho(torus, &torus.coords(lin));
    let r_in2 = chart.inner_radius * chart.inner_radius;
    let r_out2 = radius * radius;

    let argmax = |it: &mut dyn Iterator<Item = usize>, sign: f64| {
        it.map(|i| (i, sign * gap[i]))
            .fold((0, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best })
    };
    let (i_max, max_gap) = argmax(&mut (0..gap.len()), 1.0);
    if max_gap >= h {
        return Err(fail(Bullet::BelowUpper, i_max, max_gap));
    }
    let (i_in, neg_min) = argmax(&mut (0..gap.len()).filter(|&i| rho_of(i) <= r_in2), -1.0);
    let inner_min_gap = -neg_min;
    if inner_min_gap <= 0.0 {
        return Err(fail(Bullet::AboveOnInner, i_in, inner_min_gap));
    }
    let (i_out, outside_max_gap) = argmax(&mut (0..gap.len()).filter(|&i| rho_of(i) >= r_out2), 1.0);
    if outside_max_gap >= 0.0 {
        return Err(fail(Bullet::BelowOutside, i_out, outside_max_gap));
    }
    let strict_threshold = 0.5 * inner_min_gap;
    let strict_region: Vec<bool> = gap.iter().map(|&g| g > strict_threshold).collect();
    let region: Vec<usize> = (0..gap.len()).filter(|&i| strict_region[i]).collect();
    let margins = Exec::Sequential.map_slice(&region, |&lin| {
        let s = hessian_at(torus, field.values(), lin)
            .shifted(1.0)
            .symmetric_functions();
        ConeMargin::from_symmetric(&s, cfg.m).margin
    });
    let (pos, strict_margin_min) = margins
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best });
    if strict_margin_min <= 0.0 {
        return Err(fail(Bullet::StrictWhereLarge, region[pos], strict_margin_min));
    }
    Ok(LocalPiece {
        chart: chart.id,
        delta: local.delta,
        field,
        strict_region,
        bullets: BulletReport {
            max_gap,
            inner_min_gap,
            outside_max_gap,
            strict_threshold,
            strict_margin_min,
            strict_points: region.len(),
        },
    })
}

/// Torus-wide admissibility of `H psi + I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub pass: bool,
    pub margin_min: f64,
    pub index: Vec<usize>,
    pub floor: f64,
}

#[derive(Debug, Clone)]
pub struct GlueOutcome {
    pub psi: GridField,
    pub j: f64,
    pub sandwich: ViolationReport,
    pub admissibility: AdmissibilityReport,
}

/// `psi = smooth_max_k u_k` with sharpness `j`, plus the sandwich check
/// against `u` (tolerance 1e-9) and the admissibility margin of `H psi + I`.
pub fn glue(
    pieces: &[LocalPiece],
    u: &GridField,
    cover: &ChartCover,
    j: f64,
    cfg: &GlueConfig,
) -> Result<GlueOutcome> {
    let torus = cover.geometry();
    let charts = cover.charts();
    for lin in 0..torus.len() {
        let x = torus.coords(lin);
        if !pieces.iter().any(|p| charts[p.chart].in_inner(torus, &x)) {
            return Err(GlueError::Cover(torus.unravel(lin).to_vec()));
        }
    }
    let values = cfg.exec.map(torus.len(), |lin| {
        let vals: Vec<f64> = pieces.iter().map(|p| p.field.values()[lin]).collect();
        smooth_max(&vals, j)
    });
    let values = values.into_iter().collect::<Result<Vec<f64>>>()?;
    let psi = u.with_values(values)?;
    let sandwich = sandwich_check(u, &psi, cfg.h_target, 1e-9)?;
    let (margin_min, index) = crate::validation::cone_margin_min(&psi, cfg.m, 1.0)?;
    Ok(GlueOutcome {
        psi,
        j,
        sandwich,
        admissibility: AdmissibilityReport {
            pass: margin_min > cfg.admissibility_floor,
            margin_min,
            index,
            floor: cfg.admissibility_floor,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceSummary {
    pub chart: usize,
    pub delta: f64,
    pub inner_margin: f64,
    pub newton_iterations: usize,
    pub bullets: BulletReport,
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    /// `u` on the solve grid.
    pub u: GridField,
    pub psi: GridField,
    pub j: f64,
    pub j_doublings: usize,
    pub pieces: Vec<PieceSummary>,
    pub sandwich: ViolationReport,
    pub admissibility: AdmissibilityReport,
}

/// Full pipeline for a periodic `u`: downsample to the solve grid, cover,
/// solve and modify per chart, then glue with `j` doubled until the sandwich
/// and admissibility checks pass.
pub fn run_pipeline(u: &GridField, cfg: &GlueConfig) -> Result<PipelineResult> {
    cfg.validate()?;
    let g = u.geometry();
    if g.topology() != Topology::Torus {
        return Err(GlueError::Config("the pipeline needs a torus field".into()));
    }
    if cfg.m == 0 || cfg.m > g.n() {
        return Err(GlueError::Config(format!("m = {} outside 1..={}", cfg.m, g.n())));
    }
    let points = g.shape()[0];
    if cfg.solve_points == 0 || points % cfg.solve_points != 0 {
        return Err(GlueError::Config(format!(
            "solve_points {} does not divide {points}",
            cfg.solve_points
        )));
    }
    let u = u.downsample(points / cfg.solve_points)?;
    let cover = ChartCover::lattice(
        u.geometry_arc().clone(),
        cfg.charts_per_axis,
        cfg.inner_radius,
        cfg.outer_radius,
    )?;
    let least_j = cfg.j_lower_bound(cover.len());
    let mut j = cfg.j.unwrap_or(2.0 * least_j);
    if j < least_j {
        return Err(GlueError::Config(format!(
            "j = {j} is below ln(N)/h = {least_j}"
        )));
    }

    let ids: Vec<usize> = (0..cover.len()).collect();
    let built: Vec<Result<(LocalPiece, f64, usize)>> = cfg.exec.map_slice(&ids, |&k| {
        let local = local_solution(&u, &cover, k, cfg)?;
        let piece = modify_extend(&local, &u, &cover, cfg)?;
        Ok((piece, local.inner_margin, local.newton_iterations))
    });
    let mut pieces = Vec::with_capacity(built.len());
    let mut summaries = Vec::with_capacity(built.len());
    for entry in built {
        let (piece, inner_margin, newton_iterations) = entry?;
        summaries.push(PieceSummary {
            chart: piece.chart,
            delta: piece.delta,
            inner_margin,
            newton_iterations,
            bullets: piece.bullets.clone(),
        });
        pieces.push(piece);
    }

    let mut doublings = 0;
    loop {
        let out = glue(&pieces, &u, &cover, j, cfg)?;
        if out.sandwich.pass && out.admissibility.pass {
            return Ok(PipelineResult {
                u,
                psi: out.psi,
                j,
                j_doublings: doublings,
                pieces: summaries,
                sandwich: out.sandwich,
                admissibility: out.admissibility,
            });
        }
        if 2.0 * j > cfg.j_max {
            return Err(GlueError::NotAdmissible {
                j,
                sandwich_worst: out.sandwich.worst,
                margin: out.admissibility.margin_min,
            });
        }
        j *= 2.0;
        doublings += 1;
    }
}
