//! Independent checks on fields: discrete cone (viscosity) test, comparison
//! ordering, and the sandwich `u <= psi <= u + h`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cone::ConeMargin;
use crate::exec::Exec;
use crate::grid::{hessian_at, GridError, GridField};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ValidationError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("precondition not met at {index:?}: {reason}")]
    PreconditionNotMet { index: Vec<usize>, reason: String },
}

pub type Result<T> = std::result::Result<T, ValidationError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViolationKind {
    Cone,
    Comparison,
    Sandwich,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub index: Vec<usize>,
    pub kind: ViolationKind,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub pass: bool,
    /// Largest magnitude over all checked points (0 when nothing is violated
    /// at all); `pass` iff `worst <= tol`.
    pub worst: f64,
    pub tol: f64,
    pub checked: usize,
    /// Points skipped by the caller's exemption mask.
    #[serde(default)]
    pub exempted: usize,
    /// Points with magnitude above `tol`, in lexicographic order.
    pub violations: Vec<Violation>,
}

impl ViolationReport {
    fn collect(
        field: &GridField,
        points: &[usize],
        magnitudes: &[f64],
        kind: ViolationKind,
        tol: f64,
    ) -> Self {
        let geom = field.geometry();
        let worst = magnitudes.iter().copied().fold(0.0, f64::max);
        let violations = points
            .iter()
            .zip(magnitudes)
            .filter(|(_, &mag)| mag > tol)
            .map(|(&lin, &magnitude)| Violation {
                index: geom.unravel(lin).to_vec(),
                kind,
                magnitude,
            })
            .collect();
        Self {
            pass: worst <= tol,
            worst,
            tol,
            checked: points.len(),
            exempted: 0,
            violations,
        }
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(ValidationError::Argument(format!("tolerance {tol} must be >= 0")));
    }
    Ok(())
}

fn check_order(field: &GridField, m: usize) -> Result<()> {
    let n = field.geometry().n();
    if m == 0 || m > n {
        return Err(ValidationError::Argument(format!("m = {m} outside 1..={n}")));
    }
    Ok(())
}

fn same_grid(a: &GridField, b: &GridField) -> Result<()> {
    if !a.same_grid(b) {
        return Err(GridError::Mismatch.into());
    }
    Ok(())
}

/// Requires `S_k(H u + shift I) >= -tol` for `k = 1..m` at every interior
/// point not marked in `exempt`. The magnitude at a point is
/// `max(0, max_k -S_k)`. `shift = 1` tests `ω`-admissibility on the flat torus.
pub fn viscosity_check_with(
    u: &GridField,
    m: usize,
    tol: f64,
    shift: f64,
    exempt: Option<&[bool]>,
) -> Result<ViolationReport> {
    check_order(u, m)?;
    check_tol(tol)?;
    if let Some(e) = exempt {
        if e.len() != u.len() {
            return Err(GridError::Length {
                expected: u.len(),
                got: e.len(),
            }
            .into());
        }
    }
    let interior = u.interior_points();
    let (points, skipped): (Vec<usize>, Vec<usize>) = interior
        .into_iter()
        .partition(|&i| exempt.is_none_or(|e| !e[i]));
    let geom = u.geometry();
    let magnitudes = Exec::default().map_slice(&points, |&lin| {
        let s = hessian_at(geom, u.values(), lin)
            .shifted(shift)
            .symmetric_functions();
        (1..=m).map(|k| -s[k]).fold(0.0, f64::max)
    });
    let mut report = ViolationReport::collect(u, &points, &magnitudes, ViolationKind::Cone, tol);
    report.exempted = skipped.len();
    Ok(report)
}

/// Discrete cone test of m-subharmonicity at every interior point.
pub fn viscosity_check(u: &GridField, m: usize, tol: f64) -> Result<ViolationReport> {
    viscosity_check_with(u, m, tol, 0.0, None)
}

/// Smallest cone margin of `H u + shift I` over interior points, with the
/// grid index where it occurs.
pub fn cone_margin_min(u: &GridField, m: usize, shift: f64) -> Result<(f64, Vec<usize>)> {
    check_order(u, m)?;
    let points = u.interior_points();
    let geom = u.geometry();
    let margins = Exec::default().map_slice(&points, |&lin| {
        let s = hessian_at(geom, u.values(), lin)
            .shifted(shift)
            .symmetric_functions();
        ConeMargin::from_symmetric(&s, m).margin
    });
    let (pos, margin) = margins
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best });
    let index = points
        .get(pos)
        .map(|&lin| geom.unravel(lin).to_vec())
        .unwrap_or_default();
    Ok((margin, index))
}

/// Checks `u <= v + tol` on the interior, given `fu >= fv` (so `S_m(H u) >=
/// S_m(H v)`) and `u <= v + tol` on the collar. `m` only validates the order.
pub fn comparison_check(
    u: &GridField,
    v: &GridField,
    fu: &GridField,
    fv: &GridField,
    m: usize,
    tol: f64,
) -> Result<ViolationReport> {
    check_order(u, m)?;
    check_tol(tol)?;
    for other in [v, fu, fv] {
        same_grid(u, other)?;
    }
    let geom = u.geometry();
    let (uv, vv) = (u.values(), v.values());
    let (fuv, fvv) = (fu.values(), fv.values());
    let mut points = Vec::new();
    for lin in 0..u.len() {
        if u.is_interior(lin) {
            if fuv[lin] < fvv[lin] - tol {
                return Err(ValidationError::PreconditionNotMet {
                    index: geom.unravel(lin).to_vec(),
                    reason: format!("fu = {} < fv = {}", fuv[lin], fvv[lin]),
                });
            }
            points.push(lin);
        } else if uv[lin] > vv[lin] + tol {
            return Err(ValidationError::PreconditionNotMet {
                index: geom.unravel(lin).to_vec(),
                reason: format!("boundary order u = {} > v = {}", uv[lin], vv[lin]),
            });
        }
    }
    let magnitudes: Vec<f64> = points.iter().map(|&i| (uv[i] - vv[i]).max(0.0)).collect();
    Ok(ViolationReport::collect(
        u,
        &points,
        &magnitudes,
        ViolationKind::Comparison,
        tol,
    ))
}

/// Checks `u - tol <= psi <= u + h + tol` at every grid point.
pub fn sandwich_check(u: &GridField, psi: &GridField, h: f64, tol: f64) -> Result<ViolationReport> {
    check_tol(tol)?;
    if !(h.is_finite() && h >= 0.0) {
        return Err(ValidationError::Argument(format!("gap h = {h} must be >= 0")));
    }
    same_grid(u, psi)?;
    let points: Vec<usize> = (0..u.len()).collect();
    let magnitudes: Vec<f64> = u
        .values()
        .iter()
        .zip(psi.values())
        .map(|(&a, &p)| (a - p).max(p - a - h).max(0.0))
        .collect();
    Ok(ViolationReport::collect(
        u,
        &points,
        &magnitudes,
        ViolationKind::Sandwich,
        tol,
    ))
}
