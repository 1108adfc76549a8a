use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{GridError, GridField, GridGeometry, Result, Topology, MAX_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    /// `rho = |z - c|^2 - r^2`, one radius.
    Ball,
    /// `rho = sum_p |z_p - c_p|^2 / r_p^2 - 1`, one radius per complex coordinate.
    Ellipsoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub kind: DomainKind,
    /// Complex center, one `[re, im]` pair per coordinate.
    pub center: Vec<[f64; 2]>,
    pub radii: Vec<f64>,
    #[serde(rename = "box")]
    pub bounds: BoxBounds,
    pub spacing: f64,
}

impl DomainSpec {
    /// Ball of radius `radius` about the origin in `C^n`, inside the cube
    /// `[-half_width, half_width]^{2n}`.
    pub fn ball(n: usize, radius: f64, half_width: f64, spacing: f64) -> Self {
        Self {
            kind: DomainKind::Ball,
            center: vec![[0.0, 0.0]; n],
            radii: vec![radius],
            bounds: BoxBounds {
                lower: vec![-half_width; 2 * n],
                upper: vec![half_width; 2 * n],
            },
            spacing,
        }
    }

    pub fn n(&self) -> usize {
        self.center.len()
    }

    fn radius(&self, p: usize) -> f64 {
        match self.kind {
            DomainKind::Ball => self.radii[0],
            DomainKind::Ellipsoid => self.radii[p],
        }
    }

    /// Defining function at real coordinates `x`.
    pub fn rho(&self, x: &[f64]) -> f64 {
        let sq = |p: usize| {
            let dx = x[2 * p] - self.center[p][0];
            let dy = x[2 * p + 1] - self.center[p][1];
            dx * dx + dy * dy
        };
        match self.kind {
            DomainKind::Ball => {
                let r = self.radii[0];
                (0..self.n()).map(sq).sum::<f64>() - r * r
            }
            DomainKind::Ellipsoid => {
                (0..self.n())
                    .map(|p| sq(p) / (self.radii[p] * self.radii[p]))
                    .sum::<f64>()
                    - 1.0
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let bad = |msg: String| Err(GridError::Config(msg));
        if n == 0 || n > MAX_DIM {
            return bad(format!("center has {n} coordinates; expected 1..={MAX_DIM}"));
        }
        let want = match self.kind {
            DomainKind::Ball => 1,
            DomainKind::Ellipsoid => n,
        };
        if self.radii.len() != want {
            return bad(format!("radii: expected {want} entries, got {}", self.radii.len()));
        }
        if self.radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return bad("radii must be positive".into());
        }
        if self.center.iter().flatten().any(|c| !c.is_finite()) {
            return bad("center must be finite".into());
        }
        let b = &self.bounds;
        if b.lower.len() != 2 * n || b.upper.len() != 2 * n {
            return bad(format!("box bounds need {} entries", 2 * n));
        }
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return bad(format!("spacing {} must be positive", self.spacing));
        }
        for a in 0..2 * n {
            let (lo, hi) = (b.lower[a], b.upper[a]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return bad(format!("box axis {a}: lower must be below upper"));
            }
            let cells = (hi - lo) / self.spacing;
            if (cells - cells.round()).abs() > 1e-6 {
                return bad(format!("box axis {a}: extent is not a multiple of the spacing"));
            }
            let c = self.center[a / 2][a % 2];
            let r = self.radius(a / 2);
            if c - r < lo - 1e-12 || c + r > hi + 1e-12 {
                return bad(format!("domain leaves the box along axis {a}"));
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<GridGeometry> {
        self.validate()?;
        let b = &self.bounds;
        let shape = b
            .lower
            .iter()
            .zip(&b.upper)
            .map(|(lo, hi)| ((hi - lo) / self.spacing).round() as usize + 1)
            .collect();
        GridGeometry::new(Topology::Box, self.n(), shape, self.spacing, b.lower.clone())
    }
}

/// A discretized domain: `rho` sampled on the whole box, carrying the
/// interior mask shared by every field built on it.
#[derive(Debug, Clone)]
pub struct DomainGrid {
    pub spec: DomainSpec,
    pub rho: GridField,
}

impl DomainGrid {
    pub fn geometry(&self) -> &Arc<GridGeometry> {
        self.rho.geometry_arc()
    }

    pub fn mask(&self) -> &[bool] {
        self.rho.mask().expect("domain fields carry a mask")
    }

    pub fn interior_count(&self) -> usize {
        self.mask().iter().filter(|&&b| b).count()
    }

    /// Mask as a 0/1 field, for export.
    pub fn mask_field(&self) -> GridField {
        let values = self.mask().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        self.rho.with_values(values).expect("same grid")
    }

    /// Samples `f(coords)` on this domain's grid.
    pub fn field(&self, f: impl Fn(&[f64]) -> f64) -> Result<GridField> {
        self.rho.sibling(f)
    }
}

/// Discretizes `spec`: interior points are those with `rho < 0` whose full
/// stencil stays in the box.
pub fn build_domain(spec: &DomainSpec) -> Result<DomainGrid> {
    let geometry = Arc::new(spec.geometry()?);
    let rho_values: Vec<f64> = (0..geometry.len())
        .map(|i| spec.rho(&geometry.coords(i)))
        .collect();
    let mask: Vec<bool> = (0..geometry.len())
        .map(|i| rho_values[i] < 0.0 && geometry.has_full_stencil(&geometry.unravel(i)))
        .collect();
    if !mask.iter().any(|&b| b) {
        return Err(GridError::EmptyInterior);
    }
    let rho = GridField::new(geometry, Some(Arc::new(mask)), rho_values)?;
    Ok(DomainGrid {
        spec: spec.clone(),
        rho,
    })
}
