use std::sync::Arc;

use super::{Coords, GridError, GridGeometry, Result, Topology};

/// One chart of a torus cover: the ball `U` of radius `outer_radius` about
/// `center`, with the smaller inner ball `U'` of radius `inner_radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub id: usize,
    pub center_index: Vec<usize>,
    pub center: Vec<f64>,
    pub outer_radius: f64,
    pub inner_radius: f64,
}

impl Chart {
    /// Shortest lifted displacement from the chart center to `x`.
    pub fn displacement(&self, geom: &GridGeometry, x: &[f64]) -> Coords {
        x.iter()
            .zip(&self.center)
            .enumerate()
            .map(|(a, (xi, ci))| {
                let period = geom.period(a);
                let d = xi - ci;
                d - period * (d / period).round()
            })
            .collect()
    }

    /// Squared lifted distance to the center; this is the local potential
    /// `rho_k = |z - c_k|^2`, whose complex Hessian is the identity.
    pub fn rho(&self, geom: &GridGeometry, x: &[f64]) -> f64 {
        self.displacement(geom, x).iter().map(|d| d * d).sum()
    }

    pub fn in_inner(&self, geom: &GridGeometry, x: &[f64]) -> bool {
        self.rho(geom, x) < self.inner_radius * self.inner_radius
    }

    pub fn in_outer(&self, geom: &GridGeometry, x: &[f64]) -> bool {
        self.rho(geom, x) < self.outer_radius * self.outer_radius
    }

    /// Half-width in grid steps of the lifted box holding `U` plus one
    /// stencil layer.
    pub fn box_half_width(&self, geom: &GridGeometry) -> usize {
        (self.outer_radius / geom.spacing()).floor() as usize + 1
    }
}

/// Regular lattice of overlapping chart balls on a periodic grid.
#[derive(Debug, Clone)]
pub struct ChartCover {
    geometry: Arc<GridGeometry>,
    per_axis: usize,
    charts: Vec<Chart>,
}

impl ChartCover {
    /// `per_axis^{2n}` charts centered on a lattice of grid points. Checks
    /// that the inner balls cover every grid point, overlap by at least three
    /// cells, sit compactly inside the outer balls, and that every outer ball
    /// (with its stencil box) embeds injectively in one period.
    pub fn lattice(
        geometry: Arc<GridGeometry>,
        per_axis: usize,
        inner_radius: f64,
        outer_radius: f64,
    ) -> Result<Self> {
        if geometry.topology() != Topology::Torus {
            return Err(GridError::Cover("charts need a torus grid".into()));
        }
        let points = geometry.shape()[0];
        if geometry.shape().iter().any(|&s| s != points) {
            return Err(GridError::Cover("torus grid must be cubic".into()));
        }
        if per_axis == 0 || points % per_axis != 0 {
            return Err(GridError::Cover(format!(
                "{per_axis} charts per axis do not divide {points} points"
            )));
        }
        if !(inner_radius > 0.0 && inner_radius < outer_radius) {
            return Err(GridError::Cover(
                "need 0 < inner radius < outer radius".into(),
            ));
        }
        let axes = geometry.axes();
        let step = points / per_axis;
        let total = per_axis.pow(axes as u32);
        let charts = (0..total)
            .map(|id| {
                let mut rest = id;
                let mut center_index = vec![0; axes];
                for a in (0..axes).rev() {
                    center_index[a] = (rest % per_axis) * step;
                    rest /= per_axis;
                }
                let center = center_index
                    .iter()
                    .zip(geometry.origin())
                    .map(|(&i, o)| o + i as f64 * geometry.spacing())
                    .collect();
                Chart {
                    id,
                    center_index,
                    center,
                    outer_radius,
                    inner_radius,
                }
            })
            .collect();
        let cover = Self {
            geometry,
            per_axis,
            charts,
        };
        cover.verify()?;
        Ok(cover)
    }

    pub fn geometry(&self) -> &Arc<GridGeometry> {
        &self.geometry
    }
    pub fn charts(&self) -> &[Chart] {
        &self.charts
    }
    pub fn len(&self) -> usize {
        self.charts.len()
    }
    pub fn is_empty(&self) -> bool {
        self.charts.is_empty()
    }
    pub fn per_axis(&self) -> usize {
        self.per_axis
    }

    /// Distance between neighboring chart centers.
    pub fn lattice_spacing(&self) -> f64 {
        self.geometry.period(0) / self.per_axis as f64
    }

    /// Farthest any point can be from its nearest lattice center.
    pub fn covering_radius(&self) -> f64 {
        0.5 * self.lattice_spacing() * (self.geometry.axes() as f64).sqrt()
    }

    /// First chart whose inner ball contains grid point `lin`.
    pub fn covering_chart(&self, lin: usize) -> Option<usize> {
        let x = self.geometry.coords(lin);
        self.charts
            .iter()
            .position(|c| c.in_inner(&self.geometry, &x))
    }

    fn verify(&self) -> Result<()> {
        let g = &self.geometry;
        let h = g.spacing();
        let chart = &self.charts[0];
        let half_box = chart.box_half_width(g);
        if 2 * half_box > g.shape()[0] {
            return Err(GridError::Cover(format!(
                "outer radius {} does not embed injectively in one period",
                chart.outer_radius
            )));
        }
        let overlap = 2.0 * chart.inner_radius - self.lattice_spacing();
        if overlap < 3.0 * h - 1e-12 {
            return Err(GridError::Cover(format!(
                "inner balls overlap by {overlap}, need at least three cells ({})",
                3.0 * h
            )));
        }
        if let Some(lin) = (0..g.len()).find(|&i| self.covering_chart(i).is_none()) {
            return Err(GridError::Cover(format!(
                "grid point {:?} lies in no inner set",
                g.unravel(lin).as_slice()
            )));
        }
        Ok(())
    }
}
