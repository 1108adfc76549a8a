//! Uniform grids over boxes in `R^{2n} = C^n` and over the flat torus, plus the
//! finite-difference complex Hessian.
//!
//! Real axes are ordered `x_1, y_1, x_2, y_2, ...`, so axis `2p` is `Re z_{p+1}`
//! and axis `2p + 1` is `Im z_{p+1}`. Storage is row-major with the last axis
//! fastest. Periodic grids store each point once (no duplicated endpoint).

mod chart;
mod domain;
mod wedge;

pub use chart::{Chart, ChartCover};
pub use domain::{build_domain, BoxBounds, DomainGrid, DomainKind, DomainSpec};
pub use wedge::{wedge_coefficient_ratio, wedge_normalization};

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

use crate::cone::HermitianMatrix;

/// Largest supported complex dimension for grids.
pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("invalid grid configuration: {0}")]
    Config(String),
    #[error("domain has no interior grid points")]
    EmptyInterior,
    #[error("non-finite value at linear index {0}")]
    NonFinite(usize),
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("stencil at {0:?} leaves the grid")]
    Stencil(Vec<usize>),
    #[error("fields do not share a grid")]
    Mismatch,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("chart cover: {0}")]
    Cover(String),
}

pub type Result<T> = std::result::Result<T, GridError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    /// Bounded box; interior points optionally selected by a mask.
    Box,
    /// Flat torus: every axis wraps around with period `shape[a] * spacing`.
    Torus,
}

pub type Index = SmallVec<[usize; 6]>;
pub type Coords = SmallVec<[f64; 6]>;

#[derive(Debug, Clone, PartialEq)]
pub struct GridGeometry {
    topology: Topology,
    n: usize,
    shape: Vec<usize>,
    spacing: f64,
    origin: Vec<f64>,
    strides: Vec<usize>,
}

impl GridGeometry {
    pub fn new(
        topology: Topology,
        n: usize,
        shape: Vec<usize>,
        spacing: f64,
        origin: Vec<f64>,
    ) -> Result<Self> {
        if n == 0 || n > MAX_DIM {
            return Err(GridError::Config(format!(
                "complex dimension {n} outside 1..={MAX_DIM}"
            )));
        }
        if shape.len() != 2 * n || origin.len() != 2 * n {
            return Err(GridError::Config(format!(
                "shape and origin need {} entries",
                2 * n
            )));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(GridError::Config(format!("spacing {spacing} must be positive")));
        }
        let min_points = match topology {
            Topology::Box => 3,
            Topology::Torus => 3,
        };
        if shape.iter().any(|&s| s < min_points) {
            return Err(GridError::Config(format!(
                "every axis needs at least {min_points} points"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(GridError::Config("origin must be finite".into()));
        }
        let mut strides = vec![1; 2 * n];
        for a in (0..2 * n - 1).rev() {
            strides[a] = strides[a + 1] * shape[a + 1];
        }
        Ok(Self {
            topology,
            n,
            shape,
            spacing,
            origin,
            strides,
        })
    }

    /// Periodic grid on `R^{2n} / (period Z)^{2n}` with `points` points per axis.
    pub fn torus(n: usize, points: usize, period: f64) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(GridError::Config("torus period must be positive".into()));
        }
        Self::new(
            Topology::Torus,
            n,
            vec![points; 2 * n],
            period / points as f64,
            vec![0.0; 2 * n],
        )
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn axes(&self) -> usize {
        2 * self.n
    }
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }
    pub fn spacing(&self) -> f64 {
        self.spacing
    }
    pub fn origin(&self) -> &[f64] {
        &self.origin
    }
    pub fn strides(&self) -> &[usize] {
        &self.strides
    }
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Period along `axis` (torus only meaningful).
    pub fn period(&self, axis: usize) -> f64 {
        self.shape[axis] as f64 * self.spacing
    }

    pub fn unravel(&self, mut lin: usize) -> Index {
        let mut idx: Index = SmallVec::from_elem(0, self.axes());
        for a in 0..self.axes() {
            idx[a] = lin / self.strides[a];
            lin %= self.strides[a];
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn coords(&self, lin: usize) -> Coords {
        let idx = self.unravel(lin);
        idx.iter()
            .zip(&self.origin)
            .map(|(&i, o)| o + i as f64 * self.spacing)
            .collect()
    }

    /// Whether the full 2nd-order stencil at `idx` lies on the grid.
    pub fn has_full_stencil(&self, idx: &[usize]) -> bool {
        match self.topology {
            Topology::Torus => true,
            Topology::Box => idx
                .iter()
                .zip(&self.shape)
                .all(|(&i, &s)| i >= 1 && i + 1 < s),
        }
    }

    /// Neighbor one step along `axis` (`up` = +1, else -1). Box grids do not
    /// bounds-check: callers only step from points with a full stencil.
    #[inline]
    pub(crate) fn step(&self, lin: usize, axis: usize, up: bool) -> usize {
        let stride = self.strides[axis];
        match self.topology {
            Topology::Box => {
                if up {
                    lin + stride
                } else {
                    lin - stride
                }
            }
            Topology::Torus => {
                let len = self.shape[axis];
                let i = (lin / stride) % len;
                if up {
                    if i + 1 == len {
                        lin - (len - 1) * stride
                    } else {
                        lin + stride
                    }
                } else if i == 0 {
                    lin + (len - 1) * stride
                } else {
                    lin - stride
                }
            }
        }
    }
}

/// Real samples on a grid. Fields built from the same domain share their
/// geometry and interior mask.
#[derive(Debug, Clone)]
pub struct GridField {
    geometry: Arc<GridGeometry>,
    mask: Option<Arc<Vec<bool>>>,
    values: Vec<f64>,
}

impl PartialEq for GridField {
    fn eq(&self, other: &Self) -> bool {
        self.same_grid(other) && self.values == other.values
    }
}

impl GridField {
    pub fn new(
        geometry: Arc<GridGeometry>,
        mask: Option<Arc<Vec<bool>>>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let len = geometry.len();
        if values.len() != len {
            return Err(GridError::Length {
                expected: len,
                got: values.len(),
            });
        }
        if let Some(m) = &mask {
            if geometry.topology() == Topology::Torus {
                return Err(GridError::Config("torus fields carry no mask".into()));
            }
            if m.len() != len {
                return Err(GridError::Length {
                    expected: len,
                    got: m.len(),
                });
            }
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite(i));
        }
        Ok(Self {
            geometry,
            mask,
            values,
        })
    }

    /// Samples `f(coords)` at every grid point.
    pub fn from_fn(
        geometry: Arc<GridGeometry>,
        mask: Option<Arc<Vec<bool>>>,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        let values = (0..geometry.len()).map(|i| f(&geometry.coords(i))).collect();
        Self::new(geometry, mask, values)
    }

    /// Field on the same grid (geometry and mask) with new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.geometry.clone(), self.mask.clone(), values)
    }

    /// Same-grid field sampled from `f(coords)`.
    pub fn sibling(&self, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        Self::from_fn(self.geometry.clone(), self.mask.clone(), f)
    }

    pub fn constant_like(&self, value: f64) -> Result<Self> {
        self.with_values(vec![value; self.len()])
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }
    pub fn geometry_arc(&self) -> &Arc<GridGeometry> {
        &self.geometry
    }
    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref().map(|m| m.as_slice())
    }
    pub fn mask_arc(&self) -> Option<&Arc<Vec<bool>>> {
        self.mask.as_ref()
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value_at(&self, idx: &[usize]) -> f64 {
        self.values[self.geometry.ravel(idx)]
    }

    /// Same geometry (and mask, when both carry one).
    pub fn same_grid(&self, other: &Self) -> bool {
        let geo = Arc::ptr_eq(&self.geometry, &other.geometry) || self.geometry == other.geometry;
        let mask = match (&self.mask, &other.mask) {
            (Some(a), Some(b)) => Arc::ptr_eq(a, b) || a == b,
            _ => true,
        };
        geo && mask
    }

    /// Whether the equation lives at `lin`: masked points on masked boxes,
    /// full-stencil points on unmasked boxes, every point on a torus.
    pub fn is_interior(&self, lin: usize) -> bool {
        match (&self.mask, self.geometry.topology()) {
            (_, Topology::Torus) => true,
            (Some(m), Topology::Box) => m[lin],
            (None, Topology::Box) => self.geometry.has_full_stencil(&self.geometry.unravel(lin)),
        }
    }

    /// Interior points in lexicographic order.
    pub fn interior_points(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_interior(i)).collect()
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if !self.same_grid(other) {
            return Err(GridError::Mismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Pointwise combination of two same-grid fields.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if !self.same_grid(other) {
            return Err(GridError::Mismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        self.with_values(values)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    /// Every `factor`-th point of a periodic field.
    pub fn downsample(&self, factor: usize) -> Result<Self> {
        let g = &self.geometry;
        if g.topology() != Topology::Torus {
            return Err(GridError::Unsupported("downsampling needs a torus field".into()));
        }
        if factor == 0 || g.shape().iter().any(|&s| s % factor != 0) {
            return Err(GridError::Config(format!(
                "factor {factor} does not divide the grid shape"
            )));
        }
        let shape: Vec<usize> = g.shape().iter().map(|s| s / factor).collect();
        let coarse = Arc::new(GridGeometry::new(
            Topology::Torus,
            g.n(),
            shape,
            g.spacing() * factor as f64,
            g.origin().to_vec(),
        )?);
        let values = (0..coarse.len())
            .map(|i| {
                let idx: Index = coarse.unravel(i).iter().map(|k| k * factor).collect();
                self.values[g.ravel(&idx)]
            })
            .collect();
        Self::new(coarse, None, values)
    }
}

/// Real second differences `D_ab u` at one point (only the leading
/// `2n x 2n` block is filled).
pub(crate) type RealHessian = [[f64; 6]; 6];

/// Central differences at `lin`; assumes a full stencil.
pub(crate) fn real_hessian_at(geom: &GridGeometry, values: &[f64], lin: usize) -> RealHessian {
    let axes = geom.axes();
    let h2 = geom.spacing() * geom.spacing();
    let center = values[lin];
    let mut r = [[0.0; 6]; 6];
    let mut plus: [usize; 6] = [0; 6];
    let mut minus: [usize; 6] = [0; 6];
    for a in 0..axes {
        plus[a] = geom.step(lin, a, true);
        minus[a] = geom.step(lin, a, false);
        r[a][a] = (values[plus[a]] - 2.0 * center + values[minus[a]]) / h2;
    }
    for a in 0..axes {
        for b in a + 1..axes {
            let pp = values[geom.step(plus[a], b, true)];
            let pm = values[geom.step(plus[a], b, false)];
            let mp = values[geom.step(minus[a], b, true)];
            let mm = values[geom.step(minus[a], b, false)];
            let d = (pp - pm - mp + mm) / (4.0 * h2);
            r[a][b] = d;
            r[b][a] = d;
        }
    }
    r
}

/// `u_{p qbar} = 1/4 [(D_{x_p x_q} + D_{y_p y_q}) + i (D_{x_p y_q} - D_{y_p x_q})]`.
pub(crate) fn complex_from_real(n: usize, r: &RealHessian) -> HermitianMatrix {
    let mut data = SmallVec::from_elem(Complex64::new(0.0, 0.0), n * n);
    for p in 0..n {
        let (xp, yp) = (2 * p, 2 * p + 1);
        data[p * n + p] = Complex64::new(0.25 * (r[xp][xp] + r[yp][yp]), 0.0);
        for q in p + 1..n {
            let (xq, yq) = (2 * q, 2 * q + 1);
            let z = Complex64::new(
                0.25 * (r[xp][xq] + r[yp][yq]),
                0.25 * (r[xp][yq] - r[yp][xq]),
            );
            data[p * n + q] = z;
            data[q * n + p] = z.conj();
        }
    }
    HermitianMatrix::from_raw(n, data)
}

/// Discrete complex Hessian at a linear index with a full stencil.
pub(crate) fn hessian_at(geom: &GridGeometry, values: &[f64], lin: usize) -> HermitianMatrix {
    complex_from_real(geom.n(), &real_hessian_at(geom, values, lin))
}

/// The finite-difference complex Hessian `(d^2 u / dz_p dzbar_q)` at `point`.
/// Second-order central differences; the 4-point cross stencil for mixed
/// terms. Exact on quadratic polynomials.
pub fn complex_hessian(field: &GridField, point: &[usize]) -> Result<HermitianMatrix> {
    let geom = field.geometry();
    if point.len() != geom.axes() || point.iter().zip(geom.shape()).any(|(&i, &s)| i >= s) {
        return Err(GridError::Stencil(point.to_vec()));
    }
    if !geom.has_full_stencil(point) {
        return Err(GridError::Stencil(point.to_vec()));
    }
    Ok(hessian_at(geom, field.values(), geom.ravel(point)))
}
