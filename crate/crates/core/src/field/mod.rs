//! Uniform 2-D grids, scalar fields, patch masks and the measure-level
//! diagnostics used by every solver.
//!
//! Fields are stored row-major: cell `(i, j)` lives at `j * nx + i` and its
//! center is `origin + (i h, j h)`. All reductions walk the cells in that
//! order so results are bit-reproducible.

mod io;
mod sinkhorn;

pub use io::{read_field, write_field, FIELD_MAGIC};
pub use sinkhorn::{w2_estimate, w2_estimate_normalized, SinkhornOptions, SinkhornOutcome};
pub(crate) use sinkhorn::GibbsKernel;

use crate::error::{Error, Result};

/// Upper bound on `nx * ny`.
pub const MAX_CELLS: usize = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    /// Center of cell `(0, 0)`.
    pub origin: (f64, f64),
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, h: f64, origin: (f64, f64)) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::domain("grid dimensions must be positive"));
        }
        if nx.saturating_mul(ny) > MAX_CELLS {
            return Err(Error::domain(format!("grid {nx}x{ny} exceeds {MAX_CELLS} cells")));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::domain(format!("spacing must be positive, got {h}")));
        }
        if !origin.0.is_finite() || !origin.1.is_finite() {
            return Err(Error::domain("origin must be finite"));
        }
        Ok(Self { nx, ny, h, origin })
    }

    /// Square `n x n` grid centered on `center`.
    pub fn centered(n: usize, h: f64, center: (f64, f64)) -> Result<Self> {
        let half = 0.5 * (n as f64 - 1.0) * h;
        Self::new(n, n, h, (center.0 - half, center.1 - half))
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.origin.0 + i as f64 * self.h
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.origin.1 + j as f64 * self.h
    }

    #[inline]
    pub fn center(&self, k: usize) -> (f64, f64) {
        (self.x(k % self.nx), self.y(k / self.nx))
    }

    /// Box extent as `(xmin, xmax, ymin, ymax)` of cell edges.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let hh = 0.5 * self.h;
        (
            self.origin.0 - hh,
            self.x(self.nx - 1) + hh,
            self.origin.1 - hh,
            self.y(self.ny - 1) + hh,
        )
    }

    pub fn box_area(&self) -> f64 {
        self.len() as f64 * self.cell_area()
    }

    pub fn same_as(&self, other: &GridSpec) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && self.h == other.h
            && self.origin == other.origin
    }

    pub(crate) fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }

    /// Distance (in cells) from cell `(i, j)` to the nearest box edge cell.
    #[inline]
    pub fn edge_distance(&self, i: usize, j: usize) -> usize {
        i.min(j).min(self.nx - 1 - i).min(self.ny - 1 - j)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a {}x{} grid",
                values.len(),
                grid.nx,
                grid.ny
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite value at index {k}")));
        }
        Ok(Self { grid, values })
    }

    /// Sample `f` at cell centers.
    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            let y = grid.y(j);
            for i in 0..grid.nx {
                values.push(f(grid.x(i), y));
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_density(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    /// `h² Σ f`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    /// Bilinear interpolation at a physical point; clamps to the box.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let g = &self.grid;
        let fx = ((x - g.origin.0) / g.h).clamp(0.0, (g.nx - 1) as f64);
        let fy = ((y - g.origin.1) / g.h).clamp(0.0, (g.ny - 1) as f64);
        let i0 = (fx.floor() as usize).min(g.nx.saturating_sub(2));
        let j0 = (fy.floor() as usize).min(g.ny.saturating_sub(2));
        let i1 = (i0 + 1).min(g.nx - 1);
        let j1 = (j0 + 1).min(g.ny - 1);
        let tx = fx - i0 as f64;
        let ty = fy - j0 as f64;
        let v00 = self.at(i0, j0);
        let v10 = self.at(i1, j0);
        let v01 = self.at(i0, j1);
        let v11 = self.at(i1, j1);
        (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11)
    }

    /// Smallest distance (in cells) between a cell with `|value| > thresh`
    /// and the box edge; `None` when no such cell exists.
    pub fn support_edge_distance(&self, thresh: f64) -> Option<usize> {
        let g = &self.grid;
        let mut best: Option<usize> = None;
        for j in 0..g.ny {
            for i in 0..g.nx {
                if self.values[g.idx(i, j)].abs() > thresh {
                    let d = g.edge_distance(i, j);
                    best = Some(best.map_or(d, |b| b.min(d)));
                }
            }
        }
        best
    }

    /// Largest `|x - center|` over cells with value above `thresh`, measured to
    /// the far cell corner.
    pub fn support_radius(&self, center: (f64, f64), thresh: f64) -> f64 {
        let g = &self.grid;
        let half_diag = g.h * std::f64::consts::FRAC_1_SQRT_2;
        let mut r: f64 = 0.0;
        for (k, &v) in self.values.iter().enumerate() {
            if v > thresh {
                let (x, y) = g.center(k);
                r = r.max(((x - center.0).powi(2) + (y - center.1).powi(2)).sqrt() + half_diag);
            }
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchMask {
    grid: GridSpec,
    inside: Vec<bool>,
}

impl PatchMask {
    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(f64, f64) -> bool) -> Self {
        let mut inside = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            let y = grid.y(j);
            for i in 0..grid.nx {
                inside.push(f(grid.x(i), y));
            }
        }
        Self { grid, inside }
    }

    pub fn from_bits(grid: GridSpec, inside: Vec<bool>) -> Result<Self> {
        if inside.len() != grid.len() {
            return Err(Error::GridMismatch("mask length".into()));
        }
        Ok(Self { grid, inside })
    }

    /// Cells where the field exceeds `thresh`.
    pub fn from_field(f: &ScalarField, thresh: f64) -> Self {
        Self {
            grid: *f.grid(),
            inside: f.values().iter().map(|&v| v > thresh).collect(),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn bits(&self) -> &[bool] {
        &self.inside
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.inside[self.grid.idx(i, j)]
    }

    pub fn count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn area(&self) -> f64 {
        self.count() as f64 * self.grid.cell_area()
    }

    pub fn complement(&self) -> Self {
        Self {
            grid: self.grid,
            inside: self.inside.iter().map(|b| !b).collect(),
        }
    }

    pub fn indicator(&self) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.inside.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }
}

fn require_density(f: &ScalarField, what: &str) -> Result<()> {
    if f.is_density() {
        Ok(())
    } else {
        Err(Error::domain(format!("{what} expects a nonnegative density")))
    }
}

/// Total mass `h² Σ f`.
pub fn mass(f: &ScalarField) -> f64 {
    f.integral()
}

/// `h² Σ f |x|²`.
pub fn second_moment(f: &ScalarField) -> f64 {
    let g = f.grid();
    let mut acc = 0.0;
    for j in 0..g.ny {
        let y = g.y(j);
        for i in 0..g.nx {
            let x = g.x(i);
            acc += f.values[g.idx(i, j)] * (x * x + y * y);
        }
    }
    acc * g.cell_area()
}

/// First moment `h² Σ f x`.
pub fn first_moment(f: &ScalarField) -> (f64, f64) {
    let g = f.grid();
    let (mut mx, mut my) = (0.0, 0.0);
    for j in 0..g.ny {
        let y = g.y(j);
        for i in 0..g.nx {
            let v = f.values[g.idx(i, j)];
            mx += v * g.x(i);
            my += v * y;
        }
    }
    (mx * g.cell_area(), my * g.cell_area())
}

pub fn center_of_mass(f: &ScalarField) -> Result<(f64, f64)> {
    let m = mass(f);
    if !(m > 0.0) {
        return Err(Error::domain("center of mass of a zero-mass field"));
    }
    let (mx, my) = first_moment(f);
    Ok((mx / m, my / m))
}

/// `(h² Σ |f - g|^p)^(1/p)`.
pub fn lp_distance(f: &ScalarField, g: &ScalarField, p: f64) -> Result<f64> {
    f.grid.ensure_same(&g.grid)?;
    if !(p >= 1.0) {
        return Err(Error::domain(format!("L^p distance needs p >= 1, got {p}")));
    }
    let h2 = f.grid.cell_area();
    if p.is_infinite() {
        return Ok(f
            .values
            .iter()
            .zip(&g.values)
            .fold(0.0, |m: f64, (a, b)| m.max((a - b).abs())));
    }
    let s: f64 = f
        .values
        .iter()
        .zip(&g.values)
        .map(|(a, b)| (a - b).abs().powf(p))
        .sum();
    Ok((s * h2).powf(1.0 / p))
}

/// Check a density against the margin rule: nothing above `thresh` within
/// `margin` cells of the box edge.
pub fn check_margin(f: &ScalarField, margin: usize, thresh: f64) -> Result<()> {
    match f.support_edge_distance(thresh) {
        Some(d) if d < margin => Err(Error::Margin(format!(
            "support is {d} cells from the edge, need {margin}"
        ))),
        _ => Ok(()),
    }
}

pub(crate) fn ensure_density(f: &ScalarField, what: &str) -> Result<()> {
    require_density(f, what)
}
