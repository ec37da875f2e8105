//! Mixed local/nonlocal heat solver
//! `du/dt = alpha Lap u - beta (-Lap)^s u` on the niche, with mirrored ghost
//! cells enforcing the classical Neumann condition and the kernel-weighted
//! extension enforcing the nonlocal Neumann condition in the exterior.
//!
//! Discrete structure: interior cells exchange mass through exact cell
//! integrals of the kernel; each exterior cell's exchange weight is its
//! extension weight rescaled by the volume ratio, which makes the net flux
//! through every exterior cell vanish identically and keeps the total mass
//! constant to rounding.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Domain, Point};
use crate::grid::{Grid, GridError, GridField, GridShape};
use crate::params::{EffectiveCoefficients, ProcessParams};
use crate::quad;

#[derive(Debug, Error)]
pub enum PdeError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("time step {dt} exceeds the stability bound {dt_max}")]
    UnstableStep { dt: f64, dt_max: f64 },
    #[error("exterior band not populated; call extend() first")]
    NotExtended,
    #[error("point {0:?} must lie outside the closure of the domain")]
    PointNotExterior(Point),
    #[error("point {0:?} must lie inside the domain")]
    PointNotInterior(Point),
    #[error("punched extension undefined: the ball around {0:?} swallows the domain")]
    PunchSwallowsDomain(Point),
    #[error("snapshot times must be nonnegative and at most t_final")]
    InvalidSnapshotTimes,
    #[error("cosine initial data needs mode >= 0 and finite amplitude")]
    InvalidInitialData,
}

/// Closed-form integral of `|x - y|^{-1-2s}` over a 1D cell.
fn kint_1d(x: f64, center: f64, half: f64, two_s: f64) -> f64 {
    let d = (x - center).abs();
    let d0 = d - half;
    let d1 = d + half;
    (d0.powf(-two_s) - d1.powf(-two_s)) / two_s
}

/// Integral of `|x - y|^{-2-2s}` over a rectangular cell, by recursive
/// subdivision until the cell is small relative to its distance from `x`.
fn kint_2d(x: &Point, lo: [f64; 2], hi: [f64; 2], expo: f64, depth: usize) -> f64 {
    let cx = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
    let half = [0.5 * (hi[0] - lo[0]), 0.5 * (hi[1] - lo[1])];
    let diag = (half[0] * half[0] + half[1] * half[1]).sqrt();
    let dist = ((x.coord(0) - cx[0]).powi(2) + (x.coord(1) - cx[1]).powi(2)).sqrt();
    if depth > 0 && dist < 4.0 * diag {
        let mids = [cx[0], cx[1]];
        let mut acc = 0.0;
        for qx in 0..2 {
            for qy in 0..2 {
                let l = [
                    if qx == 0 { lo[0] } else { mids[0] },
                    if qy == 0 { lo[1] } else { mids[1] },
                ];
                let h = [
                    if qx == 0 { mids[0] } else { hi[0] },
                    if qy == 0 { mids[1] } else { hi[1] },
                ];
                acc += kint_2d(x, l, h, expo, depth - 1);
            }
        }
        return acc;
    }
    let rule = quad::GaussRule::order(6);
    let mut acc = 0.0;
    for (gx, wx) in rule.nodes.iter().zip(&rule.weights) {
        let yx = cx[0] + half[0] * gx;
        for (gy, wy) in rule.nodes.iter().zip(&rule.weights) {
            let yy = cx[1] + half[1] * gy;
            let d2 = (x.coord(0) - yx).powi(2) + (x.coord(1) - yy).powi(2);
            acc += wx * wy * d2.powf(-0.5 * expo);
        }
    }
    acc * half[0] * half[1]
}

/// Kernel integral over one exterior cell as seen from the interior point.
pub fn exterior_cell_kernel(
    x: &Point,
    cell: &crate::grid::ExtCell,
    two_s: f64,
    dim: usize,
) -> f64 {
    kint_ext(x, &cell.center, &cell.half, two_s, dim)
}

/// Integral of `|y|^{-2-2s}` over the square cell at `c` (half width `half`)
/// minus the punch ball `B_h(0)`.
pub fn punched_cell_integral_2d(c: &Point, half: f64, h: f64, two_s: f64) -> f64 {
    punched_kint_2d(&Point::x2(0.0, 0.0), c, half, h, two_s)
}

/// Kernel integral over one exterior cell as seen from `x`.
fn kint_ext(x: &Point, center: &Point, half: &[f64; 2], two_s: f64, dim: usize) -> f64 {
    match dim {
        1 => kint_1d(x.coord(0), center.coord(0), half[0], two_s),
        _ => kint_2d(
            x,
            [center.coord(0) - half[0], center.coord(1) - half[1]],
            [center.coord(0) + half[0], center.coord(1) + half[1]],
            2.0 + two_s,
            6,
        ),
    }
}

/// Assembled discrete operators on a grid for one fractional exponent.
pub struct OperatorAssembly {
    pub grid: Arc<Grid>,
    pub s: f64,
    /// interior-to-interior kernel cell integrals by canonical offset
    offsets: Vec<f64>,
    /// extension weights, row-major `[exterior][interior]`
    ext_w: Vec<f64>,
    ext_row_sum: Vec<f64>,
    /// exchange rescale `vol_e / dx^n` per exterior cell
    ext_g: Vec<f64>,
    /// kernel mass beyond the covered exterior, per interior node
    tail: Vec<f64>,
    /// curvature coefficient of the singular cell
    sing: f64,
    /// max absolute row sum of the fractional operator
    pub maxrow: f64,
}

impl OperatorAssembly {
    pub fn build(grid: Arc<Grid>, s: f64) -> Self {
        let two_s = 2.0 * s;
        let m = grid.n_interior();
        let dim = grid.dim();
        let dxn = grid.cell_volume();

        // canonical interior offsets; entry 0 (the singular cell) stays 0
        let offsets = match grid.shape {
            GridShape::OneD { n } => {
                let mut v = vec![0.0; n];
                for d in 1..n {
                    v[d] = kint_1d(0.0, d as f64 * grid.dx, 0.5 * grid.dx, two_s);
                }
                v
            }
            GridShape::TwoD { nx, ny } => {
                let mut v = vec![0.0; nx * ny];
                let origin = Point::x2(0.0, 0.0);
                for dj in 0..ny {
                    for di in 0..nx {
                        if di == 0 && dj == 0 {
                            continue;
                        }
                        let c = [di as f64 * grid.dx, dj as f64 * grid.dx];
                        v[dj * nx + di] = kint_2d(
                            &origin,
                            [c[0] - 0.5 * grid.dx, c[1] - 0.5 * grid.dx],
                            [c[0] + 0.5 * grid.dx, c[1] + 0.5 * grid.dx],
                            2.0 + two_s,
                            6,
                        );
                    }
                }
                v
            }
        };

        let ne = grid.exterior_cells.len();
        let mut ext_w = vec![0.0; ne * m];
        let mut ext_row_sum = vec![0.0; ne];
        let mut ext_g = vec![0.0; ne];
        for (e, cell) in grid.exterior_cells.iter().enumerate() {
            let mut sum = 0.0;
            for (i, xi) in grid.interior_centers.iter().enumerate() {
                let w = kint_ext(&cell.center, xi, &[0.5 * grid.dx; 2], two_s, dim);
                ext_w[e * m + i] = w;
                sum += w;
            }
            ext_row_sum[e] = sum;
            ext_g[e] = cell.volume / dxn;
        }

        // tail mass beyond the covered exterior box
        let (blo, bhi) = covered_box(&grid);
        let tail: Vec<f64> = grid
            .interior_centers
            .iter()
            .map(|x| match dim {
                1 => {
                    ((x.coord(0) - blo[0]).powf(-two_s) + (bhi[0] - x.coord(0)).powf(-two_s))
                        / two_s
                }
                _ => {
                    let f = |th: f64| {
                        let dir = Point::x2(th.cos(), th.sin());
                        box_exit(x, &dir, blo, bhi).powf(-two_s) / two_s
                    };
                    let mut splits = Vec::new();
                    for cy in [blo[1], bhi[1]] {
                        for cx in [blo[0], bhi[0]] {
                            splits.push(
                                (cy - x.coord(1))
                                    .atan2(cx - x.coord(0))
                                    .rem_euclid(2.0 * std::f64::consts::PI),
                            );
                        }
                    }
                    quad::adaptive_split(&f, 0.0, 2.0 * std::f64::consts::PI, &splits, 1e-13)
                }
            })
            .collect();

        let sing = match dim {
            1 => (0.5 * grid.dx).powf(2.0 - two_s) / (2.0 - two_s),
            _ => {
                let ang = quad::adaptive(
                    &|th: f64| th.cos().powf(two_s - 2.0),
                    0.0,
                    std::f64::consts::FRAC_PI_4,
                    1e-13,
                );
                2.0 / (2.0 - two_s) * (0.5 * grid.dx).powf(2.0 - two_s) * ang
            }
        };

        let mut a = Self {
            grid,
            s,
            offsets,
            ext_w,
            ext_row_sum,
            ext_g,
            tail,
            sing,
            maxrow: 0.0,
        };
        a.maxrow = (0..m)
            .map(|i| a.row_abs_sum(i))
            .fold(0.0f64, f64::max);
        a
    }

    fn offset_weight(&self, i: usize, j: usize) -> f64 {
        match self.grid.shape {
            GridShape::OneD { .. } => self.offsets[i.abs_diff(j)],
            GridShape::TwoD { nx, .. } => {
                let (ix, iy) = (i % nx, i / nx);
                let (jx, jy) = (j % nx, j / nx);
                self.offsets[iy.abs_diff(jy) * nx + ix.abs_diff(jx)]
            }
        }
    }

    fn row_abs_sum(&self, i: usize) -> f64 {
        let m = self.grid.n_interior();
        let mut diag = self.tail[i];
        for j in 0..m {
            if j != i {
                diag += self.offset_weight(i, j);
            }
        }
        for e in 0..self.ext_w.len() / m {
            diag += self.ext_g[e] * self.ext_w[e * m + i];
        }
        let n = self.grid.dim() as f64;
        2.0 * diag + 2.0 * self.sing * 2.0 * n / (self.grid.dx * self.grid.dx)
    }

    /// Extension values on every exterior cell from interior values.
    pub fn extend_values(&self, interior: &[f64]) -> Vec<f64> {
        let m = self.grid.n_interior();
        self.ext_row_sum
            .iter()
            .enumerate()
            .map(|(e, &rs)| {
                let row = &self.ext_w[e * m..(e + 1) * m];
                let num: f64 = row.iter().zip(interior).map(|(w, u)| w * u).sum();
                num / rs
            })
            .collect()
    }

    /// Populate the exterior of a field with extension values.
    pub fn extend(&self, field: &mut GridField) {
        field.exterior = self.extend_values(&field.interior);
        field.extended = true;
    }

    /// Discrete `(-Lap)^s` applied to all interior nodes.
    pub fn fractional_apply(&self, field: &GridField) -> Result<Vec<f64>, PdeError> {
        if !field.extended {
            return Err(PdeError::NotExtended);
        }
        let m = self.grid.n_interior();
        let u = &field.interior;
        let ubar = field.mass() / self.grid.domain.volume();
        // exterior coupling, gathered as one pass per node
        let ne = self.ext_g.len();
        let mut ext_in = vec![0.0; m];
        let mut ext_mass = vec![0.0; m];
        for e in 0..ne {
            let ge = self.ext_g[e];
            let ue = field.exterior[e];
            let row = &self.ext_w[e * m..(e + 1) * m];
            for i in 0..m {
                ext_in[i] += ge * row[i] * ue;
                ext_mass[i] += ge * row[i];
            }
        }
        let lap = classical_apply(&self.grid, u);
        let mut out = vec![0.0; m];
        for i in 0..m {
            let mut acc = 0.0;
            for j in 0..m {
                if j != i {
                    acc += self.offset_weight(i, j) * (u[i] - u[j]);
                }
            }
            acc += ext_mass[i] * u[i] - ext_in[i];
            acc += self.tail[i] * (u[i] - ubar);
            acc -= self.sing * lap[i];
            out[i] = acc;
        }
        Ok(out)
    }

    /// Pointwise discrete `(-Lap)^s` at interior node `i` (same quadrature
    /// as the assembled apply).
    pub fn fractional_laplacian_at(&self, field: &GridField, i: usize) -> Result<f64, PdeError> {
        if !field.extended {
            return Err(PdeError::NotExtended);
        }
        let m = self.grid.n_interior();
        let u = &field.interior;
        let ubar = field.mass() / self.grid.domain.volume();
        let mut acc = 0.0;
        for j in 0..m {
            if j != i {
                acc += self.offset_weight(i, j) * (u[i] - u[j]);
            }
        }
        for (e, cell) in self.grid.exterior_cells.iter().enumerate() {
            let _ = cell;
            acc += self.ext_g[e] * self.ext_w[e * m + i] * (u[i] - field.exterior[e]);
        }
        acc += self.tail[i] * (u[i] - ubar);
        acc -= self.sing * classical_laplacian_at(&self.grid, u, i);
        Ok(acc)
    }

    /// Kernel mass beyond the covered exterior, per interior node.
    pub fn tail_mass(&self, i: usize) -> f64 {
        self.tail[i]
    }

    /// Stability bound for the explicit Euler update.
    pub fn dt_max(&self, coeffs: &EffectiveCoefficients) -> f64 {
        let n = self.grid.dim() as f64;
        let dx = self.grid.dx;
        let mut dt = f64::INFINITY;
        if coeffs.alpha > 0.0 {
            dt = dt.min(dx * dx / (2.0 * n * coeffs.alpha));
        }
        if coeffs.beta > 0.0 {
            dt = dt.min(1.0 / (coeffs.beta * self.maxrow));
        }
        0.9 * dt
    }

    /// One explicit Euler step followed by re-extension of the exterior.
    pub fn step_time(
        &self,
        field: &GridField,
        dt: f64,
        coeffs: &EffectiveCoefficients,
    ) -> Result<GridField, PdeError> {
        let dt_max = self.dt_max(coeffs);
        if dt > dt_max {
            return Err(PdeError::UnstableStep { dt, dt_max });
        }
        let mut next = field.clone();
        let lap = if coeffs.alpha != 0.0 {
            classical_apply(&self.grid, &field.interior)
        } else {
            Vec::new()
        };
        let frac = if coeffs.beta != 0.0 {
            self.fractional_apply(field)?
        } else {
            Vec::new()
        };
        for i in 0..next.interior.len() {
            let mut du = 0.0;
            if coeffs.alpha != 0.0 {
                du += coeffs.alpha * lap[i];
            }
            if coeffs.beta != 0.0 {
                du -= coeffs.beta * frac[i];
            }
            next.interior[i] = field.interior[i] + dt * du;
        }
        self.extend(&mut next);
        Ok(next)
    }
}

/// Outermost box covered by the exterior cells.
fn covered_box(grid: &Grid) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::MAX; 2];
    let mut hi = [f64::MIN; 2];
    for c in &grid.exterior_cells {
        for k in 0..grid.dim() {
            lo[k] = lo[k].min(c.center.coord(k) - c.half[k]);
            hi[k] = hi[k].max(c.center.coord(k) + c.half[k]);
        }
    }
    if grid.dim() == 1 {
        lo[1] = 0.0;
        hi[1] = 0.0;
    }
    (lo, hi)
}

/// Distance along `dir` from `x` (inside the box) to the box boundary.
fn box_exit(x: &Point, dir: &Point, lo: [f64; 2], hi: [f64; 2]) -> f64 {
    let mut t = f64::INFINITY;
    for k in 0..2 {
        let d = dir.coord(k);
        if d.abs() > 1e-300 {
            let a = (lo[k] - x.coord(k)) / d;
            let b = (hi[k] - x.coord(k)) / d;
            t = t.min(a.max(b));
        }
    }
    t
}

/// Second-difference Laplacian with mirrored ghost cells on every face.
pub fn classical_apply(grid: &Grid, u: &[f64]) -> Vec<f64> {
    let inv = 1.0 / (grid.dx * grid.dx);
    match grid.shape {
        GridShape::OneD { n } => (0..n)
            .map(|i| {
                let left = if i == 0 { u[0] } else { u[i - 1] };
                let right = if i == n - 1 { u[n - 1] } else { u[i + 1] };
                (left - 2.0 * u[i] + right) * inv
            })
            .collect(),
        GridShape::TwoD { nx, ny } => {
            let mut out = vec![0.0; nx * ny];
            for iy in 0..ny {
                for ix in 0..nx {
                    let i = iy * nx + ix;
                    let l = if ix == 0 { u[i] } else { u[i - 1] };
                    let r = if ix == nx - 1 { u[i] } else { u[i + 1] };
                    let b = if iy == 0 { u[i] } else { u[i - nx] };
                    let t = if iy == ny - 1 { u[i] } else { u[i + nx] };
                    out[i] = (l + r + b + t - 4.0 * u[i]) * inv;
                }
            }
            out
        }
    }
}

/// Pointwise mirrored-ghost Laplacian at interior node `i`.
pub fn classical_laplacian_at(grid: &Grid, u: &[f64], i: usize) -> f64 {
    let inv = 1.0 / (grid.dx * grid.dx);
    match grid.shape {
        GridShape::OneD { n } => {
            let left = if i == 0 { u[0] } else { u[i - 1] };
            let right = if i == n - 1 { u[n - 1] } else { u[i + 1] };
            (left - 2.0 * u[i] + right) * inv
        }
        GridShape::TwoD { nx, ny } => {
            let (ix, iy) = (i % nx, i / nx);
            let l = if ix == 0 { u[i] } else { u[i - 1] };
            let r = if ix == nx - 1 { u[i] } else { u[i + 1] };
            let b = if iy == 0 { u[i] } else { u[i - nx] };
            let t = if iy == ny - 1 { u[i] } else { u[i + nx] };
            (l + r + b + t - 4.0 * u[i]) * inv
        }
    }
}

/// Kernel-weighted average of the interior field at an arbitrary exterior
/// point (the nonlocal image of the field).
pub fn extend_exterior(field: &GridField, x: &Point) -> Result<f64, PdeError> {
    let grid = &field.grid;
    if grid.domain.signed_distance(x) <= 0.0 {
        return Err(PdeError::PointNotExterior(*x));
    }
    let two_s = 2.0 * grid_s(field);
    let dim = grid.dim();
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, c) in grid.interior_centers.iter().enumerate() {
        let w = kint_ext(x, c, &[0.5 * grid.dx; 2], two_s, dim);
        num += w * field.interior[i];
        den += w;
    }
    Ok(num / den)
}

/// `s` travels with the assembly, but the pointwise extension only needs the
/// grid; fields built by the solver record it here.
fn grid_s(field: &GridField) -> f64 {
    field.grid.s_hint()
}

impl Grid {
    /// The fractional exponent the grid was sized for (`r_trunc` encodes it);
    /// stored at construction to keep pointwise ops self-contained.
    fn s_hint(&self) -> f64 {
        self.s
    }
}

/// Punched variant: the integration domain omits `B_h(x)`.
pub fn extend_exterior_punched(field: &GridField, x: &Point, h: f64) -> Result<f64, PdeError> {
    let grid = &field.grid;
    if grid.domain.signed_distance(x) <= 0.0 {
        return Err(PdeError::PointNotExterior(*x));
    }
    let two_s = 2.0 * grid_s(field);
    let dim = grid.dim();
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, c) in grid.interior_centers.iter().enumerate() {
        let w = match dim {
            1 => {
                let (c0, c1) = (c.coord(0) - 0.5 * grid.dx, c.coord(0) + 0.5 * grid.dx);
                punched_kint_1d(x.coord(0), c0, c1, h, two_s)
            }
            _ => punched_kint_2d(x, c, 0.5 * grid.dx, h, two_s),
        };
        num += w * field.interior[i];
        den += w;
    }
    if den <= 0.0 {
        return Err(PdeError::PunchSwallowsDomain(*x));
    }
    Ok(num / den)
}

fn punched_kint_1d(x: f64, c0: f64, c1: f64, h: f64, two_s: f64) -> f64 {
    // clip the cell against the punch (x - h, x + h)
    let mut acc = 0.0;
    let mut add = |a: f64, b: f64| {
        if b > a {
            let d0 = (x - a).abs().min((x - b).abs());
            let d1 = (x - a).abs().max((x - b).abs());
            acc += (d0.powf(-two_s) - d1.powf(-two_s)) / two_s;
        }
    };
    add(c0, c1.min(x - h));
    add(c0.max(x + h), c1);
    acc
}

fn punched_kint_2d(x: &Point, c: &Point, half: f64, h: f64, two_s: f64) -> f64 {
    // cells outside the punch use the plain integral; straddling cells are
    // subdivided with the indicator applied at the leaves
    let cdist = x.dist(c);
    let diag = half * std::f64::consts::SQRT_2;
    if cdist - diag > h {
        return kint_ext(x, c, &[half, half], two_s, 2);
    }
    if cdist + diag <= h {
        return 0.0;
    }
    if half < 1e-4 * h {
        return if cdist > h {
            kint_ext(x, c, &[half, half], two_s, 2)
        } else {
            0.0
        };
    }
    let mut acc = 0.0;
    for qx in [-0.5, 0.5] {
        for qy in [-0.5, 0.5] {
            let sub = Point::x2(c.coord(0) + qx * half, c.coord(1) + qy * half);
            acc += punched_kint_2d(x, &sub, 0.5 * half, h, two_s);
        }
    }
    acc
}

/// Nonlocal Neumann residual `int_Omega (U(x) - U(y)) K(x-y) dy` at an
/// exterior probe, using the same cell weights as the extension. `value`
/// overrides the field value at the probe (used to verify that violations
/// are detected).
pub fn nonlocal_residual_at(
    field: &GridField,
    x: &Point,
    value: Option<f64>,
) -> Result<f64, PdeError> {
    let grid = &field.grid;
    if grid.domain.signed_distance(x) <= 0.0 {
        return Err(PdeError::PointNotExterior(*x));
    }
    let two_s = 2.0 * grid_s(field);
    let dim = grid.dim();
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, c) in grid.interior_centers.iter().enumerate() {
        let w = kint_ext(x, c, &[0.5 * grid.dx; 2], two_s, dim);
        num += w * field.interior[i];
        den += w;
    }
    let ux = value.unwrap_or(num / den);
    Ok(ux * den - num)
}

/// Source of equation coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CoeffSpec {
    /// Derived from the process parameters so particle and PDE runs
    /// describe the same dynamics.
    FromProcess { s: f64, p: f64, h: f64 },
    /// Free diffusivities for pure PDE studies.
    Explicit { alpha: f64, beta: f64, s: f64 },
}

impl CoeffSpec {
    pub fn resolve(&self, dim: usize) -> Result<(EffectiveCoefficients, f64), crate::params::ParamError> {
        match self {
            CoeffSpec::FromProcess { s, p, h } => {
                let params = ProcessParams::new(*s, *p, *h)?;
                Ok((EffectiveCoefficients::for_dim(&params, dim), *s))
            }
            CoeffSpec::Explicit { alpha, beta, s } => Ok((
                EffectiveCoefficients {
                    alpha: *alpha,
                    beta: *beta,
                    c_o: crate::params::second_moment_unit_ball(dim),
                },
                *s,
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialField {
    Uniform,
    PointMass { at: Point },
    /// `offset + amplitude * prod_k cos(mode pi (x_k - lo_k) / L_k)`
    Cosine { mode: usize, amplitude: f64, offset: f64 },
}

impl InitialField {
    pub fn evaluate(&self, domain: &Domain, x: &Point) -> f64 {
        match self {
            InitialField::Uniform => 1.0 / domain.volume(),
            InitialField::PointMass { .. } => 0.0, // handled on the grid
            InitialField::Cosine { mode, amplitude, offset } => {
                let (lo, hi) = domain.bounding_box();
                let mut v = *amplitude;
                for k in 0..domain.dim() {
                    let l = hi.coord(k) - lo.coord(k);
                    v *= (*mode as f64 * std::f64::consts::PI * (x.coord(k) - lo.coord(k)) / l)
                        .cos();
                }
                offset + v
            }
        }
    }

    pub fn on_grid(&self, grid: &Arc<Grid>) -> Result<GridField, PdeError> {
        let mut f = match self {
            InitialField::PointMass { at } => {
                let mut f = GridField::zeros(grid.clone());
                let idx = grid
                    .interior_index_of(at)
                    .ok_or(PdeError::PointNotInterior(*at))?;
                f.interior[idx] = 1.0 / grid.cell_volume();
                f
            }
            other => GridField::from_fn(grid.clone(), |p| other.evaluate(&grid.domain, p)),
        };
        f.extended = false;
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub domain: Domain,
    pub cells: usize,
    pub coeffs: CoeffSpec,
    pub initial: InitialField,
    pub t_final: f64,
    pub snapshot_times: Vec<f64>,
    #[serde(default = "default_band_factor")]
    pub band_factor: f64,
    #[serde(default = "default_quad_tol")]
    pub quad_tol: f64,
}

fn default_band_factor() -> f64 {
    5.0
}

fn default_quad_tol() -> f64 {
    1e-8
}

pub struct Snapshot {
    pub time: f64,
    pub step: u64,
    pub field: GridField,
    pub mass: f64,
    pub dt: f64,
    pub neumann_local_max: f64,
    pub neumann_nonlocal_max: f64,
}

/// Max one-sided normal difference over boundary-adjacent cells.
pub fn neumann_local_residual(field: &GridField) -> f64 {
    let grid = &field.grid;
    let u = &field.interior;
    let mut worst = 0.0f64;
    match grid.shape {
        GridShape::OneD { n } => {
            worst = worst.max(((u[0] - u[1]) / grid.dx).abs());
            worst = worst.max(((u[n - 1] - u[n - 2]) / grid.dx).abs());
        }
        GridShape::TwoD { nx, ny } => {
            for iy in 0..ny {
                let l = iy * nx;
                worst = worst.max(((u[l] - u[l + 1]) / grid.dx).abs());
                let r = iy * nx + nx - 1;
                worst = worst.max(((u[r] - u[r - 1]) / grid.dx).abs());
            }
            for ix in 0..nx {
                worst = worst.max(((u[ix] - u[ix + nx]) / grid.dx).abs());
                let t = (ny - 1) * nx + ix;
                worst = worst.max(((u[t] - u[t - nx]) / grid.dx).abs());
            }
        }
    }
    worst
}

/// Integrate the equation to `t_final`, emitting snapshots at the requested
/// times (each rounded to an exact step count).
pub fn solve(cfg: &SolveConfig) -> Result<Vec<Snapshot>, PdeError> {
    let (coeffs, s) = cfg
        .coeffs
        .resolve(cfg.domain.dim())
        .map_err(|_| PdeError::InvalidInitialData)?;
    let grid = Arc::new(Grid::new(&cfg.domain, cfg.cells, s, cfg.band_factor, cfg.quad_tol)?);
    let assembly = OperatorAssembly::build(grid.clone(), s);
    let mut field = cfg.initial.on_grid(&grid)?;
    assembly.extend(&mut field);

    let mut times: Vec<f64> = cfg.snapshot_times.clone();
    times.sort_by(f64::total_cmp);
    times.dedup();
    if times.iter().any(|&t| t < 0.0 || t > cfg.t_final + 1e-12) {
        return Err(PdeError::InvalidSnapshotTimes);
    }
    if times.is_empty() {
        times.push(cfg.t_final);
    }

    let dt_max = assembly.dt_max(&coeffs);
    let mut out = Vec::new();
    let mut t = 0.0;
    let mut step: u64 = 0;
    let mut dt_used = 0.0;
    for &target in &times {
        if target > t + 1e-15 {
            let n_steps = ((target - t) / dt_max.min(target - t)).ceil().max(1.0) as u64;
            let dt = (target - t) / n_steps as f64;
            for _ in 0..n_steps {
                field = assembly.step_time(&field, dt, &coeffs)?;
                step += 1;
            }
            dt_used = dt;
            t = target;
        }
        let nonlocal = probe_nonlocal_residual(&assembly, &field);
        out.push(Snapshot {
            time: t,
            step,
            mass: field.mass(),
            dt: dt_used,
            neumann_local_max: neumann_local_residual(&field),
            neumann_nonlocal_max: nonlocal,
            field: field.clone(),
        });
    }
    Ok(out)
}

/// Residual of the nonlocal Neumann identity at a spread of band cells.
fn probe_nonlocal_residual(assembly: &OperatorAssembly, field: &GridField) -> f64 {
    let m = assembly.grid.n_interior();
    let stride = (assembly.grid.uniform_band_len / 16).max(1);
    let mut worst = 0.0f64;
    for e in (0..assembly.grid.uniform_band_len).step_by(stride) {
        let row = &assembly.ext_w[e * m..(e + 1) * m];
        let num: f64 = row.iter().zip(&field.interior).map(|(w, u)| w * u).sum();
        let resid = field.exterior[e] * assembly.ext_row_sum[e] - num;
        worst = worst.max(resid.abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval_grid(n: usize, s: f64) -> Arc<Grid> {
        let d = Domain::interval(0.0, 1.0).unwrap();
        Arc::new(Grid::new(&d, n, s, 5.0, 1e-8).unwrap())
    }

    #[test]
    fn classical_laplacian_exact_on_quadratics() {
        let grid = interval_grid(1000, 0.5);
        let u: Vec<f64> = grid.interior_centers.iter().map(|p| p.coord(0).powi(2)).collect();
        let lap = classical_apply(&grid, &u);
        // interior nodes: second difference of y^2 is exactly 2
        for i in 2..998 {
            assert!((lap[i] - 2.0).abs() < 1e-8, "node {i}: {}", lap[i]);
        }
        let c: Vec<f64> = vec![3.7; 1000];
        assert!(classical_apply(&grid, &c).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn classical_laplacian_annihilates_affine_2d() {
        let d = Domain::rectangle(Point::x2(0.0, 0.0), Point::x2(1.0, 1.0)).unwrap();
        let grid = Arc::new(Grid::new(&d, 16, 0.5, 2.0, 1e-4).unwrap());
        // tangent to the bottom boundary: varies along x only
        let u: Vec<f64> = grid.interior_centers.iter().map(|p| 2.0 * p.coord(0) + 1.0).collect();
        let lap = classical_apply(&grid, &u);
        for iy in 0..16 {
            for ix in 1..15 {
                let v = lap[iy * 16 + ix];
                assert!(v.abs() < 1e-10, "{v}");
            }
        }
    }

    #[test]
    fn extension_of_constant_is_constant() {
        let grid = interval_grid(64, 0.5);
        let assembly = OperatorAssembly::build(grid.clone(), 0.5);
        let mut f = GridField::from_fn(grid.clone(), |_| 2.5);
        assembly.extend(&mut f);
        for &v in &f.exterior {
            assert!((v - 2.5).abs() < 1e-12, "{v}");
        }
        // row sums of the fractional operator vanish on constants
        let frac = assembly.fractional_apply(&f).unwrap();
        for &v in &frac {
            assert!(v.abs() < 1e-10, "{v}");
        }
    }

    #[test]
    fn extend_exterior_linear_profile_closed_form() {
        // u(y) = y on (0,1), s = 1/2, probe at x = 2:
        // (int y (2-y)^{-2}) / (int (2-y)^{-2}) = 2 (1 - ln 2)
        let grid = interval_grid(1024, 0.5);
        let f = GridField::from_fn(grid, |p| p.coord(0));
        let v = extend_exterior(&f, &Point::x1(2.0)).unwrap();
        let expected = 2.0 * (1.0 - std::f64::consts::LN_2);
        assert!((v - expected).abs() < 1e-6, "{v} vs {expected}");
        // far probe flattens to the mean
        let far = extend_exterior(&f, &Point::x1(1000.0)).unwrap();
        assert!((far - 0.5).abs() < 0.5 * 0.01, "{far}");
        // inside probe is rejected
        assert!(extend_exterior(&f, &Point::x1(0.5)).is_err());
    }

    #[test]
    fn punched_extension_converges_to_plain() {
        let grid = interval_grid(1024, 0.5);
        let f = GridField::from_fn(grid, |p| p.coord(0));
        let x = Point::x1(1.02);
        let plain = extend_exterior(&f, &x).unwrap();
        // punch removing nothing changes nothing
        let same = extend_exterior_punched(&f, &x, 0.005).unwrap();
        assert!((same - plain).abs() < 1e-12);
        let mut prev_err = f64::INFINITY;
        for h in [0.1, 0.05, 0.025] {
            let v = extend_exterior_punched(&f, &x, h).unwrap();
            let err = (v - plain).abs();
            assert!(err < prev_err, "h={h}: {err} !< {prev_err}");
            prev_err = err;
        }
        // constant stays constant whenever defined
        let c = GridField::from_fn(interval_grid(256, 0.5), |_| 1.25);
        let v = extend_exterior_punched(&c, &Point::x1(1.5), 0.2).unwrap();
        assert!((v - 1.25).abs() < 1e-12);
    }

    #[test]
    fn step_preserves_constants_and_mass() {
        let grid = interval_grid(128, 0.5);
        let assembly = OperatorAssembly::build(grid.clone(), 0.5);
        let coeffs = EffectiveCoefficients { alpha: 1.0 / 12.0, beta: 0.25, c_o: 2.0 / 3.0 };
        let mut f = GridField::from_fn(grid.clone(), |_| 1.0);
        assembly.extend(&mut f);
        let dt = assembly.dt_max(&coeffs);
        let g = assembly.step_time(&f, dt, &coeffs).unwrap();
        for (a, b) in f.interior.iter().zip(&g.interior) {
            assert!((a - b).abs() < 1e-12);
        }
        // mass conservation on a rough profile
        let mut f = GridField::from_fn(grid, |p| {
            1.0 + (7.0 * p.coord(0)).sin().abs() + if p.coord(0) > 0.7 { 1.5 } else { 0.0 }
        });
        assembly.extend(&mut f);
        let m0 = f.mass();
        let mut g = f;
        for _ in 0..1000 {
            g = assembly.step_time(&g, dt, &coeffs).unwrap();
        }
        assert!(((g.mass() - m0) / m0).abs() < 1e-8, "drift {}", (g.mass() - m0) / m0);
        // oversized steps are rejected
        assert!(matches!(
            assembly.step_time(&g, dt * 2.0, &coeffs),
            Err(PdeError::UnstableStep { .. })
        ));
    }

    #[test]
    fn neumann_cosine_decay_matches_series() {
        // p = 0 limit: du/dt = alpha u'' with Neumann walls,
        // u0 = cos(pi x) + 1 decays as exp(-alpha pi^2 t)
        let cfg = SolveConfig {
            domain: Domain::interval(0.0, 1.0).unwrap(),
            cells: 256,
            coeffs: CoeffSpec::Explicit { alpha: 1.0 / 6.0, beta: 0.0, s: 0.5 },
            initial: InitialField::Cosine { mode: 1, amplitude: 1.0, offset: 1.0 },
            t_final: 0.2,
            snapshot_times: vec![0.2],
            band_factor: 1.0,
            quad_tol: 1e-6,
        };
        let snaps = solve(&cfg).unwrap();
        let f = &snaps[0].field;
        let decay = (-(1.0 / 6.0) * std::f64::consts::PI.powi(2) * 0.2).exp();
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, p) in f.grid.interior_centers.iter().enumerate() {
            let exact = 1.0 + decay * (std::f64::consts::PI * p.coord(0)).cos();
            num += (f.interior[i] - exact).powi(2);
            den += exact.powi(2);
        }
        let rel = (num / den).sqrt();
        assert!(rel < 0.01, "relative L2 error {rel}");
    }

    #[test]
    fn long_time_limit_is_flat() {
        let cfg = SolveConfig {
            domain: Domain::interval(0.0, 1.0).unwrap(),
            cells: 64,
            coeffs: CoeffSpec::Explicit { alpha: 1.0 / 6.0, beta: 0.0, s: 0.5 },
            initial: InitialField::Cosine { mode: 1, amplitude: 0.8, offset: 1.0 },
            t_final: 5.0,
            snapshot_times: vec![5.0],
            band_factor: 1.0,
            quad_tol: 1e-6,
        };
        let snaps = solve(&cfg).unwrap();
        let f = &snaps[0].field;
        let target = f.mass() / 1.0;
        let dev = f
            .interior
            .iter()
            .map(|v| (v - target).abs())
            .fold(0.0f64, f64::max);
        assert!(dev < 1e-3, "sup deviation {dev}");
    }

    #[test]
    fn heavier_tail_with_pure_jump_diffusion() {
        // same concentrated start, same elapsed time: the s-stable profile
        // dominates the Gaussian one away from the center
        let base = |beta: f64, alpha: f64| SolveConfig {
            domain: Domain::interval(0.0, 1.0).unwrap(),
            cells: 128,
            coeffs: CoeffSpec::Explicit { alpha, beta, s: 0.5 },
            initial: InitialField::PointMass { at: Point::x1(0.5) },
            t_final: 0.02,
            snapshot_times: vec![0.02],
            band_factor: 1.0,
            quad_tol: 1e-6,
        };
        let brown = solve(&base(0.0, 1.0 / 6.0)).unwrap();
        let levy = solve(&base(0.5, 0.0)).unwrap();
        let fb = &brown[0].field;
        let fl = &levy[0].field;
        for (i, p) in fb.grid.interior_centers.iter().enumerate() {
            if (p.coord(0) - 0.5).abs() >= 0.4 {
                assert!(
                    fl.interior[i] > fb.interior[i],
                    "at {}: levy {} vs brown {}",
                    p.coord(0),
                    fl.interior[i],
                    fb.interior[i]
                );
            }
        }
    }
}
