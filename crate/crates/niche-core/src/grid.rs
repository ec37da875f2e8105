//! Cell-centered grids covering the niche plus its exterior.
//!
//! Interior cells tile the domain exactly. The exterior carries a uniform
//! band of congruent cells near the boundary, then frames (2D) or segments
//! (1D) of geometrically growing cells out to the truncation radius, so
//! kernel quadrature reaches the far field at logarithmic cost. Exterior
//! cells hold extension values; the interplay of extension and exchange
//! weights keeps the discrete mass exchange with every exterior cell at
//! exactly zero.

use std::sync::Arc;

use thiserror::Error;

use crate::geometry::{Domain, Point};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grids are shipped for Interval and Rectangle domains, got {0:?}")]
    UnsupportedDomain(Domain),
    #[error("cell count must be positive")]
    EmptyGrid,
    #[error("rectangle sides are not commensurate with the cell size (ny = {0})")]
    NonconformingCells(f64),
}

/// Node classification mirroring the field layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionTag {
    Interior,
    BoundaryAdjacent,
    Exterior,
}

/// One exterior cell: an axis-aligned box with its center and volume.
#[derive(Debug, Clone)]
pub struct ExtCell {
    pub center: Point,
    pub half: [f64; 2],
    pub volume: f64,
}

#[derive(Debug, Clone, Copy)]
pub enum GridShape {
    OneD { n: usize },
    TwoD { nx: usize, ny: usize },
}

/// Cell-centered grid over a bounded interval or rectangle plus exterior.
#[derive(Debug)]
pub struct Grid {
    pub domain: Domain,
    pub dx: f64,
    /// Fractional exponent the exterior coverage was sized for.
    pub s: f64,
    pub shape: GridShape,
    pub interior_centers: Vec<Point>,
    pub exterior_cells: Vec<ExtCell>,
    /// Count of leading `exterior_cells` that form the uniform band.
    pub uniform_band_len: usize,
    pub r_trunc: f64,
}

impl Grid {
    /// Build a grid with `n` cells across the first axis. The uniform
    /// exterior band extends `band_factor` diameters from the boundary
    /// (capped in 2D to keep the cell count bounded) and coarse cells
    /// continue to `r_trunc = max(10, tol^{-1/(2s)}) * diam`.
    pub fn new(domain: &Domain, n: usize, s: f64, band_factor: f64, tol: f64) -> Result<Self, GridError> {
        if n == 0 {
            return Err(GridError::EmptyGrid);
        }
        let diam = domain.diameter();
        let r_trunc = (10.0 * diam).max(tol.powf(-0.5 / s) * diam);
        match domain {
            Domain::Interval { a, b } => {
                let dx = (b - a) / n as f64;
                let interior_centers =
                    (0..n).map(|i| Point::x1(a + (i as f64 + 0.5) * dx)).collect();
                let mut exterior_cells = Vec::new();
                let n_band = (band_factor * diam / dx).ceil() as usize;
                for j in 0..n_band {
                    let off = (j as f64 + 0.5) * dx;
                    exterior_cells.push(ExtCell {
                        center: Point::x1(a - off),
                        half: [0.5 * dx, 0.0],
                        volume: dx,
                    });
                    exterior_cells.push(ExtCell {
                        center: Point::x1(b + off),
                        half: [0.5 * dx, 0.0],
                        volume: dx,
                    });
                }
                let uniform_band_len = exterior_cells.len();
                // geometric cells out to the truncation radius
                let band_edge = n_band as f64 * dx;
                let mut w = dx;
                let mut off = band_edge;
                while off < r_trunc {
                    let width = w.min(r_trunc - off);
                    exterior_cells.push(ExtCell {
                        center: Point::x1(a - off - 0.5 * width),
                        half: [0.5 * width, 0.0],
                        volume: width,
                    });
                    exterior_cells.push(ExtCell {
                        center: Point::x1(b + off + 0.5 * width),
                        half: [0.5 * width, 0.0],
                        volume: width,
                    });
                    off += width;
                    w *= 1.15;
                }
                Ok(Self {
                    domain: domain.clone(),
                    dx,
                    s,
                    shape: GridShape::OneD { n },
                    interior_centers,
                    exterior_cells,
                    uniform_band_len,
                    r_trunc,
                })
            }
            Domain::Rectangle { lo, hi } => {
                let (x0, y0) = (lo.coord(0), lo.coord(1));
                let (x1, y1) = (hi.coord(0), hi.coord(1));
                let dx = (x1 - x0) / n as f64;
                let ny_f = (y1 - y0) / dx;
                let ny = ny_f.round() as usize;
                if ny == 0 || (ny as f64 - ny_f).abs() > 1e-9 * ny_f.max(1.0) {
                    return Err(GridError::NonconformingCells(ny_f));
                }
                let mut interior_centers = Vec::with_capacity(n * ny);
                for iy in 0..ny {
                    for ix in 0..n {
                        interior_centers.push(Point::x2(
                            x0 + (ix as f64 + 0.5) * dx,
                            y0 + (iy as f64 + 0.5) * dx,
                        ));
                    }
                }
                let mut exterior_cells = Vec::new();
                // uniform band, width capped so the ring stays ~50k cells
                let cap_cells = 50_000f64;
                let (lx, ly) = (x1 - x0, y1 - y0);
                let mut wu = band_factor * diam;
                loop {
                    let ring = ((lx + 2.0 * wu) * (ly + 2.0 * wu) - lx * ly) / (dx * dx);
                    if ring <= cap_cells || wu <= 4.0 * dx {
                        break;
                    }
                    wu *= 0.8;
                }
                let n_band = (wu / dx).ceil().max(2.0) as usize;
                let wu = n_band as f64 * dx;
                push_frame_cells(&mut exterior_cells, x0, y0, x1, y1, 0.0, wu, dx);
                let uniform_band_len = exterior_cells.len();
                // coarsening frames: 4-cell-thick rings, cell size doubling
                let mut inner = wu;
                let mut c = 2.0 * dx;
                while inner < r_trunc {
                    let outer = (inner + 4.0 * c).min(r_trunc.max(inner * 1.01));
                    push_frame_cells(&mut exterior_cells, x0, y0, x1, y1, inner, outer, c);
                    inner = outer;
                    c *= 2.0;
                }
                Ok(Self {
                    domain: domain.clone(),
                    dx,
                    s,
                    shape: GridShape::TwoD { nx: n, ny },
                    interior_centers,
                    exterior_cells,
                    uniform_band_len,
                    r_trunc,
                })
            }
            other => Err(GridError::UnsupportedDomain(other.clone())),
        }
    }

    pub fn n_interior(&self) -> usize {
        self.interior_centers.len()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Cell volume element of the interior tiling.
    pub fn cell_volume(&self) -> f64 {
        match self.shape {
            GridShape::OneD { .. } => self.dx,
            GridShape::TwoD { .. } => self.dx * self.dx,
        }
    }

    pub fn tag(&self, i: usize) -> RegionTag {
        if i >= self.n_interior() {
            return RegionTag::Exterior;
        }
        match self.shape {
            GridShape::OneD { n } => {
                if i == 0 || i == n - 1 {
                    RegionTag::BoundaryAdjacent
                } else {
                    RegionTag::Interior
                }
            }
            GridShape::TwoD { nx, ny } => {
                let (ix, iy) = (i % nx, i / nx);
                if ix == 0 || iy == 0 || ix == nx - 1 || iy == ny - 1 {
                    RegionTag::BoundaryAdjacent
                } else {
                    RegionTag::Interior
                }
            }
        }
    }

    /// Mass of a density sampled on interior cells.
    pub fn mass(&self, interior_values: &[f64]) -> f64 {
        interior_values.iter().sum::<f64>() * self.cell_volume()
    }

    /// Index of the interior cell containing `x`, if any.
    pub fn interior_index_of(&self, x: &Point) -> Option<usize> {
        if !self.domain.contains(x) {
            return None;
        }
        let (lo, _) = self.domain.bounding_box();
        match self.shape {
            GridShape::OneD { n } => {
                let i = ((x.coord(0) - lo.coord(0)) / self.dx) as usize;
                Some(i.min(n - 1))
            }
            GridShape::TwoD { nx, ny } => {
                let ix = (((x.coord(0) - lo.coord(0)) / self.dx) as usize).min(nx - 1);
                let iy = (((x.coord(1) - lo.coord(1)) / self.dx) as usize).min(ny - 1);
                Some(iy * nx + ix)
            }
        }
    }
}

/// Tile the rectangular ring between inflations `inner` and `outer` of the
/// box with cells of nominal size `c` (edge cells absorb the remainder).
fn push_frame_cells(
    cells: &mut Vec<ExtCell>,
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    inner: f64,
    outer: f64,
    c: f64,
) {
    let strip = |cells: &mut Vec<ExtCell>, sx0: f64, sy0: f64, sx1: f64, sy1: f64| {
        if sx1 <= sx0 || sy1 <= sy0 {
            return;
        }
        let ncx = ((sx1 - sx0) / c).ceil().max(1.0) as usize;
        let ncy = ((sy1 - sy0) / c).ceil().max(1.0) as usize;
        let wx = (sx1 - sx0) / ncx as f64;
        let wy = (sy1 - sy0) / ncy as f64;
        for iy in 0..ncy {
            for ix in 0..ncx {
                cells.push(ExtCell {
                    center: Point::x2(
                        sx0 + (ix as f64 + 0.5) * wx,
                        sy0 + (iy as f64 + 0.5) * wy,
                    ),
                    half: [0.5 * wx, 0.5 * wy],
                    volume: wx * wy,
                });
            }
        }
    };
    // bottom and top strips span the full outer width
    strip(cells, x0 - outer, y0 - outer, x1 + outer, y0 - inner);
    strip(cells, x0 - outer, y1 + inner, x1 + outer, y1 + outer);
    // left and right strips cover the remaining middle
    strip(cells, x0 - outer, y0 - inner, x0 - inner, y1 + inner);
    strip(cells, x1 + inner, y0 - inner, x1 + outer, y1 + inner);
}

/// Density field on a grid: interior values plus exterior extension values.
#[derive(Debug, Clone)]
pub struct GridField {
    pub grid: Arc<Grid>,
    pub interior: Vec<f64>,
    pub exterior: Vec<f64>,
    /// Set when the exterior values were produced by the extension operator.
    pub extended: bool,
}

impl GridField {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let ni = grid.n_interior();
        let ne = grid.exterior_cells.len();
        Self { grid, interior: vec![0.0; ni], exterior: vec![0.0; ne], extended: false }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&Point) -> f64) -> Self {
        let interior = grid.interior_centers.iter().map(|p| f(p)).collect();
        let ne = grid.exterior_cells.len();
        Self { grid, interior, exterior: vec![0.0; ne], extended: false }
    }

    pub fn mass(&self) -> f64 {
        self.grid.mass(&self.interior)
    }

    pub fn interior_mean(&self) -> f64 {
        self.interior.iter().sum::<f64>() / self.interior.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_grid_layout() {
        let d = Domain::interval(0.0, 1.0).unwrap();
        let g = Grid::new(&d, 8, 0.5, 5.0, 1e-8).unwrap();
        assert_eq!(g.n_interior(), 8);
        assert!((g.interior_centers[0].coord(0) - 0.0625).abs() < 1e-15);
        assert_eq!(g.uniform_band_len, 2 * 40);
        assert_eq!(g.tag(0), RegionTag::BoundaryAdjacent);
        assert_eq!(g.tag(3), RegionTag::Interior);
        // far cells reach the truncation radius on both sides
        let max_right = g
            .exterior_cells
            .iter()
            .map(|c| c.center.coord(0) + c.half[0])
            .fold(f64::MIN, f64::max);
        assert!(max_right >= 1.0 + g.r_trunc * 0.999);
    }

    #[test]
    fn rectangle_grid_frames_tile_without_overlap() {
        let d = Domain::rectangle(Point::x2(0.0, 0.0), Point::x2(1.0, 0.5)).unwrap();
        let g = Grid::new(&d, 16, 0.5, 5.0, 1e-4).unwrap();
        assert_eq!(g.n_interior(), 16 * 8);
        // total exterior volume matches the covered annular box region
        let vol: f64 = g.exterior_cells.iter().map(|c| c.volume).sum();
        // covered region = outermost box minus the domain
        let max_x = g
            .exterior_cells
            .iter()
            .map(|c| c.center.coord(0) + c.half[0])
            .fold(f64::MIN, f64::max);
        let max_y = g
            .exterior_cells
            .iter()
            .map(|c| c.center.coord(1) + c.half[1])
            .fold(f64::MIN, f64::max);
        let pad_x = max_x - 1.0;
        let pad_y = max_y - 0.5;
        assert!((pad_x - pad_y).abs() < 1e-9, "uniform inflation expected");
        let outer = (1.0 + 2.0 * pad_x) * (0.5 + 2.0 * pad_y);
        assert!(
            (vol - (outer - 0.5)).abs() < 1e-6 * outer,
            "vol {vol} vs region {}",
            outer - 0.5
        );
        // no two cells overlap: sample-based check
        for (i, a) in g.exterior_cells.iter().enumerate().step_by(97) {
            for (j, b) in g.exterior_cells.iter().enumerate().step_by(89) {
                if i == j {
                    continue;
                }
                let sep_x =
                    (a.center.coord(0) - b.center.coord(0)).abs() >= a.half[0] + b.half[0] - 1e-12;
                let sep_y =
                    (a.center.coord(1) - b.center.coord(1)).abs() >= a.half[1] + b.half[1] - 1e-12;
                assert!(sep_x || sep_y, "cells {i} and {j} overlap");
            }
        }
    }

    #[test]
    fn nonconforming_rectangle_rejected() {
        let d = Domain::rectangle(Point::x2(0.0, 0.0), Point::x2(1.0, 0.4312)).unwrap();
        assert!(matches!(
            Grid::new(&d, 10, 0.5, 5.0, 1e-4),
            Err(GridError::NonconformingCells(_))
        ));
    }

    #[test]
    fn interior_index_roundtrip() {
        let d = Domain::rectangle(Point::x2(0.0, 0.0), Point::x2(1.0, 1.0)).unwrap();
        let g = Grid::new(&d, 8, 0.5, 5.0, 1e-4).unwrap();
        for (i, c) in g.interior_centers.iter().enumerate() {
            assert_eq!(g.interior_index_of(c), Some(i));
        }
        assert_eq!(g.interior_index_of(&Point::x2(1.5, 0.5)), None);
    }
}
