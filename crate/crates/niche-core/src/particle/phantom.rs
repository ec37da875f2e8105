//! Density-level iteration of the whole-plane ("phantom") description.
//!
//! The density diffuses into the shrunk core `{x : B_{lambda h}(x) inside
//! Omega}` through the translation-invariant measure `d pi`; after each
//! transport the values on the boundary collar are reset to the local ball
//! average and the exterior to the kernel-weighted extension. The collar
//! average couples collar cells to each other, so the reset solves one small
//! linear system, factored once per run.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, LU};
use thiserror::Error;

use crate::geometry::{disk_rect_area, Domain, Point};
use crate::grid::{Grid, GridError, GridField, GridShape};
use crate::params::{unit_ball_volume, unit_sphere_surface, ProcessParams};
use crate::pde::{InitialField, OperatorAssembly, PdeError};

#[derive(Debug, Error)]
pub enum PhantomError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error("grid too coarse: walk radius {lambda_h} must cover at least two cells of size {dx}")]
    CollarUnresolved { lambda_h: f64, dx: f64 },
    #[error("walk radius {0} swallows the domain: no core region remains")]
    NoCore(f64),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone)]
pub struct PhantomConfig {
    pub params: ProcessParams,
    pub domain: Domain,
    pub cells: usize,
    pub t_final: f64,
    pub initial: InitialField,
    pub snapshot_times: Vec<f64>,
    pub band_factor: f64,
    pub quad_tol: f64,
}

pub struct PhantomSnapshot {
    pub time: f64,
    pub step: u64,
    pub field: GridField,
    pub mass: f64,
}

/// Lattice coordinates of the uniform region (interior plus uniform band).
struct Lattice {
    nx: i64,
    ny: i64,
    pad: i64,
    /// flat map from lattice coords to the field slot
    slot: Vec<Slot>,
}

#[derive(Clone, Copy, PartialEq)]
enum Slot {
    None,
    Interior(usize),
    Band(usize),
}

impl Lattice {
    fn build(grid: &Grid) -> Self {
        let (nx, ny) = match grid.shape {
            GridShape::OneD { n } => (n as i64, 1i64),
            GridShape::TwoD { nx, ny } => (nx as i64, ny as i64),
        };
        let (lo, _) = grid.domain.bounding_box();
        let coord = |p: &Point, k: usize| -> i64 {
            ((p.coord(k) - lo.coord(k)) / grid.dx - 0.5).round() as i64
        };
        // pad = number of uniform band layers
        let mut pad = 0i64;
        for c in grid.exterior_cells.iter().take(grid.uniform_band_len) {
            let gx = coord(&c.center, 0);
            let gy = if ny > 1 { coord(&c.center, 1) } else { 0 };
            pad = pad.max((-gx).max(gx - nx + 1)).max((-gy).max(gy - ny + 1));
        }
        let w = nx + 2 * pad;
        let h = ny + 2 * pad;
        let mut slot = vec![Slot::None; (w * h) as usize];
        let index = |gx: i64, gy: i64| ((gy + pad) * w + gx + pad) as usize;
        for (i, c) in grid.interior_centers.iter().enumerate() {
            let gx = coord(c, 0);
            let gy = if ny > 1 { coord(c, 1) } else { 0 };
            slot[index(gx, gy)] = Slot::Interior(i);
        }
        for (e, c) in grid.exterior_cells.iter().take(grid.uniform_band_len).enumerate() {
            let gx = coord(&c.center, 0);
            let gy = if ny > 1 { coord(&c.center, 1) } else { 0 };
            if gx >= -pad && gx < nx + pad && gy >= -pad && gy < ny + pad {
                slot[index(gx, gy)] = Slot::Band(e);
            }
        }
        Self { nx, ny, pad, slot }
    }

    fn get(&self, gx: i64, gy: i64) -> Slot {
        if gx < -self.pad || gx >= self.nx + self.pad || gy < -self.pad || gy >= self.ny + self.pad
        {
            return Slot::None;
        }
        let w = self.nx + 2 * self.pad;
        self.slot[((gy + self.pad) * w + gx + self.pad) as usize]
    }
}

/// Overlap of the 1D cell at lattice offset `d` with the ball of radius `r`.
fn overlap_1d(d: i64, dx: f64, r: f64) -> f64 {
    let c0 = d as f64 * dx - 0.5 * dx;
    let c1 = d as f64 * dx + 0.5 * dx;
    (c1.min(r) - c0.max(-r)).max(0.0)
}

fn punched_cell_kernel_1d(d: i64, dx: f64, h: f64, two_s: f64) -> f64 {
    let c0 = d as f64 * dx - 0.5 * dx;
    let c1 = d as f64 * dx + 0.5 * dx;
    let mut acc = 0.0;
    let mut add = |a: f64, b: f64| {
        if b > a {
            let d0 = a.abs().min(b.abs());
            let d1 = a.abs().max(b.abs());
            // segment strictly to one side of the origin after clipping
            acc += (d0.powf(-two_s) - d1.powf(-two_s)) / two_s;
        }
    };
    add(c0, c1.min(-h));
    add(c0.max(h), c1);
    acc
}

fn punched_cell_kernel_2d(di: i64, dj: i64, dx: f64, h: f64, two_s: f64) -> f64 {
    let c = Point::x2(di as f64 * dx, dj as f64 * dx);
    crate::pde::punched_cell_integral_2d(&c, 0.5 * dx, h, two_s)
}

pub fn run_phantom_process(cfg: &PhantomConfig) -> Result<Vec<PhantomSnapshot>, PhantomError> {
    let params = &cfg.params;
    let s = params.s();
    let two_s = 2.0 * s;
    let h = params.h();
    let r_walk = params.walk_radius();
    let dim = cfg.domain.dim();
    let grid = Arc::new(Grid::new(&cfg.domain, cfg.cells, s, cfg.band_factor, cfg.quad_tol)?);
    let dx = grid.dx;
    if r_walk < 2.0 * dx {
        return Err(PhantomError::CollarUnresolved { lambda_h: r_walk, dx });
    }

    // core / collar split of the interior
    let m = grid.n_interior();
    let mut is_core = vec![false; m];
    for (i, c) in grid.interior_centers.iter().enumerate() {
        is_core[i] = grid.domain.interior_distance(c) > r_walk;
    }
    let core: Vec<usize> = (0..m).filter(|&i| is_core[i]).collect();
    let collar: Vec<usize> = (0..m).filter(|&i| !is_core[i]).collect();
    if core.is_empty() {
        return Err(PhantomError::NoCore(r_walk));
    }

    let assembly = OperatorAssembly::build(grid.clone(), s);
    let lattice = Lattice::build(&grid);

    // transport stencil over lattice offsets
    let vol_ball = unit_ball_volume(dim) * r_walk.powi(dim as i32);
    let surf = unit_sphere_surface(dim);
    let jump_pref = 2.0 * s * h.powf(two_s) / surf;
    let p = params.p();
    let reach = lattice.nx.max(lattice.ny) + lattice.pad;
    let stencil: Vec<Vec<f64>> = match grid.shape {
        GridShape::OneD { .. } => {
            let row: Vec<f64> = (-reach..=reach)
                .map(|d| {
                    let walk = (1.0 - p) * overlap_1d(d, dx, r_walk) / vol_ball;
                    let jump = p * jump_pref * punched_cell_kernel_1d(d, dx, h, two_s);
                    walk + jump
                })
                .collect();
            vec![row]
        }
        GridShape::TwoD { .. } => (-reach..=reach)
            .map(|dj| {
                (-reach..=reach)
                    .map(|di| {
                        let lo = Point::x2(
                            di as f64 * dx - 0.5 * dx,
                            dj as f64 * dx - 0.5 * dx,
                        );
                        let hi = Point::x2(
                            di as f64 * dx + 0.5 * dx,
                            dj as f64 * dx + 0.5 * dx,
                        );
                        let walk = (1.0 - p)
                            * disk_rect_area(&Point::x2(0.0, 0.0), r_walk, &lo, &hi)
                            / vol_ball;
                        let jump = p * jump_pref * punched_cell_kernel_2d(di, dj, dx, h, two_s);
                        walk + jump
                    })
                    .collect()
            })
            .collect(),
    };
    let stencil_at = |di: i64, dj: i64| -> f64 {
        match grid.shape {
            GridShape::OneD { .. } => stencil[0][(di + reach) as usize],
            GridShape::TwoD { .. } => stencil[(dj + reach) as usize][(di + reach) as usize],
        }
    };

    // jump coupling to the coarse far cells, per core cell
    let far_cells = &grid.exterior_cells[grid.uniform_band_len..];
    let far_w: Vec<Vec<f64>> = core
        .iter()
        .map(|&i| {
            let xi = &grid.interior_centers[i];
            far_cells
                .iter()
                .map(|c| p * jump_pref * crate::pde::exterior_cell_kernel(xi, c, two_s, dim))
                .collect()
        })
        .collect();
    // beyond the covered exterior the extension flattens to the mean
    let tail_w: Vec<f64> = core
        .iter()
        .map(|&i| p * jump_pref * assembly.tail_mass(i))
        .collect();

    // collar reset system (I - A_cc) V_collar = A_ck V_core
    let nc = collar.len();
    let mut a_cc = DMatrix::<f64>::zeros(nc, nc);
    let mut a_ck = vec![vec![0.0f64; m]; nc];
    let collar_pos: Vec<Option<usize>> = {
        let mut v = vec![None; m];
        for (row, &i) in collar.iter().enumerate() {
            v[i] = Some(row);
        }
        v
    };
    for (row, &ci) in collar.iter().enumerate() {
        let xc = &grid.interior_centers[ci];
        let denom = grid.domain.ball_intersection_volume(xc, r_walk);
        for (k, xk) in grid.interior_centers.iter().enumerate() {
            let w = match grid.shape {
                GridShape::OneD { .. } => {
                    let c0 = xk.coord(0) - 0.5 * dx;
                    let c1 = xk.coord(0) + 0.5 * dx;
                    (c1.min(xc.coord(0) + r_walk) - c0.max(xc.coord(0) - r_walk)).max(0.0)
                }
                GridShape::TwoD { .. } => {
                    let lo = Point::x2(xk.coord(0) - 0.5 * dx, xk.coord(1) - 0.5 * dx);
                    let hi = Point::x2(xk.coord(0) + 0.5 * dx, xk.coord(1) + 0.5 * dx);
                    disk_rect_area(xc, r_walk, &lo, &hi)
                }
            } / denom;
            if w == 0.0 {
                continue;
            }
            match collar_pos[k] {
                Some(col) => a_cc[(row, col)] = w,
                None => a_ck[row][k] = w,
            }
        }
    }
    let reset_lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn> =
        LU::new(DMatrix::identity(nc, nc) - a_cc);

    // initial data; exterior extended, collar kept as given at time zero
    let mut field = cfg.initial.on_grid(&grid)?;
    assembly.extend(&mut field);

    let tau = params.tau();
    let total_steps = (cfg.t_final / tau + 1e-9).floor() as u64;
    let mut snap_steps: Vec<u64> = cfg
        .snapshot_times
        .iter()
        .map(|&t| {
            if t < 0.0 || t > cfg.t_final + 1e-12 {
                Err(PhantomError::BadConfig(format!("snapshot time {t} out of range")))
            } else {
                Ok(((t / tau) + 1e-9).floor() as u64)
            }
        })
        .collect::<Result<_, _>>()?;
    if snap_steps.is_empty() {
        snap_steps.push(total_steps);
    }
    snap_steps.sort_unstable();
    snap_steps.dedup();

    let (lo, _) = grid.domain.bounding_box();
    let lattice_coord = |pt: &Point, k: usize| -> i64 {
        ((pt.coord(k) - lo.coord(k)) / dx - 0.5).round() as i64
    };

    let mut out = Vec::new();
    let mut next_snap = 0;
    for step in 0..=total_steps {
        while next_snap < snap_steps.len() && snap_steps[next_snap] == step {
            out.push(PhantomSnapshot {
                time: step as f64 * tau,
                step,
                mass: field.mass(),
                field: field.clone(),
            });
            next_snap += 1;
        }
        if step == total_steps {
            break;
        }

        // transport into the core
        let ubar = field.interior_mean();
        let mut new_interior = field.interior.clone();
        for (ci, &i) in core.iter().enumerate() {
            let xi = &grid.interior_centers[i];
            let gx = lattice_coord(xi, 0);
            let gy = if dim > 1 { lattice_coord(xi, 1) } else { 0 };
            let mut acc = 0.0;
            for dj in -(gy + lattice.pad)..(lattice.ny + lattice.pad - gy) {
                if dim == 1 && dj != 0 {
                    continue;
                }
                for di in -(gx + lattice.pad)..(lattice.nx + lattice.pad - gx) {
                    let v = match lattice.get(gx + di, gy + dj) {
                        Slot::Interior(k) => field.interior[k],
                        Slot::Band(e) => field.exterior[e],
                        Slot::None => continue,
                    };
                    let w = if dim == 1 { stencil_at(di, 0) } else { stencil_at(di, dj) };
                    acc += w * v;
                }
            }
            for (q, wq) in far_w[ci].iter().enumerate() {
                acc += wq * field.exterior[grid.uniform_band_len + q];
            }
            acc += tail_w[ci] * ubar;
            new_interior[i] = acc;
        }

        // collar reset from the transported core
        let mut rhs = DVector::<f64>::zeros(nc);
        for (row, _) in collar.iter().enumerate() {
            let mut acc = 0.0;
            for (k, &w) in a_ck[row].iter().enumerate() {
                if w != 0.0 {
                    acc += w * new_interior[k];
                }
            }
            rhs[row] = acc;
        }
        let sol = reset_lu.solve(&rhs).expect("collar reset system is nonsingular");
        for (row, &i) in collar.iter().enumerate() {
            new_interior[i] = sol[row];
        }

        field.interior = new_interior;
        assembly.extend(&mut field);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Kernels;

    fn base_config() -> PhantomConfig {
        PhantomConfig {
            params: ProcessParams::new(0.5, 0.5, 1e-3).unwrap(),
            domain: Domain::interval(0.0, 1.0).unwrap(),
            cells: 128,
            t_final: 0.01,
            initial: InitialField::Uniform,
            snapshot_times: vec![0.01],
            band_factor: 2.0,
            quad_tol: 1e-6,
        }
    }

    #[test]
    fn constants_stay_constant() {
        let mut cfg = base_config();
        cfg.t_final = 0.02;
        cfg.snapshot_times = vec![0.02];
        let snaps = run_phantom_process(&cfg).unwrap();
        let f = &snaps[0].field;
        for &v in &f.interior {
            assert!((v - 1.0).abs() < 1e-6, "{v}");
        }
        // exterior band of a constant is the same constant
        for &v in &f.exterior {
            assert!((v - 1.0).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let mut cfg = base_config();
        cfg.cells = 8; // dx = 1/8 > lambda h / 2
        assert!(matches!(
            run_phantom_process(&cfg),
            Err(PhantomError::CollarUnresolved { .. })
        ));
    }

    #[test]
    fn one_step_from_point_mass_matches_combined_density() {
        // deep in the interior the transported delta reproduces the one-step
        // transition density; the jump cut radius is resolved by the grid
        // (h about 10 cells) and the delta sits exactly on a cell center
        let mut cfg = base_config();
        cfg.params = ProcessParams::new(0.5, 0.5, 0.02).unwrap();
        cfg.cells = 511;
        cfg.initial = InitialField::PointMass { at: Point::x1(0.5) };
        let tau = cfg.params.tau();
        cfg.t_final = tau * 1.0001;
        cfg.snapshot_times = vec![tau];
        let snaps = run_phantom_process(&cfg).unwrap();
        let f = &snaps[0].field;
        let kernels = Kernels::new(cfg.params, cfg.domain.clone()).unwrap();
        let dx = f.grid.dx;
        let h = cfg.params.h();
        // oracle: the transition density averaged over both the source cell
        // and the target cell, by quadrature of the continuum kernel
        let rule = crate::quad::GaussRule::order(8);
        let mut l1 = 0.0;
        for (i, c) in f.grid.interior_centers.iter().enumerate() {
            let (lo, hi) = (c.coord(0) - 0.5 * dx, c.coord(0) + 0.5 * dx);
            let avg = rule.integrate(0.5 - 0.5 * dx, 0.5 + 0.5 * dx, |xs| {
                let splits = [xs - h, xs + h];
                crate::quad::adaptive_split(
                    &|y: f64| {
                        let y = y.clamp(1e-12, 1.0 - 1e-12);
                        kernels.combined_density(&Point::x1(xs), &Point::x1(y)).unwrap()
                    },
                    lo,
                    hi,
                    &splits,
                    1e-10,
                )
            }) / (dx * dx);
            l1 += (f.interior[i] - avg).abs() * dx;
        }
        assert!(l1 < 0.02, "L1 distance {l1}");
    }
}
