//! Exterior quadrature for 2D domains.
//!
//! The exterior is covered by collar charts anchored to the boundary
//! (face slabs and corner fans for rectangles, one annular chart for disks)
//! out to a radius `R0` around the domain centroid, then by log-spaced
//! annular sector cells out to the truncation radius, with the analytic
//! power-law tail beyond. Chart layouts depend only on the domain, and any
//! refinement driven by evaluation points is a function of the unordered
//! point pair, so kernel symmetry survives quadrature exactly.

use std::sync::OnceLock;

use crate::geometry::{Domain, Point};
use crate::params::ProcessParams;
use crate::quad;

use super::jump::{mu_2d, silhouette_angles};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// One exterior coordinate patch: `z = z(sigma, delta)` with `delta` the
/// distance to the boundary along the patch.
#[derive(Debug, Clone)]
pub enum Chart {
    Slab { origin: [f64; 2], tangent: [f64; 2], normal: [f64; 2], len: f64 },
    Fan { corner: [f64; 2], phi0: f64, phi1: f64 },
    Ring { center: [f64; 2], radius: f64 },
}

impl Chart {
    pub fn point(&self, sigma: f64, delta: f64) -> Point {
        match self {
            Chart::Slab { origin, tangent, normal, .. } => Point::x2(
                origin[0] + sigma * tangent[0] + delta * normal[0],
                origin[1] + sigma * tangent[1] + delta * normal[1],
            ),
            Chart::Fan { corner, .. } => {
                Point::x2(corner[0] + delta * sigma.cos(), corner[1] + delta * sigma.sin())
            }
            Chart::Ring { center, radius } => Point::x2(
                center[0] + (radius + delta) * sigma.cos(),
                center[1] + (radius + delta) * sigma.sin(),
            ),
        }
    }

    pub fn jacobian(&self, _sigma: f64, delta: f64) -> f64 {
        match self {
            Chart::Slab { .. } => 1.0,
            Chart::Fan { .. } => delta,
            Chart::Ring { radius, .. } => radius + delta,
        }
    }

    pub fn sigma_range(&self) -> (f64, f64) {
        match self {
            Chart::Slab { len, .. } => (0.0, *len),
            Chart::Fan { phi0, phi1, .. } => (*phi0, *phi1),
            Chart::Ring { .. } => (0.0, TWO_PI),
        }
    }

    /// Integral of the Jacobian over `[d0, d1]` at fixed `sigma`.
    pub fn delta_mass(&self, d0: f64, d1: f64) -> f64 {
        if d1 <= d0 {
            return 0.0;
        }
        match self {
            Chart::Slab { .. } => d1 - d0,
            Chart::Fan { .. } => 0.5 * (d1 * d1 - d0 * d0),
            Chart::Ring { radius, .. } => {
                0.5 * ((radius + d1).powi(2) - (radius + d0).powi(2))
            }
        }
    }

    /// Conservative `sigma` interval on which `|z(sigma, delta) - c| < r` is
    /// possible for some `delta >= 0`. Ring windows may extend past `2 pi`
    /// (they are arcs; the map is periodic).
    pub fn ball_sigma_window(&self, c: &Point, r: f64) -> Option<(f64, f64)> {
        match self {
            Chart::Slab { origin, tangent, normal, len } => {
                let vx = c.coord(0) - origin[0];
                let vy = c.coord(1) - origin[1];
                let sc = vx * tangent[0] + vy * tangent[1];
                let nc = vx * normal[0] + vy * normal[1];
                if nc >= r {
                    return None; // ball entirely beyond the slab from outside
                }
                let w2 = r * r - nc * nc;
                let (lo, hi) = if nc <= -r {
                    return None;
                } else {
                    let w = w2.sqrt();
                    (sc - w, sc + w)
                };
                let (s0, s1) = (lo.max(0.0), hi.min(*len));
                if s1 > s0 {
                    Some((s0, s1))
                } else {
                    None
                }
            }
            Chart::Fan { corner, phi0, phi1 } => {
                let vx = c.coord(0) - corner[0];
                let vy = c.coord(1) - corner[1];
                let d = (vx * vx + vy * vy).sqrt();
                if d <= r {
                    return Some((*phi0, *phi1));
                }
                let phic = vy.atan2(vx);
                let half = ((d * d - r * r).sqrt() / d).clamp(-1.0, 1.0).acos();
                // intersect (phic - half, phic + half) with the fan span,
                // trying the 2 pi shifts
                let mut best: Option<(f64, f64)> = None;
                for k in [-1.0, 0.0, 1.0] {
                    let lo = (phic - half + k * TWO_PI).max(*phi0);
                    let hi = (phic + half + k * TWO_PI).min(*phi1);
                    if hi > lo && best.map_or(true, |b| hi - lo > b.1 - b.0) {
                        best = Some((lo, hi));
                    }
                }
                best
            }
            Chart::Ring { center, radius } => {
                let vx = c.coord(0) - center[0];
                let vy = c.coord(1) - center[1];
                let rho = (vx * vx + vy * vy).sqrt();
                if rho < 1e-14 {
                    return if r > *radius { Some((0.0, TWO_PI)) } else { None };
                }
                let cosd = (radius * radius + rho * rho - r * r) / (2.0 * radius * rho);
                if cosd >= 1.0 {
                    return None;
                }
                if cosd <= -1.0 {
                    return Some((0.0, TWO_PI));
                }
                let thc = vy.atan2(vx).rem_euclid(TWO_PI);
                let half = cosd.acos();
                Some((thc - half, thc + half))
            }
        }
    }

    /// The `delta` at which the chart point reaches distance `r0` from `c`
    /// (unique positive root; the chart stays well inside `r0` at `delta=0`).
    pub fn delta_to_radius(&self, sigma: f64, c: &Point, r0: f64) -> f64 {
        match self {
            Chart::Slab { origin, tangent, normal, .. } => {
                let wx = origin[0] + sigma * tangent[0] - c.coord(0);
                let wy = origin[1] + sigma * tangent[1] - c.coord(1);
                let wn = wx * normal[0] + wy * normal[1];
                let w2 = wx * wx + wy * wy;
                -wn + (wn * wn + r0 * r0 - w2).max(0.0).sqrt()
            }
            Chart::Fan { corner, .. } => {
                let wx = corner[0] - c.coord(0);
                let wy = corner[1] - c.coord(1);
                let ew = sigma.cos() * wx + sigma.sin() * wy;
                let w2 = wx * wx + wy * wy;
                -ew + (ew * ew + r0 * r0 - w2).max(0.0).sqrt()
            }
            Chart::Ring { center, radius } => {
                let d = ((center[0] - c.coord(0)).powi(2) + (center[1] - c.coord(1)).powi(2))
                    .sqrt();
                (r0 - radius - d).max(0.0)
            }
        }
    }

    /// Exact `delta` interval (clipped to `delta >= 0`) on which
    /// `|z(sigma, delta) - c| < r` at fixed `sigma`.
    pub fn ball_delta_interval(&self, sigma: f64, c: &Point, r: f64) -> Option<(f64, f64)> {
        match self {
            Chart::Slab { origin, tangent, normal, .. } => {
                let vx = c.coord(0) - origin[0];
                let vy = c.coord(1) - origin[1];
                let sc = vx * tangent[0] + vy * tangent[1];
                let nc = vx * normal[0] + vy * normal[1];
                let q2 = r * r - (sigma - sc) * (sigma - sc);
                if q2 <= 0.0 {
                    return None;
                }
                let q = q2.sqrt();
                let (d0, d1) = ((nc - q).max(0.0), nc + q);
                if d1 > d0 {
                    Some((d0, d1))
                } else {
                    None
                }
            }
            Chart::Fan { corner, .. } => {
                let vx = c.coord(0) - corner[0];
                let vy = c.coord(1) - corner[1];
                let ev = sigma.cos() * vx + sigma.sin() * vy;
                let disc = ev * ev - (vx * vx + vy * vy) + r * r;
                if disc <= 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let (d0, d1) = ((ev - sq).max(0.0), ev + sq);
                if d1 > d0 {
                    Some((d0, d1))
                } else {
                    None
                }
            }
            Chart::Ring { center, radius } => {
                let vx = c.coord(0) - center[0];
                let vy = c.coord(1) - center[1];
                let rho = (vx * vx + vy * vy).sqrt();
                let proj = rho * ((vy.atan2(vx) - sigma).cos());
                let disc = proj * proj - rho * rho + r * r;
                if disc <= 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let (z0, z1) = ((proj - sq).max(*radius), proj + sq);
                if z1 > z0 {
                    Some((z0 - radius, z1 - radius))
                } else {
                    None
                }
            }
        }
    }
}

/// Exterior charts keyed to the nearest boundary feature; together they
/// partition the exterior of the domain.
pub fn collar_charts(domain: &Domain) -> Vec<Chart> {
    match domain {
        Domain::Rectangle { lo, hi } => {
            let (x0, y0, x1, y1) = (lo.coord(0), lo.coord(1), hi.coord(0), hi.coord(1));
            let (lx, ly) = (x1 - x0, y1 - y0);
            vec![
                // faces: bottom, right, top, left
                Chart::Slab { origin: [x0, y0], tangent: [1.0, 0.0], normal: [0.0, -1.0], len: lx },
                Chart::Slab { origin: [x1, y0], tangent: [0.0, 1.0], normal: [1.0, 0.0], len: ly },
                Chart::Slab { origin: [x0, y1], tangent: [1.0, 0.0], normal: [0.0, 1.0], len: lx },
                Chart::Slab { origin: [x0, y0], tangent: [0.0, 1.0], normal: [-1.0, 0.0], len: ly },
                // corner fans, counterclockwise from the top-right
                Chart::Fan { corner: [x1, y1], phi0: 0.0, phi1: 0.5 * std::f64::consts::PI },
                Chart::Fan {
                    corner: [x0, y1],
                    phi0: 0.5 * std::f64::consts::PI,
                    phi1: std::f64::consts::PI,
                },
                Chart::Fan {
                    corner: [x0, y0],
                    phi0: std::f64::consts::PI,
                    phi1: 1.5 * std::f64::consts::PI,
                },
                Chart::Fan { corner: [x1, y0], phi0: 1.5 * std::f64::consts::PI, phi1: TWO_PI },
            ]
        }
        Domain::Disk { center, radius } => {
            vec![Chart::Ring { center: [center.coord(0), center.coord(1)], radius: *radius }]
        }
        _ => panic!("collar charts exist for 2D domains only"),
    }
}

/// Locate an exterior point in the chart family: `(chart index, sigma, delta)`.
pub fn locate(domain: &Domain, charts: &[Chart], z: &Point) -> Option<(usize, f64, f64)> {
    match domain {
        Domain::Rectangle { lo, hi } => {
            let (x0, y0, x1, y1) = (lo.coord(0), lo.coord(1), hi.coord(0), hi.coord(1));
            let (zx, zy) = (z.coord(0), z.coord(1));
            let below = zy < y0;
            let above = zy > y1;
            let left = zx < x0;
            let right = zx > x1;
            let idx = match (left, right, below, above) {
                (false, false, true, false) => 0,
                (false, true, false, false) => 1,
                (false, false, false, true) => 2,
                (true, false, false, false) => 3,
                (false, true, false, true) => 4,
                (true, false, false, true) => 5,
                (true, false, true, false) => 6,
                (false, true, true, false) => 7,
                _ => return None, // inside or on the closure
            };
            match &charts[idx] {
                Chart::Slab { origin, tangent, normal, .. } => {
                    let vx = zx - origin[0];
                    let vy = zy - origin[1];
                    Some((idx, vx * tangent[0] + vy * tangent[1], vx * normal[0] + vy * normal[1]))
                }
                Chart::Fan { corner, phi0, .. } => {
                    let vx = zx - corner[0];
                    let vy = zy - corner[1];
                    let mut phi = vy.atan2(vx).rem_euclid(TWO_PI);
                    if phi < *phi0 {
                        phi += TWO_PI;
                    }
                    Some((idx, phi, (vx * vx + vy * vy).sqrt()))
                }
                Chart::Ring { .. } => unreachable!(),
            }
        }
        Domain::Disk { center, radius } => {
            let vx = z.coord(0) - center.coord(0);
            let vy = z.coord(1) - center.coord(1);
            let rho = (vx * vx + vy * vy).sqrt();
            if rho <= *radius {
                None
            } else {
                Some((0, vy.atan2(vx).rem_euclid(TWO_PI), rho - radius))
            }
        }
        _ => None,
    }
}

/// Intersect two sigma windows on a chart, honoring ring periodicity.
pub fn intersect_sigma_windows(
    chart: &Chart,
    w1: (f64, f64),
    w2: (f64, f64),
) -> Vec<(f64, f64)> {
    match chart {
        Chart::Ring { .. } => {
            let mut out = Vec::new();
            for k in [-1.0, 0.0, 1.0] {
                let lo = w1.0.max(w2.0 + k * TWO_PI);
                let hi = w1.1.min(w2.1 + k * TWO_PI);
                if hi > lo + 1e-15 {
                    out.push((lo, hi));
                }
            }
            out
        }
        _ => {
            let lo = w1.0.max(w2.0);
            let hi = w1.1.min(w2.1);
            if hi > lo {
                vec![(lo, hi)]
            } else {
                vec![]
            }
        }
    }
}

/// One far-field annular sector cell with its precomputed re-entry weight.
struct FarCell {
    node: Point,
    area: f64,
    mu: f64,
}

/// Interpolation table over one chart: `mu` sampled on a `sigma x delta`
/// grid (linear spacing up to `h`, logarithmic beyond).
struct MuChartTable {
    sigmas: Vec<f64>,
    deltas: Vec<f64>,
    values: Vec<f64>, // row-major [sigma][delta]
}

impl MuChartTable {
    fn lookup(&self, sigma: f64, delta: f64) -> f64 {
        let si = bracket(&self.sigmas, sigma);
        let di = bracket(&self.deltas, delta);
        let (s0, s1) = (self.sigmas[si], self.sigmas[si + 1]);
        let (d0, d1) = (self.deltas[di], self.deltas[di + 1]);
        let ts = ((sigma - s0) / (s1 - s0)).clamp(0.0, 1.0);
        let td = ((delta - d0) / (d1 - d0)).clamp(0.0, 1.0);
        let n = self.deltas.len();
        let v00 = self.values[si * n + di];
        let v01 = self.values[si * n + di + 1];
        let v10 = self.values[(si + 1) * n + di];
        let v11 = self.values[(si + 1) * n + di + 1];
        (1.0 - ts) * ((1.0 - td) * v00 + td * v01) + ts * ((1.0 - td) * v10 + td * v11)
    }
}

fn bracket(axis: &[f64], v: f64) -> usize {
    match axis.binary_search_by(|a| a.total_cmp(&v)) {
        Ok(i) => i.min(axis.len() - 2),
        Err(i) => i.clamp(1, axis.len() - 1) - 1,
    }
}

struct MuTables {
    charts: Vec<MuChartTable>,
    far: MuChartTable, // sigma = angle, delta = ln(rho)
}

/// Precomputed exterior quadrature scaffolding for one `(domain, params)`.
pub struct Exterior2d {
    charts: Vec<Chart>,
    far_cells: Vec<FarCell>,
    centroid: Point,
    r0: f64,
    r_trunc: f64,
    mu_tables: OnceLock<MuTables>,
}

impl Exterior2d {
    pub fn build(domain: &Domain, params: &ProcessParams, r_trunc: f64) -> Self {
        let charts = collar_charts(domain);
        let centroid = domain.interior_point();
        let (lo, hi) = domain.bounding_box();
        let corner_dist = [
            Point::x2(lo.coord(0), lo.coord(1)),
            Point::x2(hi.coord(0), lo.coord(1)),
            Point::x2(lo.coord(0), hi.coord(1)),
            Point::x2(hi.coord(0), hi.coord(1)),
        ]
        .iter()
        .map(|c| c.dist(&centroid))
        .fold(0.0f64, f64::max);
        let r0 = corner_dist + 1.5 * domain.diameter();

        let mut far_cells = Vec::new();
        let radial = quad::geometric_edges(r0, r_trunc.max(r0 * 1.01), r0 * 0.08, 1.08);
        let n_theta = 64;
        for w in radial.windows(2) {
            let (ra, rb) = (w[0], w[1]);
            // area centroid of the annular sector
            let rnode = 2.0 / 3.0 * (rb.powi(3) - ra.powi(3)) / (rb * rb - ra * ra);
            for k in 0..n_theta {
                let th = TWO_PI * (k as f64 + 0.5) / n_theta as f64;
                let node = Point::x2(
                    centroid.coord(0) + rnode * th.cos(),
                    centroid.coord(1) + rnode * th.sin(),
                );
                let area = 0.5 * (rb * rb - ra * ra) * TWO_PI / n_theta as f64;
                let mu = mu_2d(domain, params.h(), params.s(), &node);
                far_cells.push(FarCell { node, area, mu });
            }
        }
        Self { charts, far_cells, centroid, r0, r_trunc, mu_tables: OnceLock::new() }
    }

    fn mu_tables(&self, domain: &Domain, params: &ProcessParams) -> &MuTables {
        self.mu_tables.get_or_init(|| {
            let h = params.h();
            let build_chart = |chart: &Chart, n_sigma: usize| {
                let (s0, s1) = chart.sigma_range();
                let sigmas: Vec<f64> = (0..=n_sigma)
                    .map(|i| s0 + (s1 - s0) * i as f64 / n_sigma as f64)
                    .collect();
                let mut deltas: Vec<f64> = (0..=12)
                    .map(|i| h * i as f64 / 12.0)
                    .collect();
                let d_hi = self.r0;
                let n_log = 56;
                for i in 1..=n_log {
                    deltas.push(h * (d_hi / h).powf(i as f64 / n_log as f64));
                }
                let mut values = Vec::with_capacity(sigmas.len() * deltas.len());
                for &s in &sigmas {
                    for &d in &deltas {
                        let z = chart.point(s, d.max(1e-14));
                        values.push(mu_2d(domain, params.h(), params.s(), &z));
                    }
                }
                MuChartTable { sigmas, deltas, values }
            };
            let charts = self
                .charts
                .iter()
                .map(|c| {
                    let n_sigma = match c {
                        Chart::Slab { .. } => 128,
                        Chart::Fan { .. } => 32,
                        Chart::Ring { .. } => 256,
                    };
                    build_chart(c, n_sigma)
                })
                .collect();
            // far table in (angle, ln rho)
            let n_th = 96;
            let n_r = 64;
            let sigmas: Vec<f64> = (0..=n_th).map(|i| TWO_PI * i as f64 / n_th as f64).collect();
            let deltas: Vec<f64> = (0..=n_r)
                .map(|i| {
                    (self.r0 * 0.98).ln()
                        + ((self.r_trunc / (self.r0 * 0.98)).ln()) * i as f64 / n_r as f64
                })
                .collect();
            let mut values = Vec::with_capacity(sigmas.len() * deltas.len());
            for &th in &sigmas {
                for &lr in &deltas {
                    let rho = lr.exp();
                    let z = Point::x2(
                        self.centroid.coord(0) + rho * th.cos(),
                        self.centroid.coord(1) + rho * th.sin(),
                    );
                    values.push(mu_2d(domain, params.h(), params.s(), &z));
                }
            }
            let far = MuChartTable { sigmas, deltas, values };
            MuTables { charts, far }
        })
    }

    /// Interpolated `mu_h(z)`; falls back to the asymptotic form past the
    /// truncation radius.
    pub fn mu_interp(&self, domain: &Domain, params: &ProcessParams, z: &Point) -> f64 {
        let tables = self.mu_tables(domain, params);
        let rho = z.dist(&self.centroid);
        if rho >= self.r0 {
            if rho >= self.r_trunc {
                let (s, h) = (params.s(), params.h());
                return 2.0 * s * h.powf(2.0 * s) * domain.volume()
                    / rho.powf(2.0 + 2.0 * s);
            }
            let th = (z.coord(1) - self.centroid.coord(1))
                .atan2(z.coord(0) - self.centroid.coord(0))
                .rem_euclid(TWO_PI);
            return tables.far.lookup(th, rho.ln());
        }
        match locate(domain, &self.charts, z) {
            Some((idx, sigma, delta)) => tables.charts[idx].lookup(sigma, delta),
            None => mu_2d(domain, params.h(), params.s(), z), // on the closure seam
        }
    }

    /// Reflected jump term
    /// `int over exterior of (2s h^{2s})^2 chi chi / (surf mu |x-z|^{2+2s} |y-z|^{2+2s}) dz`.
    pub fn jump_reflected(
        &self,
        domain: &Domain,
        params: &ProcessParams,
        x: &Point,
        y: &Point,
    ) -> f64 {
        let (s, h) = (params.s(), params.h());
        let two_s = 2.0 * s;
        let pref = (2.0 * s * h.powf(two_s)).powi(2) / TWO_PI;
        let kernel = |z: &Point| -> f64 {
            let (dx, dy) = (z.dist(x), z.dist(y));
            if dx <= h || dy <= h {
                return 0.0;
            }
            let mu = self.mu_interp(domain, params, z);
            if mu <= 0.0 {
                return 0.0;
            }
            1.0 / (mu * dx.powf(2.0 + two_s) * dy.powf(2.0 + two_s))
        };

        let mut collar = 0.0;
        for chart in &self.charts {
            let (s0, s1) = chart.sigma_range();
            // splits where the punched balls around x and y cross the chart
            let mut splits = Vec::new();
            for p in [x, y] {
                if let Some((a, b)) = chart.ball_sigma_window(p, h) {
                    splits.push(a);
                    splits.push(b);
                }
                // concentration of the kernel near the closest boundary point
                if let Some((a, b)) = chart.ball_sigma_window(p, 4.0 * h) {
                    splits.push(a);
                    splits.push(b);
                }
            }
            let g = |sigma: f64| -> f64 {
                // the chart hands off to the far cells exactly at |z - c| = r0
                let d_cut = chart.delta_to_radius(sigma, &self.centroid, self.r0);
                if d_cut <= 0.0 {
                    return 0.0;
                }
                let first = (h / 4.0).min(d_cut / 48.0);
                let delta_edges = quad::geometric_edges(0.0, d_cut, first, 1.4);
                let mut acc = 0.0;
                for w in delta_edges.windows(2) {
                    acc += quad::GaussRule::order(6).integrate(w[0], w[1], |d| {
                        kernel(&chart.point(sigma, d)) * chart.jacobian(sigma, d)
                    });
                }
                acc
            };
            // coarse scale pass, then adaptive with a tolerance tied to it
            let coarse: f64 = {
                let n = 24;
                let ds = (s1 - s0) / n as f64;
                (0..n).map(|i| g(s0 + (i as f64 + 0.5) * ds) * ds).sum()
            };
            let tol = 3e-4 * coarse.abs() + 1e-300;
            collar += quad::adaptive_split(&g, s0, s1, &splits, tol);
        }

        let far: f64 = self
            .far_cells
            .iter()
            .map(|c| {
                let (dx, dy) = (c.node.dist(x), c.node.dist(y));
                if c.mu <= 0.0 {
                    return 0.0;
                }
                c.area / (c.mu * dx.powf(2.0 + two_s) * dy.powf(2.0 + two_s))
            })
            .sum();

        let tail = h.powf(two_s) * self.r_trunc.powf(-two_s) / domain.volume();
        pref * (collar + far) + tail
    }

    /// `int_Omega P_J(x -> y) dy` by integrating the inner re-entry law
    /// first: the direct part runs over the domain, the egress part over the
    /// exterior, both with exact radial antiderivatives per direction.
    pub fn jump_normalization(&self, domain: &Domain, params: &ProcessParams, x: &Point) -> f64 {
        let (s, h) = (params.s(), params.h());
        let two_s = 2.0 * s;
        let h2s = h.powf(two_s);
        let exit = |theta: f64| -> f64 {
            let dir = Point::x2(theta.cos(), theta.sin());
            domain
                .ray_interval(x, &dir, 0.0)
                .map(|(_, t)| t)
                .unwrap_or(0.0)
        };
        let splits = silhouette_angles(domain, x);
        let direct = quad::adaptive_split(
            &|th: f64| {
                let t = exit(th);
                if t > h {
                    h.powf(-two_s) - t.powf(-two_s)
                } else {
                    0.0
                }
            },
            0.0,
            TWO_PI,
            &splits,
            1e-11 * h.powf(-two_s),
        );
        let egress = quad::adaptive_split(
            &|th: f64| exit(th).max(h).powf(-two_s),
            0.0,
            TWO_PI,
            &splits,
            1e-11 * h.powf(-two_s),
        );
        h2s / TWO_PI * (direct + egress)
    }
}
