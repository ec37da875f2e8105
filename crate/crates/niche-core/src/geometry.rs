//! Niche geometry: bounded domains, the halfspace used by the boundary
//! analysis, and the intersection measures every kernel formula needs.
//!
//! All boundaries follow the open-set convention: `contains` excludes the
//! boundary, matching integral formulas where the boundary has measure zero.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::unit_ball_volume;

/// Maximum spatial dimension carried inline by [`Point`].
pub const MAX_DIM: usize = 4;

const BOUNDARY_TOL: f64 = 1e-9;
const REJECTION_CAP: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("point dimension {got} does not match domain dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point is not on the boundary (distance {0:.3e})")]
    NotOnBoundary(f64),
    #[error("rejection sampling exceeded {0} retries; intersection is degenerate")]
    RejectionCapExceeded(usize),
    #[error("intersection of the domain and the ball has zero measure")]
    EmptyIntersection,
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
}

/// A point in `R^n`, `n <= 4`, stored inline so it is `Copy`.
#[derive(Debug, Clone, Copy)]
pub struct Point {
    dim: u8,
    coords: [f64; MAX_DIM],
}

impl Point {
    pub fn new(coords: &[f64]) -> Self {
        assert!(
            coords.len() >= 1 && coords.len() <= MAX_DIM,
            "point dimension must be 1..={MAX_DIM}"
        );
        assert!(coords.iter().all(|c| c.is_finite()), "coordinates must be finite");
        let mut c = [0.0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Self { dim: coords.len() as u8, coords: c }
    }

    pub fn x1(a: f64) -> Self {
        Self::new(&[a])
    }

    pub fn x2(a: f64, b: f64) -> Self {
        Self::new(&[a, b])
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim as usize]
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.coords()[i]
    }

    pub fn dist(&self, other: &Point) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.coords().iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn add_scaled(&self, dir: &Point, t: f64) -> Point {
        debug_assert_eq!(self.dim, dir.dim);
        let mut c = self.coords;
        for i in 0..self.dim() {
            c[i] += t * dir.coords[i];
        }
        Point { dim: self.dim, coords: c }
    }
}

impl PartialEq for Point {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.coords() == other.coords()
    }
}

impl Serialize for Point {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        self.coords().serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(de)?;
        if v.is_empty() || v.len() > MAX_DIM {
            return Err(serde::de::Error::custom(format!(
                "point must have 1..={MAX_DIM} coordinates"
            )));
        }
        Ok(Point::new(&v))
    }
}

/// The niche `Omega` (bounded variants) or the halfspace `Pi` used by the
/// boundary-expansion checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Domain {
    Interval { a: f64, b: f64 },
    Rectangle { lo: Point, hi: Point },
    Disk { center: Point, radius: f64 },
    /// `{ x : x . normal < 0 }`, boundary through the origin.
    Halfspace { normal: Point },
}

impl Domain {
    pub fn interval(a: f64, b: f64) -> Result<Self, GeometryError> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(GeometryError::InvalidDomain(format!("need a < b, got [{a}, {b}]")));
        }
        Ok(Domain::Interval { a, b })
    }

    pub fn rectangle(lo: Point, hi: Point) -> Result<Self, GeometryError> {
        if lo.dim() != 2 || hi.dim() != 2 {
            return Err(GeometryError::InvalidDomain("rectangle must be 2D".into()));
        }
        if !(lo.coord(0) < hi.coord(0) && lo.coord(1) < hi.coord(1)) {
            return Err(GeometryError::InvalidDomain("need lo < hi componentwise".into()));
        }
        Ok(Domain::Rectangle { lo, hi })
    }

    pub fn disk(center: Point, radius: f64) -> Result<Self, GeometryError> {
        if center.dim() != 2 {
            return Err(GeometryError::InvalidDomain("disk center must be 2D".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(GeometryError::InvalidDomain(format!("need radius > 0, got {radius}")));
        }
        Ok(Domain::Disk { center, radius })
    }

    pub fn halfspace(normal: Point) -> Result<Self, GeometryError> {
        let n = normal.norm();
        if (n - 1.0).abs() > 1e-12 {
            return Err(GeometryError::InvalidDomain(format!(
                "halfspace normal must be a unit vector, |nu| = {n}"
            )));
        }
        Ok(Domain::Halfspace { normal })
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            Domain::Rectangle { .. } | Domain::Disk { .. } => 2,
            Domain::Halfspace { normal } => normal.dim(),
        }
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self, Domain::Halfspace { .. })
    }

    /// Lebesgue measure of the domain; infinite for the halfspace.
    pub fn volume(&self) -> f64 {
        match self {
            Domain::Interval { a, b } => b - a,
            Domain::Rectangle { lo, hi } => {
                (hi.coord(0) - lo.coord(0)) * (hi.coord(1) - lo.coord(1))
            }
            Domain::Disk { radius, .. } => std::f64::consts::PI * radius * radius,
            Domain::Halfspace { .. } => f64::INFINITY,
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            Domain::Interval { a, b } => b - a,
            Domain::Rectangle { lo, hi } => lo.dist(hi),
            Domain::Disk { radius, .. } => 2.0 * radius,
            Domain::Halfspace { .. } => f64::INFINITY,
        }
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        match self {
            Domain::Interval { a, b } => (Point::x1(*a), Point::x1(*b)),
            Domain::Rectangle { lo, hi } => (*lo, *hi),
            Domain::Disk { center, radius } => (
                Point::x2(center.coord(0) - radius, center.coord(1) - radius),
                Point::x2(center.coord(0) + radius, center.coord(1) + radius),
            ),
            Domain::Halfspace { .. } => panic!("halfspace has no bounding box"),
        }
    }

    /// A reference point well inside the domain.
    pub fn interior_point(&self) -> Point {
        match self {
            Domain::Interval { a, b } => Point::x1(0.5 * (a + b)),
            Domain::Rectangle { lo, hi } => Point::x2(
                0.5 * (lo.coord(0) + hi.coord(0)),
                0.5 * (lo.coord(1) + hi.coord(1)),
            ),
            Domain::Disk { center, .. } => *center,
            Domain::Halfspace { normal } => {
                let mut c = [0.0; MAX_DIM];
                for i in 0..normal.dim() {
                    c[i] = -normal.coord(i);
                }
                Point { dim: normal.dim as u8, coords: c }
            }
        }
    }

    fn check_dim(&self, x: &Point) {
        assert_eq!(
            self.dim(),
            x.dim(),
            "point dimension {} does not match domain dimension {}",
            x.dim(),
            self.dim()
        );
    }

    /// Open-set membership; boundary points return `false`.
    pub fn contains(&self, x: &Point) -> bool {
        self.check_dim(x);
        match self {
            Domain::Interval { a, b } => x.coord(0) > *a && x.coord(0) < *b,
            Domain::Rectangle { lo, hi } => (0..2).all(|i| {
                x.coord(i) > lo.coord(i) && x.coord(i) < hi.coord(i)
            }),
            Domain::Disk { center, radius } => {
                let dx = x.coord(0) - center.coord(0);
                let dy = x.coord(1) - center.coord(1);
                dx * dx + dy * dy < radius * radius
            }
            Domain::Halfspace { normal } => {
                let dot: f64 = x
                    .coords()
                    .iter()
                    .zip(normal.coords())
                    .map(|(a, b)| a * b)
                    .sum();
                dot < 0.0
            }
        }
    }

    /// Signed distance to the boundary: negative inside, positive outside.
    pub fn signed_distance(&self, x: &Point) -> f64 {
        self.check_dim(x);
        match self {
            Domain::Interval { a, b } => {
                let t = x.coord(0);
                (a - t).max(t - b)
            }
            Domain::Rectangle { lo, hi } => {
                let dx = (lo.coord(0) - x.coord(0)).max(x.coord(0) - hi.coord(0));
                let dy = (lo.coord(1) - x.coord(1)).max(x.coord(1) - hi.coord(1));
                if dx <= 0.0 && dy <= 0.0 {
                    dx.max(dy)
                } else {
                    (dx.max(0.0).powi(2) + dy.max(0.0).powi(2)).sqrt()
                }
            }
            Domain::Disk { center, radius } => x.dist(center) - radius,
            Domain::Halfspace { normal } => x
                .coords()
                .iter()
                .zip(normal.coords())
                .map(|(a, b)| a * b)
                .sum(),
        }
    }

    /// Distance from an interior point to the boundary (0 outside).
    pub fn interior_distance(&self, x: &Point) -> f64 {
        (-self.signed_distance(x)).max(0.0)
    }

    /// Distance from an exterior point to the closure (0 inside).
    pub fn exterior_distance(&self, x: &Point) -> f64 {
        self.signed_distance(x).max(0.0)
    }

    /// Outward unit normal at a boundary point (within 1e-9 of the boundary
    /// for bounded variants; the halfspace returns its stored normal).
    pub fn outward_normal(&self, x: &Point) -> Result<Point, GeometryError> {
        self.check_dim(x);
        if let Domain::Halfspace { normal } = self {
            return Ok(*normal);
        }
        let d = self.signed_distance(x).abs();
        if d > BOUNDARY_TOL {
            return Err(GeometryError::NotOnBoundary(d));
        }
        match self {
            Domain::Interval { a, b } => {
                if (x.coord(0) - a).abs() <= (x.coord(0) - b).abs() {
                    Ok(Point::x1(-1.0))
                } else {
                    Ok(Point::x1(1.0))
                }
            }
            Domain::Rectangle { lo, hi } => {
                // Nearest face wins; at a corner the smaller-index axis wins.
                let gaps = [
                    (x.coord(0) - lo.coord(0)).abs(),
                    (hi.coord(0) - x.coord(0)).abs(),
                    (x.coord(1) - lo.coord(1)).abs(),
                    (hi.coord(1) - x.coord(1)).abs(),
                ];
                let k = gaps
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .unwrap()
                    .0;
                Ok(match k {
                    0 => Point::x2(-1.0, 0.0),
                    1 => Point::x2(1.0, 0.0),
                    2 => Point::x2(0.0, -1.0),
                    _ => Point::x2(0.0, 1.0),
                })
            }
            Domain::Disk { center, .. } => {
                let r = x.dist(center);
                Ok(Point::x2(
                    (x.coord(0) - center.coord(0)) / r,
                    (x.coord(1) - center.coord(1)) / r,
                ))
            }
            Domain::Halfspace { .. } => unreachable!(),
        }
    }

    /// `L^n(Omega intersect B_r(center))`, exact in closed form for every
    /// shipped shape (interval overlap, circle-rectangle, circle-circle,
    /// spherical cap).
    pub fn ball_intersection_volume(&self, center: &Point, r: f64) -> f64 {
        self.check_dim(center);
        assert!(r > 0.0, "ball radius must be positive");
        match self {
            Domain::Interval { a, b } => {
                let lo = (center.coord(0) - r).max(*a);
                let hi = (center.coord(0) + r).min(*b);
                (hi - lo).max(0.0)
            }
            Domain::Rectangle { lo, hi } => disk_rect_area(center, r, lo, hi),
            Domain::Disk { center: c, radius } => lens_area(center.dist(c), r, *radius),
            Domain::Halfspace { normal } => {
                let t: f64 = center
                    .coords()
                    .iter()
                    .zip(normal.coords())
                    .map(|(a, b)| a * b)
                    .sum();
                cap_volume(normal.dim(), r, t)
            }
        }
    }

    /// Uniform sample on `Omega intersect B_r(center)` by rejection from the
    /// uniform law on the ball. In the dispersal process the egress point
    /// always has `|z - x| < r` with `x` inside, so the intersection contains
    /// a ball and acceptance is bounded below; the retry cap only guards
    /// misuse.
    pub fn sample_uniform_in_intersection<R: Rng + ?Sized>(
        &self,
        center: &Point,
        r: f64,
        rng: &mut R,
    ) -> Result<Point, GeometryError> {
        self.check_dim(center);
        for _ in 0..REJECTION_CAP {
            let y = sample_uniform_in_ball(center, r, rng);
            if self.contains(&y) {
                return Ok(y);
            }
        }
        Err(GeometryError::RejectionCapExceeded(REJECTION_CAP))
    }

    /// For a ray `origin + t * dir` (`dir` unit), the parameter interval
    /// `(t_in, t_out)` with `t >= t_min` on which the ray lies inside the
    /// domain, or `None` if it misses. Bounded shapes are convex so the
    /// interval is unique.
    pub fn ray_interval(&self, origin: &Point, dir: &Point, t_min: f64) -> Option<(f64, f64)> {
        self.check_dim(origin);
        let (mut t0, mut t1) = (t_min, f64::INFINITY);
        match self {
            Domain::Interval { a, b } => {
                let (o, d) = (origin.coord(0), dir.coord(0));
                if d.abs() < 1e-300 {
                    if o <= *a || o >= *b {
                        return None;
                    }
                } else {
                    let (ta, tb) = ((a - o) / d, (b - o) / d);
                    t0 = t0.max(ta.min(tb));
                    t1 = t1.min(ta.max(tb));
                }
            }
            Domain::Rectangle { lo, hi } => {
                for i in 0..2 {
                    let (o, d) = (origin.coord(i), dir.coord(i));
                    if d.abs() < 1e-300 {
                        if o <= lo.coord(i) || o >= hi.coord(i) {
                            return None;
                        }
                    } else {
                        let (ta, tb) = ((lo.coord(i) - o) / d, (hi.coord(i) - o) / d);
                        t0 = t0.max(ta.min(tb));
                        t1 = t1.min(ta.max(tb));
                    }
                }
            }
            Domain::Disk { center, radius } => {
                let ox = origin.coord(0) - center.coord(0);
                let oy = origin.coord(1) - center.coord(1);
                let (dx, dy) = (dir.coord(0), dir.coord(1));
                let b = ox * dx + oy * dy;
                let c = ox * ox + oy * oy - radius * radius;
                let disc = b * b - c;
                if disc <= 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                t0 = t0.max(-b - sq);
                t1 = t1.min(-b + sq);
            }
            Domain::Halfspace { normal } => {
                let on: f64 = origin
                    .coords()
                    .iter()
                    .zip(normal.coords())
                    .map(|(a, b)| a * b)
                    .sum();
                let dn: f64 = dir
                    .coords()
                    .iter()
                    .zip(normal.coords())
                    .map(|(a, b)| a * b)
                    .sum();
                if dn.abs() < 1e-300 {
                    if on >= 0.0 {
                        return None;
                    }
                } else if dn > 0.0 {
                    t1 = t1.min(-on / dn);
                } else {
                    t0 = t0.max(-on / dn);
                }
            }
        }
        if t1 > t0 {
            Some((t0, t1))
        } else {
            None
        }
    }
}

/// Uniform sample on the ball `B_r(center)` (1D interval, 2D polar map).
pub fn sample_uniform_in_ball<R: Rng + ?Sized>(center: &Point, r: f64, rng: &mut R) -> Point {
    match center.dim() {
        1 => {
            let u: f64 = rng.random();
            Point::x1(center.coord(0) + r * (2.0 * u - 1.0))
        }
        2 => {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            let rho = r * u.sqrt();
            let theta = 2.0 * std::f64::consts::PI * v;
            Point::x2(
                center.coord(0) + rho * theta.cos(),
                center.coord(1) + rho * theta.sin(),
            )
        }
        d => panic!("uniform ball sampling only shipped for 1D/2D, got {d}"),
    }
}

/// Area of `disk(c, r) intersect [lo, hi]`, exact.
///
/// Built from the corner function `A(x, y)` = area of the disk at the origin
/// below and to the left of `(x, y)`, combined by inclusion-exclusion.
pub fn disk_rect_area(c: &Point, r: f64, lo: &Point, hi: &Point) -> f64 {
    let x0 = lo.coord(0) - c.coord(0);
    let x1 = hi.coord(0) - c.coord(0);
    let y0 = lo.coord(1) - c.coord(1);
    let y1 = hi.coord(1) - c.coord(1);
    let a = corner_area(r, x1, y1) - corner_area(r, x0, y1) - corner_area(r, x1, y0)
        + corner_area(r, x0, y0);
    a.max(0.0)
}

/// Antiderivative of the half-chord `sqrt(r^2 - t^2)` on `[-r, r]`.
fn chord_int(r: f64, t0: f64, t1: f64) -> f64 {
    let prim = |t: f64| {
        let t = t.clamp(-r, r);
        0.5 * (t * (r * r - t * t).max(0.0).sqrt() + r * r * (t / r).asin())
    };
    prim(t1) - prim(t0)
}

/// Area of `disk(0, r) intersect {X <= x} intersect {Y <= y}`.
fn corner_area(r: f64, x: f64, y: f64) -> f64 {
    if x <= -r || y <= -r {
        return 0.0;
    }
    let xc = x.min(r);
    let g = (r * r - y * y).max(0.0).sqrt();
    if y >= 0.0 {
        // below y: full chords outside [-g, g], chord bottom + y inside
        let a = -g;
        let b = xc.min(g);
        let mut area = 2.0 * chord_int(r, -r, xc);
        if b > a {
            area += y * (b - a) - chord_int(r, a, b);
        }
        area
    } else {
        let a = -g;
        let b = xc.min(g);
        if b <= a {
            return 0.0;
        }
        y * (b - a) + chord_int(r, a, b)
    }
}

/// Area of the intersection of two disks with center distance `d`.
pub fn lens_area(d: f64, r1: f64, r2: f64) -> f64 {
    if d >= r1 + r2 {
        return 0.0;
    }
    let rmin = r1.min(r2);
    if d <= (r1 - r2).abs() {
        return std::f64::consts::PI * rmin * rmin;
    }
    let t1 = ((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1)).clamp(-1.0, 1.0);
    let t2 = ((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2)).clamp(-1.0, 1.0);
    let k = (-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2);
    r1 * r1 * t1.acos() + r2 * r2 * t2.acos() - 0.5 * k.max(0.0).sqrt()
}

/// Volume of `B_r(center) intersect {halfspace}` for a center at signed
/// distance `t` from the bounding hyperplane (`t < 0` inside).
fn cap_volume(n: usize, r: f64, t: f64) -> f64 {
    if t <= -r {
        return unit_ball_volume(n) * r.powi(n as i32);
    }
    if t >= r {
        return 0.0;
    }
    let u = t / r;
    let frac = match n {
        1 => 0.5 * (1.0 - u),
        2 => {
            // (2/pi) * int_{-1}^{-u} sqrt(1 - w^2) dw
            let prim = |w: f64| 0.5 * (w * (1.0 - w * w).sqrt() + w.asin());
            (2.0 / std::f64::consts::PI) * (prim(-u) - prim(-1.0))
        }
        3 => {
            let prim = |w: f64| 0.75 * (w - w * w * w / 3.0);
            prim(-u) - prim(-1.0)
        }
        _ => {
            // slice integral, adaptive not needed at this accuracy demand
            let m = 20_000;
            let lo = -1.0;
            let hi = -u;
            let dw = (hi - lo) / m as f64;
            let mut s = 0.0;
            for i in 0..m {
                let w = lo + (i as f64 + 0.5) * dw;
                s += (1.0 - w * w).powf((n as f64 - 1.0) / 2.0);
            }
            s * dw * unit_ball_volume(n - 1) / unit_ball_volume(n)
        }
    };
    unit_ball_volume(n) * r.powi(n as i32) * frac
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_interval() -> Domain {
        Domain::interval(0.0, 1.0).unwrap()
    }

    fn unit_square() -> Domain {
        Domain::rectangle(Point::x2(0.0, 0.0), Point::x2(1.0, 1.0)).unwrap()
    }

    fn unit_disk() -> Domain {
        Domain::disk(Point::x2(0.0, 0.0), 1.0).unwrap()
    }

    #[test]
    fn contains_open_convention() {
        assert!(unit_interval().contains(&Point::x1(0.5)));
        assert!(!unit_interval().contains(&Point::x1(1.0)));
        // (0.6, 0.8) lies exactly on the unit circle
        assert!(!unit_disk().contains(&Point::x2(0.6, 0.8)));
    }

    #[test]
    fn normals_at_boundary() {
        let d = unit_interval();
        assert_eq!(d.outward_normal(&Point::x1(1.0)).unwrap(), Point::x1(1.0));
        assert_eq!(d.outward_normal(&Point::x1(0.0)).unwrap(), Point::x1(-1.0));
        let disk = unit_disk();
        assert_eq!(
            disk.outward_normal(&Point::x2(1.0, 0.0)).unwrap(),
            Point::x2(1.0, 0.0)
        );
        assert!(matches!(
            d.outward_normal(&Point::x1(0.5)),
            Err(GeometryError::NotOnBoundary(_))
        ));
    }

    #[test]
    fn normal_points_outward_for_convex_shapes() {
        let shapes = [unit_interval(), unit_square(), unit_disk()];
        let boundary_pts: [Vec<Point>; 3] = [
            vec![Point::x1(0.0), Point::x1(1.0)],
            vec![Point::x2(0.0, 0.3), Point::x2(1.0, 0.7), Point::x2(0.2, 1.0)],
            vec![Point::x2(0.6, 0.8), Point::x2(-1.0, 0.0)],
        ];
        for (dom, pts) in shapes.iter().zip(boundary_pts.iter()) {
            let c = dom.interior_point();
            for p in pts {
                let nu = dom.outward_normal(p).unwrap();
                let dot: f64 = nu
                    .coords()
                    .iter()
                    .zip(p.coords().iter().zip(c.coords()))
                    .map(|(n, (x, cx))| n * (x - cx))
                    .sum();
                assert!(dot > 0.0, "normal must point away from the interior");
            }
        }
    }

    #[test]
    fn interval_ball_volumes() {
        let d = unit_interval();
        assert!((d.ball_intersection_volume(&Point::x1(1.05), 0.1) - 0.05).abs() < 1e-15);
        assert!((d.ball_intersection_volume(&Point::x1(0.5), 0.1) - 0.2).abs() < 1e-15);
        assert_eq!(d.ball_intersection_volume(&Point::x1(3.0), 0.1), 0.0);
    }

    /// Midpoint-grid oracle for 2D intersection areas.
    fn area_oracle(dom: &Domain, c: &Point, r: f64) -> f64 {
        let m = 2000;
        let dx = 2.0 * r / m as f64;
        let mut area = 0.0;
        for i in 0..m {
            for j in 0..m {
                let p = Point::x2(
                    c.coord(0) - r + (i as f64 + 0.5) * dx,
                    c.coord(1) - r + (j as f64 + 0.5) * dx,
                );
                if p.dist(c) < r && dom.contains(&p) {
                    area += dx * dx;
                }
            }
        }
        area
    }

    #[test]
    fn rect_ball_volume_matches_quadrature() {
        let d = unit_square();
        // fully inside: exact pi r^2
        let v = d.ball_intersection_volume(&Point::x2(0.5, 0.5), 0.1);
        assert!((v - std::f64::consts::PI * 0.01).abs() < 1e-14);
        // straddling an edge and a corner
        for (c, r) in [
            (Point::x2(1.02, 0.5), 0.1),
            (Point::x2(0.98, 0.98), 0.15),
            (Point::x2(-0.05, -0.05), 0.2),
            (Point::x2(0.5, 0.5), 0.8),
        ] {
            let exact = d.ball_intersection_volume(&c, r);
            let approx = area_oracle(&d, &c, r);
            assert!(
                (exact - approx).abs() < 5e-4 * r.max(0.2),
                "c={c:?} r={r}: exact {exact} vs oracle {approx}"
            );
        }
    }

    #[test]
    fn disk_ball_volume_matches_quadrature() {
        let d = unit_disk();
        for (c, r) in [
            (Point::x2(1.05, 0.0), 0.2),
            (Point::x2(0.0, 0.0), 0.5),
            (Point::x2(0.9, 0.1), 0.3),
        ] {
            let exact = d.ball_intersection_volume(&c, r);
            let approx = area_oracle(&d, &c, r);
            assert!(
                (exact - approx).abs() < 5e-4,
                "c={c:?} r={r}: exact {exact} vs oracle {approx}"
            );
        }
    }

    #[test]
    fn halfspace_cap_volume() {
        let hs = Domain::halfspace(Point::x2(0.0, 1.0)).unwrap();
        // a_0: unit ball centered on the hyperplane gives half the ball
        let v = hs.ball_intersection_volume(&Point::x2(0.0, 0.0), 1.0);
        assert!((v - std::f64::consts::PI / 2.0).abs() < 1e-12);
        let hs1 = Domain::halfspace(Point::x1(1.0)).unwrap();
        assert!((hs1.ball_intersection_volume(&Point::x1(0.0), 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_intersection_support_and_mean() {
        let d = unit_interval();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let y = d
                .sample_uniform_in_intersection(&Point::x1(0.5), 0.1, &mut rng)
                .unwrap();
            assert!(y.coord(0) > 0.4 && y.coord(0) < 0.6);
            let y = d
                .sample_uniform_in_intersection(&Point::x1(1.05), 0.1, &mut rng)
                .unwrap();
            assert!(y.coord(0) > 0.95 && y.coord(0) < 1.0);
        }
        // empirical mean of U(0.95, 1) at 1e6 samples: 0.975 +- 3 sigma / 1000
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += d
                .sample_uniform_in_intersection(&Point::x1(1.05), 0.1, &mut rng)
                .unwrap()
                .coord(0);
        }
        let mean = sum / n as f64;
        let sigma = 0.05 / 12.0_f64.sqrt();
        assert!((mean - 0.975).abs() < 3.0 * sigma / 1000.0);
    }

    #[test]
    fn uniform_intersection_chi_square_20_bins() {
        // 1e6 draws over Omega intersect B_r(z), 20 equal-width bins,
        // uniformity accepted at significance 1e-3.
        let d = unit_interval();
        let (lo, hi) = (0.95, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000usize;
        let mut counts = [0u64; 20];
        for _ in 0..n {
            let y = d
                .sample_uniform_in_intersection(&Point::x1(1.05), 0.1, &mut rng)
                .unwrap()
                .coord(0);
            let k = (((y - lo) / (hi - lo) * 20.0) as usize).min(19);
            counts[k] += 1;
        }
        let expect = n as f64 / 20.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expect).powi(2) / expect)
            .sum();
        let p = crate::stats::chi_square_pvalue(chi2, 19.0);
        assert!(p > 1e-3, "chi2 = {chi2}, p = {p}");
    }

    #[test]
    fn rejection_cap_guards_degenerate_geometry() {
        let d = unit_interval();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // ball far away: empty intersection, sampler must fail
        let r = d.sample_uniform_in_intersection(&Point::x1(5.0), 0.1, &mut rng);
        assert!(matches!(r, Err(GeometryError::RejectionCapExceeded(_))));
    }

    #[test]
    fn ray_interval_exit_distances() {
        let d = unit_square();
        let (t0, t1) = d
            .ray_interval(&Point::x2(0.5, 0.5), &Point::x2(1.0, 0.0), 0.0)
            .unwrap();
        assert!(t0 == 0.0 && (t1 - 0.5).abs() < 1e-15);
        // from outside looking in
        let (t0, t1) = d
            .ray_interval(&Point::x2(1.5, 0.5), &Point::x2(-1.0, 0.0), 0.0)
            .unwrap();
        assert!((t0 - 0.5).abs() < 1e-15 && (t1 - 1.5).abs() < 1e-15);
        assert!(d
            .ray_interval(&Point::x2(1.5, 0.5), &Point::x2(1.0, 0.0), 0.0)
            .is_none());
    }

    proptest! {
        #[test]
        fn ball_volume_bounded_and_monotone(
            cx in -0.5f64..1.5, cy in -0.5f64..1.5, r in 0.01f64..1.0
        ) {
            let d = unit_square();
            let c = Point::x2(cx, cy);
            let v = d.ball_intersection_volume(&c, r);
            let ball = std::f64::consts::PI * r * r;
            prop_assert!(v >= -1e-12);
            prop_assert!(v <= ball.min(d.volume()) + 1e-10);
            let v2 = d.ball_intersection_volume(&c, r * 1.1);
            prop_assert!(v2 + 1e-12 >= v);
        }

        #[test]
        fn signed_distance_consistent_with_contains(
            x in -2.0f64..2.0, y in -2.0f64..2.0
        ) {
            for dom in [unit_square(), unit_disk()] {
                let p = Point::x2(x, y);
                let sd = dom.signed_distance(&p);
                if sd < -1e-12 {
                    prop_assert!(dom.contains(&p));
                }
                if sd > 1e-12 {
                    prop_assert!(!dom.contains(&p));
                }
            }
        }
    }
}
