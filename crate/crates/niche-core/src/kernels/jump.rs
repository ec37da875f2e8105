//! Jump re-entry weight `mu_h` and the reflected jump term.
//!
//! `mu_h(z) = 2 s h^{2s} int over (Omega minus B_h(z)) of |y-z|^{-n-2s} dy`
//! normalizes the return law from an exterior point `z`; the reflected jump
//! density integrates the product of egress and return kernels over the
//! exterior, weighted by `1/mu_h`.

use crate::geometry::{Domain, Point};
use crate::params::ProcessParams;
use crate::quad;

/// Closed-form `mu_h(z)` for the interval `(a, b)`; zero in the degenerate
/// case where the punched ball swallows the whole domain.
pub fn mu_1d(a: f64, b: f64, h: f64, s: f64, z: f64) -> f64 {
    let h2s = h.powf(2.0 * s);
    if z >= b {
        let c = b.min(z - h);
        if c <= a {
            return 0.0;
        }
        h2s * ((z - c).powf(-2.0 * s) - (z - a).powf(-2.0 * s))
    } else if z <= a {
        let c = a.max(z + h);
        if c >= b {
            return 0.0;
        }
        h2s * ((c - z).powf(-2.0 * s) - (b - z).powf(-2.0 * s))
    } else {
        panic!("mu_1d called with z inside the domain");
    }
}

/// `mu_h(z)` for a 2D domain by polar integration around `z`: the radial
/// part has a closed antiderivative per ray, the angular part is adaptive
/// with splits at the silhouette directions.
pub fn mu_2d(domain: &Domain, h: f64, s: f64, z: &Point) -> f64 {
    let two_s = 2.0 * s;
    let f = |theta: f64| {
        let dir = Point::x2(theta.cos(), theta.sin());
        match domain.ray_interval(z, &dir, 0.0) {
            Some((t_in, t_out)) => {
                let t0 = t_in.max(h);
                if t_out <= t0 {
                    0.0
                } else {
                    t0.powf(-two_s) - t_out.powf(-two_s)
                }
            }
            None => 0.0,
        }
    };
    let splits = silhouette_angles(domain, z);
    let integral = quad::adaptive_split(&f, 0.0, 2.0 * std::f64::consts::PI, &splits, 1e-12);
    h.powf(two_s) * integral
}

/// Angles (from `z`) at which rays graze the domain; quadrature split points.
pub fn silhouette_angles(domain: &Domain, z: &Point) -> Vec<f64> {
    let mut angles = Vec::new();
    let mut push = |p: Point| {
        let a = (p.coord(1) - z.coord(1)).atan2(p.coord(0) - z.coord(0));
        let a = if a < 0.0 { a + 2.0 * std::f64::consts::PI } else { a };
        angles.push(a);
    };
    match domain {
        Domain::Rectangle { lo, hi } => {
            push(Point::x2(lo.coord(0), lo.coord(1)));
            push(Point::x2(hi.coord(0), lo.coord(1)));
            push(Point::x2(hi.coord(0), hi.coord(1)));
            push(Point::x2(lo.coord(0), hi.coord(1)));
        }
        Domain::Disk { center, radius } => {
            let d = z.dist(center);
            if d > *radius {
                let base = (center.coord(1) - z.coord(1)).atan2(center.coord(0) - z.coord(0));
                let half = (radius / d).asin();
                for a in [base - half, base + half, base] {
                    let a = a.rem_euclid(2.0 * std::f64::consts::PI);
                    angles.push(a);
                }
            }
        }
        _ => {}
    }
    angles
}

/// Reflected jump term on the interval by panel quadrature over both
/// exterior sides, truncated at `r_trunc` with the analytic tail appended.
pub fn jump_reflected_1d(
    a: f64,
    b: f64,
    params: &ProcessParams,
    x: f64,
    y: f64,
    r_trunc: f64,
) -> f64 {
    let (s, h) = (params.s(), params.h());
    let two_s = 2.0 * s;
    let h2s = h.powf(two_s);
    // surf(dB_1) = 2 in 1D
    let pref = (2.0 * s * h2s) * (2.0 * s * h2s) / 2.0;
    let vol = b - a;

    let side = |right: bool| -> f64 {
        let integrand = |z: f64| {
            let (dx, dy) = ((z - x).abs(), (z - y).abs());
            if dx <= h || dy <= h {
                return 0.0;
            }
            let mu = mu_1d(a, b, h, s, z);
            if mu <= 0.0 {
                return 0.0;
            }
            1.0 / (mu * dx.powf(1.0 + two_s) * dy.powf(1.0 + two_s))
        };
        let (from, to) = if right { (b, b + r_trunc) } else { (a - r_trunc, a) };
        // panels: fine near the boundary (mu kink at distance h, chi cuts at
        // x + h, y + h), geometric growth outward
        let mut edges = if right {
            quad::geometric_edges(b, b + r_trunc, h / 8.0, 1.35)
        } else {
            let e = quad::geometric_edges(0.0, r_trunc, h / 8.0, 1.35);
            let mut v: Vec<f64> = e.iter().map(|t| a - t).collect();
            v.reverse();
            v
        };
        for cut in [x + h, y + h, b + h, x - h, y - h, a - h] {
            if cut > from && cut < to {
                edges.push(cut);
            }
        }
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        quad::panel_integrate(&edges, 12, integrand)
    };

    let body = pref * (side(true) + side(false));
    // tail: mu_h(z) ~ 2 s h^{2s} vol / |z|^{1+2s}, integrand ~ s h^{2s} / (vol z^{1+2s})
    let tail = h2s * r_trunc.powf(-two_s) / vol;
    body + tail
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;

    #[test]
    fn mu_1d_matches_quadrature() {
        let (a, b, h, s) = (0.0, 1.0, 0.02, 0.7);
        for z in [1.01, 1.05, 1.5, 3.0, -0.4, -0.015] {
            let oracle = {
                let f = |y: f64| {
                    if (y - z).abs() > h {
                        2.0 * s * h.powf(2.0 * s) * (y - z).abs().powf(-1.0 - 2.0 * s)
                    } else {
                        0.0
                    }
                };
                quad::adaptive_split(&f, a, b, &[z - h, z + h], 1e-13)
            };
            let ours = mu_1d(a, b, h, s, z);
            assert!(
                (ours - oracle).abs() < 1e-10 * oracle.max(1e-6),
                "z={z}: {ours} vs {oracle}"
            );
        }
    }

    #[test]
    fn mu_1d_degenerate_when_domain_swallowed() {
        // tiny domain inside the punched ball
        let mu = mu_1d(0.0, 0.01, 0.5, 0.5, 0.02);
        assert_eq!(mu, 0.0);
    }

    #[test]
    fn mu_2d_matches_tensor_quadrature() {
        let domain =
            Domain::rectangle(Point::x2(0.0, 0.0), Point::x2(1.0, 0.5)).unwrap();
        let (h, s) = (0.05, 0.5);
        for z in [Point::x2(1.2, 0.25), Point::x2(0.5, 0.58), Point::x2(-0.3, -0.2)] {
            let ours = mu_2d(&domain, h, s, &z);
            // midpoint tensor oracle over Omega minus the punched ball
            let m = 1200;
            let (dx, dy) = (1.0 / m as f64, 0.5 / (m / 2) as f64);
            let mut acc = 0.0;
            for i in 0..m {
                for j in 0..m / 2 {
                    let y = Point::x2((i as f64 + 0.5) * dx, (j as f64 + 0.5) * dy);
                    let d = y.dist(&z);
                    if d > h {
                        acc += d.powf(-3.0) * dx * dy;
                    }
                }
            }
            let oracle = 2.0 * s * h.powf(2.0 * s) * acc;
            assert!(
                (ours - oracle).abs() < 2e-4 * oracle,
                "z={z:?}: {ours} vs {oracle}"
            );
        }
    }

    #[test]
    fn reflected_1d_matches_independent_quadrature() {
        let params = ProcessParams::new(0.5, 0.5, 0.01).unwrap();
        let (a, b) = (0.0, 1.0);
        let (x, y) = (0.95, 0.85);
        let ours = jump_reflected_1d(a, b, &params, x, y, 2e6);
        // oracle: adaptive quadrature of the same integrand on a huge range
        let (s, h) = (0.5, 0.01);
        let f = |z: f64| {
            let (dx, dy) = ((z - x).abs(), (z - y).abs());
            if dx <= h || dy <= h {
                return 0.0;
            }
            let mu = mu_1d(a, b, h, s, z);
            if mu <= 0.0 {
                return 0.0;
            }
            let pref = (2.0 * s * h.powf(2.0 * s)).powi(2) / 2.0;
            pref / (mu * dx.powf(2.0) * dy.powf(2.0))
        };
        let oracle = quad::adaptive_split(&f, b, b + 2000.0, &[b + h, x + h, y + h], 1e-14)
            + quad::adaptive_split(&f, a - 2000.0, a, &[a - h], 1e-14)
            + h.powf(2.0 * s) * 2000f64.powf(-2.0 * s); // tail beyond the oracle range
        assert!(
            (ours - oracle).abs() < 1e-6 * oracle,
            "{ours} vs {oracle}"
        );
    }
}
