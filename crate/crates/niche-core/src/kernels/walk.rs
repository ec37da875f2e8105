//! Walk transition density: uniform ball proposal plus uniform re-entry
//! through the egress point.
//!
//! The reflected part is
//! `int over exterior z of chi(|x-z|<r) chi(|y-z|<r) / (vol(B_r) vol(Omega cap B_r(z))) dz`,
//! which collapses to logarithms in 1D and is integrated over the exterior
//! collar charts in 2D.

use crate::geometry::{Domain, Point};
use crate::params::unit_ball_volume;
use crate::quad;

use super::two_d::collar_charts;

/// Closed-form `P_W(x -> y)` on the interval `(a, b)` with walk radius `r`.
pub fn walk_density_1d(a: f64, b: f64, r: f64, x: f64, y: f64) -> f64 {
    let vol_ball = 2.0 * r;
    let direct = if (x - y).abs() < r { 1.0 / vol_ball } else { 0.0 };
    let m = x.min(y);
    let big = x.max(y);

    // z beyond the right endpoint: z in (b, m + r)
    let mut reflected = 0.0;
    if m + r > b {
        // overlap length is b - a until z reaches a + r, then b + r - z
        let z_hi = m + r;
        let brk = (a + r).clamp(b, z_hi);
        if brk > b {
            reflected += (brk - b) / (vol_ball * (b - a));
        }
        if z_hi > brk {
            // int dz / (b + r - z) from brk to z_hi
            reflected += ((b + r - brk) / (b + r - z_hi)).ln() / vol_ball;
        }
    }
    // z before the left endpoint: z in (big - r, a), mirrored
    if big - r < a {
        let z_lo = big - r;
        let brk = (b - r).clamp(z_lo, a);
        if brk < a {
            reflected += (a - brk) / (vol_ball * (b - a));
        }
        if z_lo < brk {
            reflected += ((brk + r - a) / (z_lo + r - a)).ln() / vol_ball;
        }
    }
    direct + reflected
}

/// `P_W(x -> y)` on a 2D domain. The reflected term runs over the exterior
/// collar of depth `r`; panel layout depends only on the unordered pair
/// `{x, y}`, so swapping the arguments reproduces the identical sum.
pub fn walk_density_2d(domain: &Domain, r: f64, x: &Point, y: &Point) -> f64 {
    let vol_ball = unit_ball_volume(2) * r * r;
    let direct = if x.dist(y) < r { 1.0 / vol_ball } else { 0.0 };

    let dx = domain.interior_distance(x);
    let dy = domain.interior_distance(y);
    let depth_cap = r - dx.max(dy);
    if depth_cap <= 0.0 {
        return direct; // no exterior point is within r of both
    }

    let mut reflected = 0.0;
    for chart in collar_charts(domain) {
        let wx = match chart.ball_sigma_window(x, r) {
            Some(w) => w,
            None => continue,
        };
        let wy = match chart.ball_sigma_window(y, r) {
            Some(w) => w,
            None => continue,
        };
        let delta_edges = quad::geometric_edges(0.0, depth_cap, depth_cap / 48.0, 1.3);
        let rule = quad::GaussRule::order(8);
        for (s0, s1) in super::two_d::intersect_sigma_windows(&chart, wx, wy) {
            let n_sigma = 20;
            let ds = (s1 - s0) / n_sigma as f64;
            for i in 0..n_sigma {
                let (pa, pb) = (s0 + i as f64 * ds, s0 + (i as f64 + 1.0) * ds);
                reflected += rule.integrate(pa, pb, |sigma| {
                    let mut inner = 0.0;
                    for w in delta_edges.windows(2) {
                        inner += rule.integrate(w[0], w[1], |delta| {
                            let z = chart.point(sigma, delta);
                            if z.dist(x) >= r || z.dist(y) >= r {
                                return 0.0;
                            }
                            let vol = domain.ball_intersection_volume(&z, r);
                            if vol <= 0.0 {
                                return 0.0;
                            }
                            chart.jacobian(sigma, delta) / (vol_ball * vol)
                        });
                    }
                    inner
                });
            }
        }
    }
    direct + reflected
}

/// `int_Omega P_W(x -> y) dy` in 2D, reduced by integrating the inner
/// re-entry law first: the total equals
/// `[vol(Omega cap B_r(x)) + vol(B_r(x) minus Omega)] / vol(B_r)`,
/// with the exterior part integrated exactly in the depth coordinate of the
/// collar charts and adaptively along the boundary.
pub fn walk_normalization_2d(domain: &Domain, r: f64, x: &Point) -> f64 {
    let vol_ball = unit_ball_volume(2) * r * r;
    let inside = domain.ball_intersection_volume(x, r);
    let mut outside = 0.0;
    for chart in collar_charts(domain) {
        let (s0, s1) = match chart.ball_sigma_window(x, r) {
            Some(w) => w,
            None => continue,
        };
        let f = |sigma: f64| match chart.ball_delta_interval(sigma, x, r) {
            Some((d0, d1)) => chart.delta_mass(d0.max(0.0), d1.max(0.0)),
            None => 0.0,
        };
        outside += quad::adaptive_split(&f, s0, s1, &[], 1e-12 * vol_ball);
    }
    (inside + outside) / vol_ball
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;

    #[test]
    fn reflected_term_against_direct_quadrature() {
        // oracle: integrate the z-formula directly
        let (a, b, r) = (0.0, 1.0, 0.1);
        for (x, y) in [(0.97, 0.95), (0.99, 0.92), (0.05, 0.02), (0.5, 0.45)] {
            let oracle = {
                let f = |z: f64| {
                    if (z - x).abs() < r && (z - y).abs() < r {
                        let lo = (z - r).max(a);
                        let hi = (z + r).min(b);
                        1.0 / (2.0 * r * (hi - lo).max(1e-300))
                    } else {
                        0.0
                    }
                };
                quad::adaptive_split(&f, b, b + r, &[x + r, y + r], 1e-12)
                    + quad::adaptive_split(&f, a - r, a, &[x - r, y - r], 1e-12)
            };
            let direct = if (x - y).abs() < r { 1.0 / (2.0 * r) } else { 0.0 };
            let ours = walk_density_1d(a, b, r, x, y) - direct;
            assert!(
                (ours - oracle).abs() < 1e-8 * (1.0 + oracle),
                "x={x} y={y}: {ours} vs {oracle}"
            );
        }
    }

    #[test]
    fn wide_ball_regime() {
        // r wider than the domain: both sides reflect at once
        let (a, b, r) = (0.0, 0.3, 0.5);
        let f = |z: f64, x: f64, y: f64| {
            if (z - x).abs() < r && (z - y).abs() < r {
                let lo = (z - r).max(a);
                let hi = (z + r).min(b);
                1.0 / (2.0 * r * (hi - lo).max(1e-300))
            } else {
                0.0
            }
        };
        let (x, y) = (0.1, 0.25);
        let oracle = quad::adaptive_split(&|z| f(z, x, y), b, y.min(x) + r, &[a + r], 1e-13)
            + quad::adaptive_split(&|z| f(z, x, y), x.max(y) - r, a, &[b - r], 1e-13);
        let ours = walk_density_1d(a, b, r, x, y) - 1.0 / (2.0 * r);
        assert!((ours - oracle).abs() < 1e-9, "{ours} vs {oracle}");
    }

    #[test]
    fn normalization_integrates_to_one_1d() {
        let (a, b, r) = (0.0, 1.0, 0.1);
        for x in [0.5, 0.95, 0.999, 0.03] {
            let f = |y: f64| walk_density_1d(a, b, r, x, y);
            let m = quad::adaptive_split(&f, a, b, &[x - r, x + r, x, a + r, b - r], 1e-11);
            assert!((m - 1.0).abs() < 1e-8, "x={x}: {m}");
        }
    }
}
