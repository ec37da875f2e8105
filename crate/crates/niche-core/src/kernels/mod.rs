//! Exact transition densities of the mixed dispersal process and their
//! samplers.
//!
//! A step is a walk (uniform on the ball of radius `lambda h`) with
//! probability `1-p` or a heavy-tailed jump (power-law radius beyond `h`)
//! with probability `p`. A move that lands outside the niche re-enters
//! immediately under the same law, normalized to unit mass; the densities
//! here carry that reflection term explicitly, with every normalization
//! constant written out.

mod jump;
mod samplers;
mod two_d;
mod walk;

use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Domain, GeometryError, Point};
use crate::params::{unit_ball_volume, unit_sphere_surface, ProcessParams};
use crate::quad;

pub use samplers::sample_power_law_radius;

/// Rejection re-entry switches to the tabulated sampler below this mass.
const FALLBACK_MU: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("point {0:?} must lie inside the domain")]
    PointOutsideDomain(Point),
    #[error("point {0:?} must lie outside the domain")]
    PointInsideDomain(Point),
    #[error("re-entry weight vanishes: the domain is contained in the punched ball around {0:?}")]
    DegenerateReentry(Point),
    #[error("sampler stalled after {0} rejections")]
    SamplerStalled(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("kernels require a bounded domain")]
    UnboundedDomain,
}

/// Which of the whole-space measures to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiKind {
    Walk,
    Jump,
    Combined,
}

/// Transition-kernel evaluator bound to one `(params, domain)` pair.
///
/// Densities are pure and immutable after construction; the lazily built 2D
/// exterior quadrature tables are initialized once behind a `OnceLock`, so a
/// `Kernels` value can be shared freely across threads.
pub struct Kernels {
    params: ProcessParams,
    domain: Domain,
    coeffs: crate::params::EffectiveCoefficients,
    ext2d: OnceLock<two_d::Exterior2d>,
}

impl Kernels {
    pub fn new(params: ProcessParams, domain: Domain) -> Result<Self, KernelError> {
        if !domain.is_bounded() {
            return Err(KernelError::UnboundedDomain);
        }
        let coeffs = crate::params::EffectiveCoefficients::for_dim(&params, domain.dim());
        Ok(Self { params, domain, coeffs, ext2d: OnceLock::new() })
    }

    pub fn params(&self) -> &ProcessParams {
        &self.params
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn coefficients(&self) -> &crate::params::EffectiveCoefficients {
        &self.coeffs
    }

    /// Truncation radius for exterior integrals; the analytic tail beyond it
    /// is bounded by `tol` relative to the reflected mass.
    pub fn r_trunc(&self) -> f64 {
        let tol = self.quad_tol();
        let d = self.domain.diameter();
        (10.0 * d).max(tol.powf(-0.5 / self.params.s()) * d)
    }

    /// Internal quadrature target, tighter than the asserted tolerances.
    pub fn quad_tol(&self) -> f64 {
        match self.domain.dim() {
            1 => 1e-8,
            _ => 1e-6,
        }
    }

    fn require_inside(&self, x: &Point) -> Result<(), KernelError> {
        if self.domain.contains(x) {
            Ok(())
        } else {
            Err(KernelError::PointOutsideDomain(*x))
        }
    }

    fn ext2d(&self) -> &two_d::Exterior2d {
        self.ext2d
            .get_or_init(|| two_d::Exterior2d::build(&self.domain, &self.params, self.r_trunc()))
    }

    /// Total walk transition density `P_W(x -> y)`, direct plus reflected.
    pub fn walk_density(&self, x: &Point, y: &Point) -> Result<f64, KernelError> {
        self.require_inside(x)?;
        self.require_inside(y)?;
        let r = self.params.walk_radius();
        Ok(match &self.domain {
            Domain::Interval { a, b } => walk::walk_density_1d(*a, *b, r, x.coord(0), y.coord(0)),
            _ => walk::walk_density_2d(&self.domain, r, x, y),
        })
    }

    /// Re-entry weight `mu_h(z)`: the jump-kernel mass from the exterior
    /// point `z` into `Omega` minus the punched ball. Returns 0 in the
    /// degenerate case where the domain is swallowed by the punch.
    pub fn jump_reentry_weight(&self, z: &Point) -> Result<f64, KernelError> {
        if self.domain.contains(z) {
            return Err(KernelError::PointInsideDomain(*z));
        }
        Ok(match &self.domain {
            Domain::Interval { a, b } => {
                jump::mu_1d(*a, *b, self.params.h(), self.params.s(), z.coord(0))
            }
            _ => jump::mu_2d(&self.domain, self.params.h(), self.params.s(), z),
        })
    }

    /// Total jump transition density `P_J(x -> y)`, direct plus reflected.
    pub fn jump_density(&self, x: &Point, y: &Point) -> Result<f64, KernelError> {
        self.require_inside(x)?;
        self.require_inside(y)?;
        let direct = self.jump_direct_term(x, y);
        let reflected = match &self.domain {
            Domain::Interval { a, b } => jump::jump_reflected_1d(
                *a,
                *b,
                &self.params,
                x.coord(0),
                y.coord(0),
                self.r_trunc(),
            ),
            _ => self.ext2d().jump_reflected(&self.domain, &self.params, x, y),
        };
        Ok(direct + reflected)
    }

    /// Direct jump term `2s h^{2s} chi(|x-y| > h) / (surf(dB_1) |x-y|^{n+2s})`.
    pub fn jump_direct_term(&self, x: &Point, y: &Point) -> f64 {
        let n = self.domain.dim();
        let d = x.dist(y);
        let (s, h) = (self.params.s(), self.params.h());
        if d <= h {
            return 0.0;
        }
        2.0 * s * h.powf(2.0 * s) / (unit_sphere_surface(n) * d.powf(n as f64 + 2.0 * s))
    }

    /// Mixture density `p P_J + (1-p) P_W`.
    pub fn combined_density(&self, x: &Point, y: &Point) -> Result<f64, KernelError> {
        let p = self.params.p();
        let jump = if p > 0.0 { self.jump_density(x, y)? } else { 0.0 };
        let walk = if p < 1.0 { self.walk_density(x, y)? } else { 0.0 };
        Ok(p * jump + (1.0 - p) * walk)
    }

    /// Quadrature of `int_Omega P_W(x -> y) dy` (the mass that a walk from
    /// `x` deposits back into the niche; identically 1 in exact arithmetic).
    pub fn walk_normalization(&self, x: &Point) -> Result<f64, KernelError> {
        self.require_inside(x)?;
        let r = self.params.walk_radius();
        match &self.domain {
            Domain::Interval { a, b } => {
                let (a, b, xc) = (*a, *b, x.coord(0));
                let splits = [xc, xc - r, xc + r, a + r, b - r, xc - 2.0 * r, xc + 2.0 * r];
                let f = |y: f64| walk::walk_density_1d(a, b, r, xc, y);
                Ok(quad::adaptive_split(&f, a, b, &splits, 1e-10))
            }
            _ => Ok(walk::walk_normalization_2d(&self.domain, r, x)),
        }
    }

    /// Quadrature of `int_Omega P_J(x -> y) dy` (identically 1).
    pub fn jump_normalization(&self, x: &Point) -> Result<f64, KernelError> {
        self.require_inside(x)?;
        match &self.domain {
            Domain::Interval { a, b } => {
                let (a, b, xc) = (*a, *b, x.coord(0));
                let h = self.params.h();
                let rt = self.r_trunc();
                let params = self.params;
                let splits = [xc - h, xc + h, xc, a + h, b - h];
                let f = |y: f64| {
                    let d = (xc - y).abs();
                    let direct = if d > h {
                        2.0 * params.s() * params.h().powf(2.0 * params.s())
                            / (2.0 * d.powf(1.0 + 2.0 * params.s()))
                    } else {
                        0.0
                    };
                    direct + jump::jump_reflected_1d(a, b, &params, xc, y, rt)
                };
                Ok(quad::adaptive_split(&f, a, b, &splits, 1e-9))
            }
            _ => Ok(self.ext2d().jump_normalization(&self.domain, &self.params, x)),
        }
    }

    /// Applies the adjoint transition operator to the constant density
    /// `1/vol(Omega)` at `x`, i.e. `int_Omega P(y -> x) / vol dy`. Uniform
    /// data is invariant because the kernel is symmetric and normalized.
    pub fn apply_to_uniform(&self, x: &Point) -> Result<f64, KernelError> {
        self.require_inside(x)?;
        let vol = self.domain.volume();
        match &self.domain {
            Domain::Interval { a, b } => {
                let (a, b, xc) = (*a, *b, x.coord(0));
                let r = self.params.walk_radius();
                let h = self.params.h();
                let splits = [xc, xc - r, xc + r, xc - h, xc + h, a + r, b - r, b - h, a + h];
                let f = |y: f64| {
                    self.combined_density(&Point::x1(y), x).unwrap_or(0.0) / vol
                };
                Ok(quad::adaptive_split(&f, a, b, &splits, 1e-9))
            }
            _ => {
                // 2D: the y-integral of P(y -> x) splits the same way as the
                // normalization; reuse it through symmetry of each term.
                let w = self.walk_normalization(x)?;
                let j = if self.params.p() > 0.0 { self.jump_normalization(x)? } else { 1.0 };
                Ok((self.params.p() * j + (1.0 - self.params.p()) * w) / vol)
            }
        }
    }

    /// One walk move from `x`: uniform proposal on the ball, immediate
    /// uniform re-entry through the egress point if the proposal leaves.
    pub fn sample_walk_step<R: Rng + ?Sized>(
        &self,
        x: &Point,
        rng: &mut R,
    ) -> Result<Point, KernelError> {
        samplers::walk_step(&self.domain, &self.params, x, rng)
    }

    /// One jump move from `x`: power-law proposal, re-entry from the egress
    /// point under the restricted jump law.
    pub fn sample_jump_step<R: Rng + ?Sized>(
        &self,
        x: &Point,
        rng: &mut R,
    ) -> Result<Point, KernelError> {
        samplers::jump_step(self, x, rng)
    }

    /// Deterministic direct-jump arithmetic `x + rho * theta` (the branch the
    /// sampler takes before any egress handling).
    pub fn jump_proposal(&self, x: &Point, rho: f64, theta: &Point) -> Point {
        x.add_scaled(theta, rho)
    }

    pub(crate) fn mu_for_sampling(&self, z: &Point) -> f64 {
        match &self.domain {
            Domain::Interval { a, b } => {
                jump::mu_1d(*a, *b, self.params.h(), self.params.s(), z.coord(0))
            }
            _ => self.ext2d().mu_interp(&self.domain, &self.params, z),
        }
    }
}

/// Whole-space measure densities `d pi_W`, `d pi_J` and their `p`-mixture,
/// defined on all of `R^n x R^n` (no domain, no reflection).
pub fn pi_measure_density(params: &ProcessParams, x: &Point, y: &Point, kind: PiKind) -> f64 {
    let n = x.dim();
    debug_assert_eq!(n, y.dim());
    let d = x.dist(y);
    let walk = |d: f64| {
        let r = params.walk_radius();
        if d < r {
            1.0 / (unit_ball_volume(n) * r.powi(n as i32))
        } else {
            0.0
        }
    };
    let jump = |d: f64| {
        let (s, h) = (params.s(), params.h());
        if d > h {
            2.0 * s * h.powf(2.0 * s) / (unit_sphere_surface(n) * d.powf(n as f64 + 2.0 * s))
        } else {
            0.0
        }
    };
    match kind {
        PiKind::Walk => walk(d),
        PiKind::Jump => jump(d),
        PiKind::Combined => params.p() * jump(d) + (1.0 - params.p()) * walk(d),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(s: f64, p: f64, h: f64) -> ProcessParams {
        ProcessParams::new(s, p, h).unwrap()
    }

    fn interval01() -> Domain {
        Domain::interval(0.0, 1.0).unwrap()
    }

    #[test]
    fn walk_density_interior_is_uniform_on_ball() {
        // lambda h = 0.1 via s = 0.5, h = 0.01
        let k = Kernels::new(params(0.5, 0.5, 0.01), interval01()).unwrap();
        let v = k.walk_density(&Point::x1(0.5), &Point::x1(0.55)).unwrap();
        assert!((v - 5.0).abs() < 1e-12, "{v}");
        let far = k.walk_density(&Point::x1(0.5), &Point::x1(0.8)).unwrap();
        assert_eq!(far, 0.0);
    }

    #[test]
    fn walk_density_rejects_outside_points() {
        let k = Kernels::new(params(0.5, 0.5, 0.01), interval01()).unwrap();
        assert!(matches!(
            k.walk_density(&Point::x1(1.5), &Point::x1(0.5)),
            Err(KernelError::PointOutsideDomain(_))
        ));
    }

    #[test]
    fn walk_normalization_near_boundary() {
        let k = Kernels::new(params(0.5, 0.5, 0.01), interval01()).unwrap();
        for x in [0.95, 0.5, 0.05, 0.999] {
            let m = k.walk_normalization(&Point::x1(x)).unwrap();
            assert!((m - 1.0).abs() < 1e-8, "x={x}: {m}");
        }
    }

    #[test]
    fn jump_reentry_weight_closed_form() {
        let k = Kernels::new(params(0.5, 0.5, 0.01), interval01()).unwrap();
        let mu = k.jump_reentry_weight(&Point::x1(1.05)).unwrap();
        let expected = 0.01 * (1.0 / 0.05 - 1.0 / 1.05);
        assert!((mu - expected).abs() < 1e-14, "{mu} vs {expected}");
        // decay at infinity and the unit bound
        assert!(k.jump_reentry_weight(&Point::x1(1e9)).unwrap() < 1e-12);
        for z in [1.0005, 1.003, 1.2, 2.5, -0.3] {
            let mu = k.jump_reentry_weight(&Point::x1(z)).unwrap();
            assert!(mu > 0.0 && mu <= 1.0, "mu({z}) = {mu}");
        }
    }

    #[test]
    fn jump_direct_term_value() {
        let k = Kernels::new(params(0.5, 0.5, 0.01), interval01()).unwrap();
        let v = k.jump_direct_term(&Point::x1(0.3), &Point::x1(0.2));
        assert!((v - 0.5).abs() < 1e-14, "{v}");
        assert_eq!(k.jump_direct_term(&Point::x1(0.5), &Point::x1(0.505)), 0.0);
    }

    #[test]
    fn jump_normalization_near_and_far() {
        let k = Kernels::new(params(0.5, 0.5, 0.01), interval01()).unwrap();
        for x in [0.5, 0.95, 0.02] {
            let m = k.jump_normalization(&Point::x1(x)).unwrap();
            assert!((m - 1.0).abs() < 1e-6, "x={x}: {m}");
        }
    }

    #[test]
    fn jump_normalization_s_sweep() {
        for s in [0.25, 0.5, 0.75] {
            let k = Kernels::new(params(s, 0.5, 0.01), interval01()).unwrap();
            let m = k.jump_normalization(&Point::x1(0.7)).unwrap();
            assert!((m - 1.0).abs() < 1e-6, "s={s}: {m}");
        }
    }

    #[test]
    fn combined_density_degenerate_mixtures() {
        let x = Point::x1(0.62);
        let y = Point::x1(0.55);
        let kw = Kernels::new(params(0.5, 0.0, 0.01), interval01()).unwrap();
        assert_eq!(
            kw.combined_density(&x, &y).unwrap(),
            kw.walk_density(&x, &y).unwrap()
        );
        let kj = Kernels::new(params(0.5, 1.0, 0.01), interval01()).unwrap();
        assert_eq!(
            kj.combined_density(&x, &y).unwrap(),
            kj.jump_density(&x, &y).unwrap()
        );
    }

    #[test]
    fn combined_normalization_mixture() {
        let k = Kernels::new(params(0.5, 0.3, 0.01), interval01()).unwrap();
        let x = Point::x1(0.9);
        let w = k.walk_normalization(&x).unwrap();
        let j = k.jump_normalization(&x).unwrap();
        let total = 0.3 * j + 0.7 * w;
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn symmetry_1d_exact() {
        let k = Kernels::new(params(0.5, 0.5, 0.01), interval01()).unwrap();
        let mut rng_state = 88172645463325252u64;
        let mut next = move || {
            // xorshift, plenty for test point generation
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let x = Point::x1(next());
            let y = Point::x1(next());
            if !k.domain.contains(&x) || !k.domain.contains(&y) {
                continue;
            }
            let wf = k.walk_density(&x, &y).unwrap();
            let wb = k.walk_density(&y, &x).unwrap();
            assert!((wf - wb).abs() <= 1e-10 * wf.abs().max(1.0));
            let jf = k.jump_density(&x, &y).unwrap();
            let jb = k.jump_density(&y, &x).unwrap();
            assert!((jf - jb).abs() <= 1e-10 * jf.abs().max(1.0));
        }
    }

    #[test]
    fn uniform_density_is_invariant() {
        let k = Kernels::new(params(0.5, 0.4, 0.01), interval01()).unwrap();
        for x in [0.5, 0.97, 0.1] {
            let v = k.apply_to_uniform(&Point::x1(x)).unwrap();
            assert!((v - 1.0).abs() < 1e-5, "x={x}: {v}");
        }
    }

    #[test]
    fn pi_measures_pointwise() {
        let p = params(0.5, 0.3, 0.01);
        // walk: indicator boundary is half-open
        let r = p.walk_radius();
        let x = Point::x1(0.0);
        assert_eq!(pi_measure_density(&p, &x, &Point::x1(r), PiKind::Walk), 0.0);
        assert!(
            (pi_measure_density(&p, &x, &Point::x1(0.5 * r), PiKind::Walk) - 1.0 / (2.0 * r))
                .abs()
                < 1e-12
        );
        // jump at |x-y| = 0.1: 0.01 / (2 * 0.01) = 0.5
        let v = pi_measure_density(&p, &x, &Point::x1(0.1), PiKind::Jump);
        assert!((v - 0.5).abs() < 1e-14);
        let c = pi_measure_density(&p, &x, &Point::x1(0.1), PiKind::Combined);
        assert!((c - 0.3 * v).abs() < 1e-14);
    }

    #[test]
    fn disjoint_supports() {
        let p = params(0.5, 0.5, 0.01);
        let k = Kernels::new(p, interval01()).unwrap();
        let r = p.walk_radius();
        // walk vanishes beyond 2 lambda h
        let v = k
            .walk_density(&Point::x1(0.4), &Point::x1(0.4 + 2.0 * r + 1e-6))
            .unwrap();
        assert_eq!(v, 0.0);
        // direct jump vanishes within h
        assert_eq!(k.jump_direct_term(&Point::x1(0.4), &Point::x1(0.4 + 0.009)), 0.0);
    }
}
