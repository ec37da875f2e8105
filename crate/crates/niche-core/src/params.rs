//! Process parameters and derived diffusivities.
//!
//! The discrete process is governed by a fractional exponent `s`, a jump
//! probability `p` and a space step `h`. Everything else is derived from the
//! coupling `tau = h^{2s}`, `lambda = h^{s-1}`, so the walk radius
//! `lambda*h = h^s` equals `sqrt(tau)` and both sub-processes share one
//! diffusive clock.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("fractional exponent s must lie in (0,1), got {0}")]
    ExponentOutOfRange(f64),
    #[error("jump probability p must lie in [0,1], got {0}")]
    ProbabilityOutOfRange(f64),
    #[error("space step h must lie in (0,1), got {0}")]
    SpaceStepOutOfRange(f64),
}

/// Parameters of the mixed walk/jump process.
///
/// Constructed through [`ProcessParams::new`] which validates the ranges;
/// the derived quantities are recomputed on demand (they are cheap and this
/// keeps the struct trivially serializable).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProcessParams {
    s: f64,
    p: f64,
    h: f64,
}

impl<'de> Deserialize<'de> for ProcessParams {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            s: f64,
            p: f64,
            h: f64,
        }
        let raw = Raw::deserialize(de)?;
        ProcessParams::new(raw.s, raw.p, raw.h).map_err(serde::de::Error::custom)
    }
}

impl ProcessParams {
    pub fn new(s: f64, p: f64, h: f64) -> Result<Self, ParamError> {
        if !(s > 0.0 && s < 1.0) {
            return Err(ParamError::ExponentOutOfRange(s));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(ParamError::ProbabilityOutOfRange(p));
        }
        if !(h > 0.0 && h < 1.0) {
            return Err(ParamError::SpaceStepOutOfRange(h));
        }
        Ok(Self { s, p, h })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Time step `tau = h^{2s}`.
    pub fn tau(&self) -> f64 {
        self.h.powf(2.0 * self.s)
    }

    /// Scale factor `lambda = h^{s-1}`.
    pub fn lambda(&self) -> f64 {
        self.h.powf(self.s - 1.0)
    }

    /// Walk radius `lambda * h = h^s`.
    pub fn walk_radius(&self) -> f64 {
        self.h.powf(self.s)
    }

    /// `lambda = h^{s-1}` is an integer only for special `(s, h)` pairs; the
    /// process is well defined either way, but the CLI flags the non-integer
    /// case in verbose output.
    pub fn lambda_is_integer(&self) -> bool {
        let l = self.lambda();
        (l - l.round()).abs() <= 1e-9 * l.max(1.0)
    }
}

/// Lebesgue measure of the unit ball in `R^n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI / 3.0,
        _ => {
            let nf = n as f64;
            std::f64::consts::PI.powf(nf / 2.0) / statrs::function::gamma::gamma(nf / 2.0 + 1.0)
        }
    }
}

/// Surface measure of the unit sphere in `R^n` (two points for n = 1).
pub fn unit_sphere_surface(n: usize) -> f64 {
    n as f64 * unit_ball_volume(n)
}

/// Second moment of the unit ball, `c_o = integral over B_1 of |w|^2 dw`.
///
/// Equal to `n * vol(B_1) / (n + 2)` by the radial decomposition.
pub fn second_moment_unit_ball(n: usize) -> f64 {
    n as f64 * unit_ball_volume(n) / (n as f64 + 2.0)
}

/// Diffusivities of the limiting equation `du/dt = alpha * Lap u - beta * (-Lap)^s u`,
/// with every normalization constant written out so particle runs and PDE
/// solves describe the same process without fitted constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveCoefficients {
    /// Local diffusivity `(1-p) * c_o / (2 n vol(B_1))`.
    pub alpha: f64,
    /// Nonlocal diffusivity `2 s p / surf(dB_1)` for the unnormalized kernel.
    pub beta: f64,
    /// Second moment `c_o` of the unit ball.
    pub c_o: f64,
}

impl EffectiveCoefficients {
    pub fn for_dim(params: &ProcessParams, n: usize) -> Self {
        let c_o = second_moment_unit_ball(n);
        let alpha = (1.0 - params.p()) * c_o / (2.0 * n as f64 * unit_ball_volume(n));
        let beta = 2.0 * params.s() * params.p() / unit_sphere_surface(n);
        Self { alpha, beta, c_o }
    }
}
