//! Numerical laboratory for mixed Brownian/Levy dispersal in a bounded
//! niche with immediate return.
//!
//! The crate has two descriptions of the same process and the tools to
//! cross-check them:
//!
//! - [`kernels`]: the exact one-step transition densities (walk, jump and
//!   their mixture) with the reflection through the exterior written out,
//!   plus samplers whose law matches the densities exactly.
//! - [`particle`]: ensembles of independent walkers, reproducible across
//!   any worker count, and the density-level phantom iteration defined on
//!   the whole plane.
//! - [`pde`]: the limiting mixed local/nonlocal heat equation with the
//!   classical Neumann condition on the boundary and the nonlocal Neumann
//!   condition (kernel-weighted extension) in the exterior.
//! - [`validate`]: every identity the construction rests on, evaluated by
//!   quadrature and reported with tolerances.

pub mod geometry;
pub mod grid;
pub mod io;
pub mod kernels;
pub mod params;
pub mod particle;
pub mod pde;
pub mod quad;
pub mod stats;
pub mod validate;

pub use geometry::{Domain, Point};
pub use kernels::{Kernels, PiKind};
pub use params::{EffectiveCoefficients, ProcessParams};
