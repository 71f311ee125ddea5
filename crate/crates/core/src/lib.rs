//! Numerical laboratory for perturbative conformal Willmore spheres in
//! perturbations of the round 3-sphere.
//!
//! The crate is organised bottom-up:
//!
//! * [`metric`] and [`curvature`]: metric families on S³ and their curvature.
//! * [`spectral`]: real spherical harmonics on a Gauss-Legendre grid.
//! * [`geodesic`] and [`surface`]: exponential map, Jacobi fields and normal
//!   graphs over geodesic spheres.
//! * [`willmore`]: the conformal Willmore energy, its gradient and the
//!   classical variation formulas.
//! * [`reduction`]: the auxiliary-equation solver, the reduced functional and
//!   its critical points.
//! * [`asymptotics`] and [`diagnostics`]: small-radius laws and the Einstein
//!   case analysis.

pub mod asymptotics;
pub mod curvature;
pub mod diagnostics;
pub mod dual;
mod error;
pub mod fit;
pub mod geodesic;
pub mod integrate;
pub mod metric;
pub mod nelder_mead;
pub mod quat;
pub mod reduction;
pub mod spectral;
pub mod surface;
pub mod tensor;
pub mod verify;
pub mod willmore;

pub use error::{Error, Result};
