//! Approximate invisibility cloaking for the time-harmonic Maxwell equations.
//!
//! The crate builds the blow-up-a-small-region transformation medium with a
//! thin conducting layer, and verifies numerically that the boundary
//! admittance map of the cloaked configuration approaches the free-space map
//! at cubic rate in the regularization parameter, uniformly in the cloaked
//! content. Two independent solver routes are provided:
//!
//! * [`mie`]: a semi-analytic layered-sphere solver built on vector spherical
//!   harmonics and spherical Bessel functions, used as the oracle;
//! * [`bie`] and [`scattering`]: Nystrom-discretized boundary layer potentials
//!   realizing the exterior radiating problem, the bounded annulus problem and
//!   their small-obstacle scaling structure.
//!
//! [`admittance`] supplies the discrete trace-space norms and energy checks,
//! [`media`] the material tensors, and [`sweeps`] the parameter sweeps and
//! slope fits used by the verification harness.

pub mod admittance;
pub mod bie;
pub mod config;
pub mod error;
pub mod geometry;
pub mod media;
pub mod mie;
pub mod scattering;
pub mod sweeps;
pub mod trace;

pub use error::{Error, Result};

/// Real 3-vector in double precision.
pub type Vec3 = nalgebra::Vector3<f64>;
/// Complex 3-vector (pairs of doubles per component).
pub type CVec3 = nalgebra::Vector3<num_complex::Complex64>;
/// Real symmetric 3x3 material tensor entries live in [`media::SymTensor3`].
pub type Mat3 = nalgebra::Matrix3<f64>;

pub fn cvec3_from_real(v: Vec3) -> CVec3 {
    CVec3::new(v.x.into(), v.y.into(), v.z.into())
}

/// Complex cross product a x b.
pub fn ccross(a: &CVec3, b: &CVec3) -> CVec3 {
    CVec3::new(
        a.y * b.z - a.z * b.y,
        a.z * b.x - a.x * b.z,
        a.x * b.y - a.y * b.x,
    )
}

/// Cross product of a real vector with a complex vector.
pub fn rcross(a: &Vec3, b: &CVec3) -> CVec3 {
    CVec3::new(
        b.z * a.y - b.y * a.z,
        b.x * a.z - b.z * a.x,
        b.y * a.x - b.x * a.y,
    )
}

/// Unconjugated dot product of complex 3-vectors.
pub fn cdot(a: &CVec3, b: &CVec3) -> num_complex::Complex64 {
    a.x * b.x + a.y * b.y + a.z * b.z
}
