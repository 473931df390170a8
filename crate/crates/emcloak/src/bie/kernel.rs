//! Helmholtz kernel, its derivatives and the small-obstacle splitting.
//!
//! G(x, y) = e^{i omega |x-y|} / (4 pi |x-y|); omega = 0 gives the static
//! kernel G0. Under the change of variables x = tau x', y = tau y' the scaled
//! kernel tau G(tau x', tau y') splits into G0(x', y') + i tau omega / (4 pi)
//! plus a remainder of size O(tau^2 |x' - y'|), which is what makes the
//! small-obstacle operators quadratically close to their static limits.

use crate::error::{Error, Result};
use crate::{CVec3, Vec3};
use nalgebra::Matrix3;
use num_complex::Complex64;
use std::f64::consts::PI;

pub type CMat3 = Matrix3<Complex64>;

const MIN_SEPARATION: f64 = 1e-14;

/// Kernel value and x-gradient at a point pair.
#[derive(Debug, Clone, Copy)]
pub struct KernelEval {
    pub value: Complex64,
    pub grad_x: CVec3,
}

/// G(x, y) and grad_x G(x, y) for wavenumber omega >= 0.
pub fn helmholtz_kernel(x: Vec3, y: Vec3, omega: f64) -> Result<KernelEval> {
    let d = x - y;
    let r = d.norm();
    if r < MIN_SEPARATION {
        return Err(Error::Numeric(format!(
            "kernel evaluation at coincident points (|x-y| = {r:.3e})"
        )));
    }
    let g = Complex64::new(0.0, omega * r).exp() / Complex64::from(4.0 * PI * r);
    // dG/dr = G (i omega - 1/r).
    let dgdr = g * Complex64::new(-1.0 / r, omega);
    let grad = crate::cvec3_from_real(d / r) * dgdr;
    Ok(KernelEval { value: g, grad_x: grad })
}

/// Hessian of G in x; used for curl-curl evaluations off the surface.
pub fn helmholtz_hessian(x: Vec3, y: Vec3, omega: f64) -> Result<CMat3> {
    let d = x - y;
    let r = d.norm();
    if r < MIN_SEPARATION {
        return Err(Error::Numeric("Hessian at coincident points".into()));
    }
    let g = Complex64::new(0.0, omega * r).exp() / Complex64::from(4.0 * PI * r);
    let a = Complex64::new(-1.0 / r, omega);
    let dgdr = g * a;
    let d2gdr2 = g * (a * a) + g / Complex64::from(r * r);
    let rr = d / r;
    let mut h = CMat3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let delta = if i == j { 1.0 } else { 0.0 };
            h[(i, j)] = (d2gdr2 - dgdr / Complex64::from(r)) * Complex64::from(rr[i] * rr[j])
                + dgdr / Complex64::from(r) * Complex64::from(delta);
        }
    }
    Ok(h)
}

/// The three addends of the scaled-kernel splitting at reference points
/// x', y'. The parts sum to tau G(tau x', tau y'); the remainder carries its
/// tau^2 factor.
#[derive(Debug, Clone, Copy)]
pub struct KernelSplit {
    pub static_part: Complex64,
    pub constant_part: Complex64,
    pub remainder: Complex64,
}

impl KernelSplit {
    pub fn total(&self) -> Complex64 {
        self.static_part + self.constant_part + self.remainder
    }

    /// The remainder with its tau^2 scaling divided out.
    pub fn remainder_density(&self, tau: f64) -> Complex64 {
        self.remainder / Complex64::from(tau * tau)
    }
}

/// Split tau G(tau x', tau y') into static, constant and remainder parts.
pub fn kernel_split(xp: Vec3, yp: Vec3, tau: f64, omega: f64) -> Result<KernelSplit> {
    let r = (xp - yp).norm();
    if r < MIN_SEPARATION {
        return Err(Error::Numeric("kernel split at coincident points".into()));
    }
    let theta = tau * omega * r;
    // e^{i theta} - 1 - i theta, stable for small theta.
    let rem_num = if theta.abs() < 1e-3 {
        let it = Complex64::new(0.0, theta);
        let mut term = it * it / 2.0;
        let mut acc = term;
        for k in 3..9 {
            term *= it / Complex64::from(k as f64);
            acc += term;
        }
        acc
    } else {
        Complex64::new(0.0, theta).exp() - Complex64::ONE - Complex64::new(0.0, theta)
    };
    Ok(KernelSplit {
        static_part: Complex64::from(1.0 / (4.0 * PI * r)),
        constant_part: Complex64::new(0.0, tau * omega / (4.0 * PI)),
        remainder: rem_num / Complex64::from(4.0 * PI * r),
    })
}
