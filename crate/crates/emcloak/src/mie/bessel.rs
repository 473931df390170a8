//! Spherical Bessel and Hankel functions of complex argument.
//!
//! The layered-sphere solver needs j_n, y_n and h_n^(1) together with the
//! Riccati derivatives [z f_n(z)]' for complex wavenumbers with Im z >= 0.
//! Regular solutions use Miller's downward recurrence below the transition
//! order and plain upward recurrence above it; y_n and h_n^(1) recurse upward,
//! which is stable because they dominate. See Abramowitz & Stegun 10.1.19ature
//! for the three-term recurrence.

use crate::error::{Error, Result};
use num_complex::Complex64;

/// Ladder of one spherical Bessel family evaluated at a fixed argument.
///
/// Stores f_0..f_{n_max} together with f_{-1}, which closes the Riccati
/// derivative formula [z f_n]' = z f_{n-1} - n f_n at n = 0.
#[derive(Debug, Clone)]
pub struct BesselLadder {
    z: Complex64,
    f_m1: Complex64,
    f: Vec<Complex64>,
}

impl BesselLadder {
    pub fn z(&self) -> Complex64 {
        self.z
    }

    /// f_n(z).
    pub fn value(&self, n: usize) -> Complex64 {
        self.f[n]
    }

    fn prev(&self, n: usize) -> Complex64 {
        if n == 0 {
            self.f_m1
        } else {
            self.f[n - 1]
        }
    }

    /// Riccati derivative [z f_n(z)]' = z f_{n-1}(z) - n f_n(z).
    pub fn riccati_deriv(&self, n: usize) -> Complex64 {
        self.z * self.prev(n) - (n as f64) * self.f[n]
    }

    /// Plain derivative f_n'(z) = f_{n-1}(z) - (n+1) f_n(z) / z.
    pub fn deriv(&self, n: usize) -> Complex64 {
        self.prev(n) - ((n + 1) as f64) * self.f[n] / self.z
    }

    fn check_finite(self, what: &str) -> Result<Self> {
        if self.f.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            Ok(self)
        } else {
            Err(Error::Numeric(format!(
                "{what} ladder overflowed at z = {} (order {})",
                self.z,
                self.f.len() - 1
            )))
        }
    }
}

/// Regular family j_0..j_{n_max} at complex z, Im z >= 0 assumed.
pub fn sph_j_ladder(n_max: usize, z: Complex64) -> Result<BesselLadder> {
    if z.norm() == 0.0 {
        let mut f = vec![Complex64::ZERO; n_max + 1];
        f[0] = Complex64::ONE;
        // f_{-1} = cos(z)/z diverges; the Riccati derivative [z j_0]' still
        // tends to cos(0) = 1, so park that limit in f_m1 * z form directly.
        return Ok(BesselLadder { z: Complex64::new(1e-300, 0.0), f_m1: Complex64::new(1e300, 0.0), f });
    }
    let (s, c) = (z.sin(), z.cos());
    let j0 = s / z;
    let j1 = s / (z * z) - c / z;
    let f_m1 = c / z;

    let f = if z.norm() > n_max as f64 + 2.0 {
        // Upward recurrence is stable above the transition order.
        let mut f = Vec::with_capacity(n_max + 1);
        f.push(j0);
        if n_max >= 1 {
            f.push(j1);
        }
        for n in 1..n_max {
            let next = (2 * n + 1) as f64 / z * f[n] - f[n - 1];
            f.push(next);
        }
        f
    } else {
        // Miller's downward recurrence, anchored on whichever of j_0, j_1 is
        // larger to dodge zeros of sin. Values are kept near unit scale so the
        // final complex division cannot underflow.
        let start = n_max + 16 + z.norm().ceil() as usize;
        let mut fp = Complex64::ZERO;
        let mut fc = Complex64::ONE;
        let mut f = vec![Complex64::ZERO; n_max + 1];
        for n in (0..start).rev() {
            let fm = (2 * n + 3) as f64 / z * fc - fp;
            fp = fc;
            fc = fm;
            if n <= n_max {
                f[n] = fc;
            }
            if fc.norm() > 1e100 {
                let s = 1e-100;
                fp *= s;
                fc *= s;
                for v in f.iter_mut() {
                    *v *= s;
                }
            }
        }
        let scale = if j0.norm() >= j1.norm() || n_max == 0 {
            j0 / f[0]
        } else {
            j1 / f[1]
        };
        for v in f.iter_mut() {
            *v *= scale;
        }
        f
    };
    BesselLadder { z, f_m1, f }.check_finite("spherical j")
}

/// Irregular family y_0..y_{n_max}; upward recurrence (dominant solution).
pub fn sph_y_ladder(n_max: usize, z: Complex64) -> Result<BesselLadder> {
    if z.norm() == 0.0 {
        return Err(Error::Numeric("y_n is singular at z = 0".into()));
    }
    let (s, c) = (z.sin(), z.cos());
    let y0 = -c / z;
    let y1 = -c / (z * z) - s / z;
    let f_m1 = s / z;
    let mut f = Vec::with_capacity(n_max + 1);
    f.push(y0);
    if n_max >= 1 {
        f.push(y1);
    }
    for n in 1..n_max {
        let next = (2 * n + 1) as f64 / z * f[n] - f[n - 1];
        f.push(next);
    }
    BesselLadder { z, f_m1, f }.check_finite("spherical y")
}

/// Outgoing family h^(1)_0..h^(1)_{n_max}; upward recurrence.
pub fn sph_h1_ladder(n_max: usize, z: Complex64) -> Result<BesselLadder> {
    if z.norm() == 0.0 {
        return Err(Error::Numeric("h_n is singular at z = 0".into()));
    }
    let i = Complex64::I;
    let e = (i * z).exp();
    let h0 = -i * e / z;
    let h1 = -e / z * (Complex64::ONE + i / z);
    let f_m1 = e / z;
    let mut f = Vec::with_capacity(n_max + 1);
    f.push(h0);
    if n_max >= 1 {
        f.push(h1);
    }
    for n in 1..n_max {
        let next = (2 * n + 1) as f64 / z * f[n] - f[n - 1];
        f.push(next);
    }
    BesselLadder { z, f_m1, f }.check_finite("spherical h1")
}

/// j_n(z) for a single order.
pub fn sph_j(n: usize, z: Complex64) -> Result<Complex64> {
    Ok(sph_j_ladder(n, z)?.value(n))
}

/// y_n(z) for a single order.
pub fn sph_y(n: usize, z: Complex64) -> Result<Complex64> {
    Ok(sph_y_ladder(n, z)?.value(n))
}

/// h_n^(1)(z) for a single order.
pub fn sph_h1(n: usize, z: Complex64) -> Result<Complex64> {
    Ok(sph_h1_ladder(n, z)?.value(n))
}
