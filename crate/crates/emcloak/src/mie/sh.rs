//! Scalar spherical harmonics and their unit-sphere surface gradients.
//!
//! Y_n^m are fully normalized with the Condon-Shortley phase, so that
//! int |Y_n^m|^2 dS = 1 over the unit sphere and int |Grad Y_n^m|^2 = n(n+1).
//! Gradients are returned in ambient Cartesian coordinates.

use crate::{CVec3, Vec3};
use num_complex::Complex64;

/// All Y_n^m and Grad Y_n^m at one direction, for n <= n_max.
#[derive(Debug, Clone)]
pub struct ShTables {
    n_max: usize,
    /// Normalized associated Legendre values, m >= 0, packed by `idx`.
    p: Vec<f64>,
    /// d/dtheta of the above.
    dp: Vec<f64>,
    /// p / sin(theta) (regularized), needed for the phi-component.
    p_over_sin: Vec<f64>,
    /// e^{i m phi} for m = 0..n_max.
    eimphi: Vec<Complex64>,
    theta_hat: Vec3,
    phi_hat: Vec3,
}

#[inline]
fn idx(n: usize, m: usize) -> usize {
    n * (n + 1) / 2 + m
}

/// Build the harmonic tables at the unit direction `dir`.
pub fn sh_tables(n_max: usize, dir: Vec3) -> ShTables {
    let r = dir.norm();
    let ct = (dir.z / r).clamp(-1.0, 1.0);
    let st = (1.0 - ct * ct).sqrt().max(1e-15);
    let (sp, cp) = if st > 1e-14 {
        let rxy = (dir.x * dir.x + dir.y * dir.y).sqrt().max(1e-300);
        (dir.y / rxy, dir.x / rxy)
    } else {
        (0.0, 1.0)
    };
    let theta_hat = Vec3::new(ct * cp, ct * sp, -st);
    let phi_hat = Vec3::new(-sp, cp, 0.0);

    let len = idx(n_max, n_max) + 1;
    let mut p = vec![0.0; len];
    let mut dp = vec![0.0; len];

    // Diagonal increments with the Condon-Shortley phase, then upward in n.
    p[idx(0, 0)] = 0.5 / std::f64::consts::PI.sqrt();
    for m in 1..=n_max {
        p[idx(m, m)] = -((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * st * p[idx(m - 1, m - 1)];
    }
    for m in 0..n_max {
        p[idx(m + 1, m)] = ((2 * m + 3) as f64).sqrt() * ct * p[idx(m, m)];
    }
    for m in 0..=n_max {
        for n in (m + 2)..=n_max {
            let nf = n as f64;
            let mf = m as f64;
            let a = ((4.0 * nf * nf - 1.0) / (nf * nf - mf * mf)).sqrt();
            let b = (((nf - 1.0) * (nf - 1.0) - mf * mf) / (4.0 * (nf - 1.0) * (nf - 1.0) - 1.0))
                .sqrt();
            p[idx(n, m)] = a * (ct * p[idx(n - 1, m)] - b * p[idx(n - 2, m)]);
        }
    }
    // dP/dtheta = (n ct P_n^m - sqrt((2n+1)(n^2-m^2)/(2n-1)) P_{n-1}^m) / st.
    for m in 0..=n_max {
        for n in m.max(1)..=n_max {
            let nf = n as f64;
            let mf = m as f64;
            let c = if n > m {
                ((2.0 * nf + 1.0) * (nf * nf - mf * mf) / (2.0 * nf - 1.0)).sqrt()
            } else {
                0.0
            };
            let below = if n > m { p[idx(n - 1, m)] } else { 0.0 };
            dp[idx(n, m)] = (nf * ct * p[idx(n, m)] - c * below) / st;
        }
    }
    let mut p_over_sin = vec![0.0; len];
    for v in 0..len {
        p_over_sin[v] = p[v] / st;
    }

    let mut eimphi = Vec::with_capacity(n_max + 1);
    let e1 = Complex64::new(cp, sp);
    let mut cur = Complex64::ONE;
    for _ in 0..=n_max {
        eimphi.push(cur);
        cur *= e1;
    }

    ShTables { n_max, p, dp, p_over_sin, eimphi, theta_hat, phi_hat }
}

impl ShTables {
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Y_n^m, any |m| <= n.
    pub fn y(&self, n: usize, m: i64) -> Complex64 {
        let ma = m.unsigned_abs() as usize;
        let val = self.p[idx(n, ma)] * self.eimphi[ma];
        if m >= 0 {
            val
        } else {
            let conj = val.conj();
            if ma % 2 == 0 {
                conj
            } else {
                -conj
            }
        }
    }

    /// Unit-sphere surface gradient of Y_n^m in ambient coordinates.
    pub fn grad_y(&self, n: usize, m: i64) -> CVec3 {
        let ma = m.unsigned_abs() as usize;
        let e = self.eimphi[ma];
        let th = self.dp[idx(n, ma)] * e;
        let ph = Complex64::new(0.0, ma as f64) * self.p_over_sin[idx(n, ma)] * e;
        let g = CVec3::new(
            th * self.theta_hat.x + ph * self.phi_hat.x,
            th * self.theta_hat.y + ph * self.phi_hat.y,
            th * self.theta_hat.z + ph * self.phi_hat.z,
        );
        if m >= 0 {
            g
        } else {
            let conj = CVec3::new(g.x.conj(), g.y.conj(), g.z.conj());
            if ma % 2 == 0 {
                conj
            } else {
                -conj
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GaussSphereGrid, SurfaceQuadrature};
    use crate::{cdot, cvec3_from_real};
    use approx::assert_relative_eq;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn conj_v(v: &CVec3) -> CVec3 {
        CVec3::new(v.x.conj(), v.y.conj(), v.z.conj())
    }

    #[test]
    fn y00_and_y10_closed_forms() {
        let d = Vec3::new(0.3, -0.4, 0.866).normalize();
        let t = sh_tables(3, d);
        assert_relative_eq!(t.y(0, 0).re, 0.5 / PI.sqrt(), max_relative = 1e-14);
        let expect = (3.0 / (4.0 * PI)).sqrt() * d.z;
        assert_relative_eq!(t.y(1, 0).re, expect, max_relative = 1e-13);
        // Y_1^1 = -sqrt(3/8pi) sin(theta) e^{i phi}.
        let st = (1.0 - d.z * d.z).sqrt();
        let y11 = t.y(1, 1);
        assert_relative_eq!(y11.norm(), (3.0 / (8.0 * PI)).sqrt() * st, max_relative = 1e-13);
    }

    #[test]
    fn orthonormality_on_gauss_grid() {
        let grid = GaussSphereGrid::for_degree(1.0, 5);
        let modes = [(1i64, 0i64), (1, 1), (2, -1), (3, 2), (5, -4)];
        for &(n1, m1) in &modes {
            for &(n2, m2) in &modes {
                let mut acc = Complex64::ZERO;
                for (x, w) in grid.nodes().iter().zip(grid.weights()) {
                    let t = sh_tables(5, *x);
                    acc += t.y(n1 as usize, m1) * t.y(n2 as usize, m2).conj() * *w;
                }
                let expect = if (n1, m1) == (n2, m2) { 1.0 } else { 0.0 };
                assert!(
                    (acc - Complex64::new(expect, 0.0)).norm() < 1e-12,
                    "({n1},{m1}) vs ({n2},{m2}): {acc}"
                );
            }
        }
    }

    #[test]
    fn gradient_norm_integrates_to_eigenvalue() {
        let grid = GaussSphereGrid::for_degree(1.0, 6);
        for &(n, m) in &[(1usize, 0i64), (2, 1), (4, -3), (6, 6)] {
            let mut acc = 0.0;
            for (x, w) in grid.nodes().iter().zip(grid.weights()) {
                let t = sh_tables(6, *x);
                let g = t.grad_y(n, m);
                acc += g.norm_squared() * w;
            }
            let expect = (n * (n + 1)) as f64;
            assert_relative_eq!(acc, expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn gradient_matches_directional_finite_differences() {
        let n = 4;
        let m = 2i64;
        let d = Vec3::new(0.5, 0.7, -0.4).normalize();
        let t = sh_tables(n, d);
        let g = t.grad_y(n, m);
        // Central differences along two orthogonal tangent directions.
        let e1 = d.cross(&Vec3::new(0.0, 0.0, 1.0)).normalize();
        let e2 = d.cross(&e1);
        let h = 1e-6;
        for e in [e1, e2] {
            let dp = (d + e * h).normalize();
            let dm = (d - e * h).normalize();
            let fd = (sh_tables(n, dp).y(n, m) - sh_tables(n, dm).y(n, m)) / (2.0 * h);
            let dir = cdot(&g, &cvec3_from_real(e));
            assert!((fd - dir).norm() < 1e-8, "dir deriv {dir} vs fd {fd}");
        }
    }

    #[test]
    fn gradient_is_tangential() {
        let d = Vec3::new(-0.2, 0.9, 0.5).normalize();
        let t = sh_tables(6, d);
        for n in 1..=6usize {
            for m in -(n as i64)..=(n as i64) {
                let g = t.grad_y(n, m);
                assert!(cdot(&g, &cvec3_from_real(d)).norm() < 1e-12 * g.norm().max(1.0));
            }
        }
    }

    #[test]
    fn gradient_families_are_l2_orthogonal() {
        // int Grad Y . conj(nu x Grad Y') dS = 0 for all pairs.
        let grid = GaussSphereGrid::for_degree(1.0, 4);
        for &(n1, m1) in &[(1usize, 0i64), (2, -1), (3, 3)] {
            for &(n2, m2) in &[(1usize, 0i64), (2, -1), (3, 3)] {
                let mut acc = Complex64::ZERO;
                for ((x, w), nu) in grid.nodes().iter().zip(grid.weights()).zip(grid.normals()) {
                    let t = sh_tables(4, *x);
                    let g1 = t.grad_y(n1, m1);
                    let g2 = t.grad_y(n2, m2);
                    let rot = crate::rcross(nu, &g2);
                    acc += cdot(&g1, &conj_v(&rot)) * *w;
                }
                assert!(acc.norm() < 1e-11, "({n1},{m1}),({n2},{m2}): {acc}");
            }
        }
    }
}
