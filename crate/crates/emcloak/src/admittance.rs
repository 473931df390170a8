//! Discrete trace-space norms, the duality pairing and energy checks.
//!
//! The Div-conforming trace space is represented spectrally on spheres:
//! gradient-type coefficients carry weight (1 + n(n+1))^{1/2} (their surface
//! divergence dominates), rotated-type coefficients (1 + n(n+1))^{-1/2}
//! (divergence free). Operator norms of admittance differences are the
//! largest singular values after symmetric diagonal weighting.

use crate::error::{Error, Result};
use crate::geometry::{gauss_legendre, GaussSphereGrid, SurfaceQuadrature};
use crate::mie::expansion::{mode_index, modes, n_modes, VshExpansion};
use crate::mie::layered::{AdmittanceMatrix, LayeredSolution};
use crate::trace::TangentialTrace;
use crate::{cdot, rcross};
use ndarray::Array2;
use ndarray_linalg::SVD;
use num_complex::Complex64;

/// Spectral weights of the Div-conforming trace norm per degree n.
#[derive(Debug, Clone)]
pub struct WeightedNorm {
    pub n_max: usize,
    pub w_grad: Vec<f64>,
    pub w_rot: Vec<f64>,
}

impl WeightedNorm {
    pub fn new(n_max: usize) -> Self {
        let mut w_grad = Vec::with_capacity(n_max);
        let mut w_rot = Vec::with_capacity(n_max);
        for n in 1..=n_max {
            let s = 1.0 + (n * (n + 1)) as f64;
            w_grad.push(s.sqrt());
            w_rot.push(1.0 / s.sqrt());
        }
        WeightedNorm { n_max, w_grad, w_rot }
    }
}

/// Weighted coefficient norm of an expansion:
/// sqrt(sum w_grad(n) |a|^2 + w_rot(n) |b|^2).
pub fn thdiv_norm(e: &VshExpansion, w: &WeightedNorm) -> Result<f64> {
    if e.n_max > w.n_max {
        return Err(Error::Validation(format!(
            "expansion degree {} exceeds weight table degree {}",
            e.n_max, w.n_max
        )));
    }
    let mut acc = 0.0;
    for (n, m) in modes(e.n_max) {
        let k = mode_index(n, m);
        acc += w.w_grad[n - 1] * e.grad[k].norm_sqr() + w.w_rot[n - 1] * e.rot[k].norm_sqr();
    }
    Ok(acc.sqrt())
}

/// Unweighted coefficient norm, reported alongside the weighted one.
pub fn l2_coeff_norm(e: &VshExpansion) -> f64 {
    e.coeff_norm()
}

/// Skew-symmetric duality pairing int j . (m x nu) ds by surface quadrature.
pub fn duality_pairing<S: SurfaceQuadrature + ?Sized>(
    j: &TangentialTrace,
    m: &TangentialTrace,
    surface: &S,
) -> Result<Complex64> {
    if j.len() != surface.nodes().len() || m.len() != surface.nodes().len() {
        return Err(Error::Validation("trace/surface node count mismatch".into()));
    }
    let mut acc = Complex64::ZERO;
    for (((jv, mv), nu), w) in j
        .values
        .iter()
        .zip(&m.values)
        .zip(surface.normals())
        .zip(surface.weights())
    {
        let m_cross_nu = -rcross(nu, mv); // m x nu = -(nu x m)
        acc += cdot(jv, &m_cross_nu) * *w;
    }
    Ok(acc)
}

/// The same pairing evaluated exactly in coefficient space. Modes (n, mu) pair
/// with (n, -mu) through the unconjugated product of harmonics.
pub fn spectral_pairing(j: &VshExpansion, m: &VshExpansion) -> Result<Complex64> {
    if j.n_max != m.n_max {
        return Err(Error::Validation("expansion truncation mismatch".into()));
    }
    let mut acc = Complex64::ZERO;
    for (n, mu) in modes(j.n_max) {
        let k = mode_index(n, mu);
        let k_conj = mode_index(n, -mu);
        let sign = if mu.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let nn = (n * (n + 1)) as f64;
        acc += Complex64::from(sign * nn)
            * (j.rot[k] * m.grad[k_conj] - j.grad[k] * m.rot[k_conj]);
    }
    Ok(acc)
}

/// Operator norm of the difference of two admittance matrices on the weighted
/// trace space: sigma_max of W^{1/2} (A - B) W^{-1/2}.
pub fn admittance_diff_norm(
    a: &AdmittanceMatrix,
    b: &AdmittanceMatrix,
    w: &WeightedNorm,
) -> Result<f64> {
    if a.n_max != b.n_max {
        return Err(Error::Validation("admittance truncation mismatch".into()));
    }
    if w.n_max < a.n_max {
        return Err(Error::Validation("weight table too short".into()));
    }
    let k = n_modes(a.n_max);
    let ma = a.to_matrix();
    let mb = b.to_matrix();
    let mut d = Array2::<Complex64>::zeros((2 * k, 2 * k));
    let weight_of = |row: usize| -> f64 {
        // Rows/columns are [grad block; rot block] in flat mode order.
        let (block_rot, idx) = if row < k { (false, row) } else { (true, row - k) };
        let n = crate::mie::expansion::mode_degree(idx);
        if block_rot {
            w.w_rot[n - 1]
        } else {
            w.w_grad[n - 1]
        }
    };
    for i in 0..2 * k {
        let wi = weight_of(i).sqrt();
        for jcol in 0..2 * k {
            let wj = weight_of(jcol).sqrt();
            d[(i, jcol)] = (ma[(i, jcol)] - mb[(i, jcol)]) * (wi / wj);
        }
    }
    largest_singular_value(&d)
}

/// Unweighted operator-norm difference (plain largest singular value).
pub fn admittance_diff_norm_l2(a: &AdmittanceMatrix, b: &AdmittanceMatrix) -> Result<f64> {
    let ma = a.to_matrix();
    let mb = b.to_matrix();
    largest_singular_value(&(&ma - &mb))
}

fn largest_singular_value(m: &Array2<Complex64>) -> Result<f64> {
    let (_, s, _) = m
        .svd(false, false)
        .map_err(|e| Error::Numeric(format!("SVD failed: {e}")))?;
    Ok(s.iter().cloned().fold(0.0, f64::max))
}

// ---------------------------------------------------------------------------
// Energy identity of the dissipative layered problem
// ---------------------------------------------------------------------------

/// Volume quadrature resolution for the energy balance.
#[derive(Debug, Clone, Copy)]
pub struct EnergyQuadrature {
    pub radial_points: usize,
    /// Angular rule exact to this harmonic degree.
    pub angular_degree: usize,
}

impl Default for EnergyQuadrature {
    fn default() -> Self {
        EnergyQuadrature { radial_points: 24, angular_degree: 28 }
    }
}

/// Relative residual of the dissipation balance
///
///   sum_layers sigma_l int_layer |E|^2 = Re int_boundary (nu x conj E) . (nu x (nu x H)) ds.
///
/// The left side is a radial-Gauss x spherical product quadrature of the
/// synthesized fields, the right side a surface product quadrature; both are
/// spectrally exact for band-limited solutions at the default resolution.
pub fn energy_identity_residual(
    sol: &LayeredSolution,
    quad: EnergyQuadrature,
) -> Result<EnergyBalance> {
    let spec = &sol.spec;
    let mut lhs = 0.0;
    for (l, layer) in spec.layers.iter().enumerate() {
        if layer.sigma == 0.0 {
            continue;
        }
        let r0 = if l == 0 { 0.0 } else { spec.radii[l - 1] };
        let r1 = spec.radii[l];
        lhs += layer.sigma * volume_integral_e2(sol, r0, r1, quad)?;
    }

    let r = spec.boundary_radius();
    let grid = GaussSphereGrid::new(
        r,
        quad.angular_degree / 2 + 2,
        quad.angular_degree + 5,
    );
    let mut rhs = 0.0;
    for ((&x, &nu), &w) in grid
        .nodes()
        .iter()
        .zip(grid.normals())
        .zip(grid.weights())
    {
        let (e, h) = sol.eval_fields(x * (1.0 - 1e-12));
        let e_conj = crate::CVec3::new(e.x.conj(), e.y.conj(), e.z.conj());
        let nu_x_econj = rcross(&nu, &e_conj);
        let nu_x_nu_x_h = rcross(&nu, &rcross(&nu, &h));
        rhs += (cdot(&nu_x_econj, &nu_x_nu_x_h) * w).re;
    }

    let denom = lhs.abs().max(rhs.abs()).max(1e-14);
    Ok(EnergyBalance { lhs, rhs, residual: (lhs - rhs).abs() / denom })
}

#[derive(Debug, Clone, Copy)]
pub struct EnergyBalance {
    /// Dissipated power sum over conducting regions.
    pub lhs: f64,
    /// Boundary flux term.
    pub rhs: f64,
    pub residual: f64,
}

/// int |E|^2 over the spherical shell r0 < r < r1.
pub fn volume_integral_e2(
    sol: &LayeredSolution,
    r0: f64,
    r1: f64,
    quad: EnergyQuadrature,
) -> Result<f64> {
    let (xs, ws) = gauss_legendre(quad.radial_points);
    let angular = GaussSphereGrid::new(
        1.0,
        quad.angular_degree / 2 + 2,
        quad.angular_degree + 5,
    );
    let mut acc = 0.0;
    for (xi, wi) in xs.iter().zip(&ws) {
        let r = 0.5 * (r1 + r0) + 0.5 * (r1 - r0) * xi;
        let wr = 0.5 * (r1 - r0) * wi * r * r;
        let mut shell = 0.0;
        for (&dir, &wa) in angular.nodes().iter().zip(angular.weights()) {
            let e = sol.eval_e(dir * r);
            shell += e.norm_squared() * wa;
        }
        acc += wr * shell;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GaussSphereGrid;
    use crate::mie::expansion::VshExpansion;
    use crate::mie::layered::{LayerMedium, LayeredSphereSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_expansion(seed: u64, n_max: usize, radius: f64) -> VshExpansion {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut e = VshExpansion::zero(n_max, radius);
        for k in 0..n_modes(n_max) {
            e.grad[k] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            e.rot[k] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        e
    }

    #[test]
    fn zero_expansion_has_zero_norm() {
        let w = WeightedNorm::new(4);
        assert_eq!(thdiv_norm(&VshExpansion::zero(4, 1.0), &w).unwrap(), 0.0);
    }

    #[test]
    fn single_gradient_mode_norm_is_quartic_root_of_three() {
        let w = WeightedNorm::new(2);
        let e = VshExpansion::single_grad(2, 1.0, 1, 0);
        let expect = 3.0f64.powf(0.25);
        assert_relative_eq!(thdiv_norm(&e, &w).unwrap(), expect, max_relative = 1e-14);
    }

    proptest! {
        #[test]
        fn norm_axioms(seed in 0u64..1000, lam_re in -3.0f64..3.0, lam_im in -3.0f64..3.0) {
            let w = WeightedNorm::new(5);
            let e = random_expansion(seed, 5, 1.0);
            let f = random_expansion(seed.wrapping_add(1), 5, 1.0);
            let ne = thdiv_norm(&e, &w).unwrap();
            let nf = thdiv_norm(&f, &w).unwrap();
            // Positivity.
            prop_assert!(ne > 0.0);
            // Homogeneity.
            let lam = Complex64::new(lam_re, lam_im);
            let nscaled = thdiv_norm(&e.scaled(lam), &w).unwrap();
            prop_assert!((nscaled - lam.norm() * ne).abs() <= 1e-10 * ne.max(1.0));
            // Triangle inequality.
            let mut sum = e.clone();
            for k in 0..sum.grad.len() {
                sum.grad[k] += f.grad[k];
                sum.rot[k] += f.rot[k];
            }
            prop_assert!(thdiv_norm(&sum, &w).unwrap() <= ne + nf + 1e-12);
        }
    }

    #[test]
    fn truncation_mismatch_is_rejected() {
        let w = WeightedNorm::new(2);
        let e = VshExpansion::zero(4, 1.0);
        assert!(thdiv_norm(&e, &w).is_err());
    }

    #[test]
    fn pairing_of_trace_with_itself_vanishes() {
        let grid = GaussSphereGrid::for_degree(1.0, 4);
        let e = random_expansion(3, 4, 1.0);
        let t = e.synthesize(&grid);
        let b = duality_pairing(&t, &t, &grid).unwrap();
        assert!(b.norm() < 1e-12 * t.l2_norm(&grid).powi(2).max(1.0));
    }

    #[test]
    fn pairing_is_skew_symmetric_to_roundoff() {
        let grid = GaussSphereGrid::for_degree(1.0, 4);
        let tj = random_expansion(11, 4, 1.0).synthesize(&grid);
        let tm = random_expansion(12, 4, 1.0).synthesize(&grid);
        let bjm = duality_pairing(&tj, &tm, &grid).unwrap();
        let bmj = duality_pairing(&tm, &tj, &grid).unwrap();
        assert!((bjm + bmj).norm() < 1e-12 * bjm.norm().max(1.0));
    }

    #[test]
    fn pairing_of_gradient_with_rotated_mode() {
        // j = Grad Y_1^0 and m the rotated partner Grad Y_1^0 x nu:
        // (m x nu) = -Grad Y_1^0, so B(j, m) = -int |Grad Y_1^0|^2 = -2 on the
        // unit sphere.
        let grid = GaussSphereGrid::for_degree(1.0, 2);
        let j = VshExpansion::single_grad(2, 1.0, 1, 0).synthesize(&grid);
        let m = VshExpansion::single_rot(2, 1.0, 1, 0).synthesize(&grid);
        let b = duality_pairing(&j, &m, &grid).unwrap();
        assert_relative_eq!(b.re, -2.0, max_relative = 1e-12);
        assert!(b.im.abs() < 1e-13);
    }

    #[test]
    fn spectral_pairing_matches_quadrature() {
        let grid = GaussSphereGrid::for_degree(1.5, 5);
        let ej = random_expansion(21, 5, 1.5);
        let em = random_expansion(22, 5, 1.5);
        let bq = duality_pairing(&ej.synthesize(&grid), &em.synthesize(&grid), &grid).unwrap();
        let bs = spectral_pairing(&ej, &em).unwrap();
        assert!((bq - bs).norm() < 1e-10 * bs.norm().max(1.0), "{bq} vs {bs}");
    }

    #[test]
    fn diff_norm_of_equal_matrices_is_zero() {
        let adm = crate::mie::free_space_admittance(2.0, 1.0, 6).unwrap();
        let w = WeightedNorm::new(6);
        assert!(admittance_diff_norm(&adm, &adm, &w).unwrap() < 1e-14);
    }

    #[test]
    fn diff_norm_of_single_block_entry_is_weighted() {
        // Perturb lam_tm at n = 2 by d: the entry connects a rotated column
        // (weight 1/sqrt(7)) to a gradient row (weight sqrt(7)), so the
        // weighted singular value is |d| sqrt(7).
        let mut a = crate::mie::free_space_admittance(2.0, 1.0, 4).unwrap();
        let b = a.clone();
        let d = Complex64::new(3e-3, -4e-3);
        a.lam_tm[1] += d;
        let w = WeightedNorm::new(4);
        let norm = admittance_diff_norm(&a, &b, &w).unwrap();
        assert_relative_eq!(norm, d.norm() * 7.0f64.sqrt(), max_relative = 1e-10);
        // The TE analogue is damped by the same factor.
        let mut c = b.clone();
        c.lam_te[1] += d;
        let norm_te = admittance_diff_norm(&c, &b, &w).unwrap();
        assert_relative_eq!(norm_te, d.norm() / 7.0f64.sqrt(), max_relative = 1e-10);
    }

    #[test]
    fn diff_norm_triangle_inequality() {
        let a = crate::mie::free_space_admittance(2.0, 1.0, 4).unwrap();
        let mut b = a.clone();
        let mut c = a.clone();
        b.lam_te[0] += Complex64::new(0.1, 0.0);
        b.lam_tm[2] -= Complex64::new(0.0, 0.2);
        c.lam_te[3] += Complex64::new(0.05, 0.05);
        let w = WeightedNorm::new(4);
        let ab = admittance_diff_norm(&a, &b, &w).unwrap();
        let bc = admittance_diff_norm(&b, &c, &w).unwrap();
        let ac = admittance_diff_norm(&a, &c, &w).unwrap();
        assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn lossless_energy_balance_is_tiny() {
        // sigma = 0 everywhere: both sides of the balance vanish.
        let spec = LayeredSphereSpec::new(
            vec![0.3, 2.0],
            vec![LayerMedium { eps: 5.0, mu: 1.0, sigma: 0.0 }, LayerMedium::vacuum()],
            1.0,
        )
        .unwrap();
        let psi = random_expansion(31, 3, 2.0);
        let sol = crate::mie::solve_layered_sphere(&spec, &psi).unwrap();
        let bal = energy_identity_residual(&sol, EnergyQuadrature::default()).unwrap();
        assert_eq!(bal.lhs, 0.0);
        let scale: f64 = psi.coeff_norm();
        assert!(bal.rhs.abs() < 1e-8 * scale * scale, "flux {}", bal.rhs);
    }

    #[test]
    fn dissipative_energy_balance_closes() {
        let rho: f64 = 0.2;
        let spec = LayeredSphereSpec::new(
            vec![0.5 * rho, rho, 2.0],
            vec![
                LayerMedium { eps: 10.0, mu: 1.0, sigma: 1.0 },
                LayerMedium { eps: 1.0, mu: 1.0, sigma: rho.powi(-2) },
                LayerMedium::vacuum(),
            ],
            1.0,
        )
        .unwrap();
        let psi = VshExpansion::single_grad(2, 2.0, 1, 0);
        let sol = crate::mie::solve_layered_sphere(&spec, &psi).unwrap();
        let bal = energy_identity_residual(&sol, EnergyQuadrature::default()).unwrap();
        assert!(bal.lhs > 0.0);
        assert!(bal.residual < 1e-6, "residual {} ({} vs {})", bal.residual, bal.lhs, bal.rhs);
    }

    #[test]
    fn energy_residual_stable_under_quadrature_refinement() {
        let rho: f64 = 0.2;
        let spec = LayeredSphereSpec::new(
            vec![0.5 * rho, rho, 2.0],
            vec![
                LayerMedium { eps: 2.0, mu: 1.0, sigma: 0.5 },
                LayerMedium { eps: 1.0, mu: 1.0, sigma: rho.powi(-2) },
                LayerMedium::vacuum(),
            ],
            1.0,
        )
        .unwrap();
        let psi = random_expansion(41, 2, 2.0);
        let sol = crate::mie::solve_layered_sphere(&spec, &psi).unwrap();
        let coarse = energy_identity_residual(
            &sol,
            EnergyQuadrature { radial_points: 12, angular_degree: 14 },
        )
        .unwrap();
        let fine = energy_identity_residual(
            &sol,
            EnergyQuadrature { radial_points: 24, angular_degree: 28 },
        )
        .unwrap();
        assert!(fine.residual <= coarse.residual * 1.5 + 1e-12);
        assert!((coarse.lhs - fine.lhs).abs() < 0.1 * fine.lhs.abs().max(1e-12));
    }
}
