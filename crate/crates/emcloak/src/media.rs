//! Material tensors, blow-up maps and the cloaking medium layouts.
//!
//! The cloak is built by pushing the reference medium through a radial map
//! that blows a small concentric ball up to the cloaked region while fixing
//! the outer boundary. The push-forward of a material tensor under a map F is
//! DF m DF^T / |det DF| evaluated at the preimage; pull-backs of fields use
//! DF^T. Region layouts follow the three-zone design: transformed cloak
//! shell, thin conducting layer, and the cloaked content.

use crate::error::{Error, Result};
use crate::{CVec3, Mat3, Vec3};
use num_complex::Complex64;

/// Real symmetric 3x3 material tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymTensor3 {
    m: Mat3,
}

impl SymTensor3 {
    /// Build from a matrix, symmetrizing against roundoff.
    pub fn new(m: Mat3) -> Self {
        SymTensor3 { m: (m + m.transpose()) * 0.5 }
    }

    pub fn identity() -> Self {
        SymTensor3 { m: Mat3::identity() }
    }

    pub fn zero() -> Self {
        SymTensor3 { m: Mat3::zeros() }
    }

    pub fn scalar(s: f64) -> Self {
        SymTensor3 { m: Mat3::identity() * s }
    }

    /// From the six independent entries (xx, yy, zz, xy, xz, yz).
    pub fn from_entries(e: [f64; 6]) -> Self {
        let m = Mat3::new(e[0], e[3], e[4], e[3], e[1], e[5], e[4], e[5], e[2]);
        SymTensor3 { m }
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.m
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 3] {
        let mut ev: Vec<f64> = self.m.symmetric_eigen().eigenvalues.iter().cloned().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        [ev[0], ev[1], ev[2]]
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        self.m * v
    }
}

/// Radial blow-up map between concentric spheres.
///
/// Inside the small ball the map is the dilation x -> x / rho; between the
/// small ball and the outer boundary it is the affine radial map taking
/// |x| = rho R_D to R_D while fixing |x| = R_Omega. The slope of the affine
/// branch is (R_Omega - R_D) / (R_Omega - rho R_D).
#[derive(Debug, Clone, Copy)]
pub struct BlowupMap {
    pub rho: f64,
    pub inner_radius: f64,
    pub outer_radius: f64,
}

/// Relative tolerance band around the branch interface where Jacobians are
/// refused.
const INTERFACE_TOL: f64 = 1e-9;

impl BlowupMap {
    pub fn new(rho: f64, inner_radius: f64, outer_radius: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::Domain(format!("rho must lie in (0,1), got {rho}")));
        }
        if !(inner_radius > 0.0 && outer_radius > inner_radius) {
            return Err(Error::Domain(
                "need 0 < inner radius < outer radius for the radial map".into(),
            ));
        }
        Ok(BlowupMap { rho, inner_radius, outer_radius })
    }

    /// rho -> 1 limit, numerically indistinguishable from the identity.
    pub fn identity_like(inner_radius: f64, outer_radius: f64) -> Result<Self> {
        BlowupMap::new(1.0 - 1e-15, inner_radius, outer_radius)
    }

    /// Radius of the small ball rho R_D where the branches meet.
    pub fn seam_radius(&self) -> f64 {
        self.rho * self.inner_radius
    }

    fn affine_slope(&self) -> f64 {
        (self.outer_radius - self.inner_radius) / (self.outer_radius - self.seam_radius())
    }

    /// Forward map F(x).
    pub fn map(&self, x: Vec3) -> Vec3 {
        let r = x.norm();
        if r < self.seam_radius() {
            x / self.rho
        } else {
            let s = self.affine_slope();
            let r_new = self.inner_radius + (r - self.seam_radius()) * s;
            x * (r_new / r)
        }
    }

    /// Inverse map F^{-1}(y); the radial branches invert in closed form.
    pub fn inverse(&self, y: Vec3) -> Result<Vec3> {
        let r = y.norm();
        if r > self.outer_radius * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "point with |y| = {r} outside the map image (outer radius {})",
                self.outer_radius
            )));
        }
        if r < self.inner_radius {
            Ok(y * self.rho)
        } else {
            let s = self.affine_slope();
            let r_old = self.seam_radius() + (r - self.inner_radius) / s;
            Ok(y * (r_old / r))
        }
    }

    /// Analytic Jacobian DF(x), refusing evaluation on the branch seam.
    pub fn jacobian(&self, x: Vec3) -> Result<Mat3> {
        let r = x.norm();
        let seam = self.seam_radius();
        if (r - seam).abs() < INTERFACE_TOL * self.outer_radius {
            return Err(Error::Interface(format!(
                "Jacobian requested within tolerance of the branch seam |x| = {seam}"
            )));
        }
        if r < seam {
            return Ok(Mat3::identity() / self.rho);
        }
        // F(x) = f(r) x / r with f affine: DF = (f/r)(I - rr^T) + f' rr^T.
        let s = self.affine_slope();
        let f = self.inner_radius + (r - seam) * s;
        let rr = x / r;
        let proj = rr * rr.transpose();
        Ok((Mat3::identity() - proj) * (f / r) + proj * s)
    }

    /// Branch seam continuity defect: both branch formulas evaluated at the
    /// same seam point.
    pub fn seam_defect(&self, dir: Vec3) -> f64 {
        let x = dir.normalize() * self.seam_radius();
        let r = x.norm();
        let dilated = x / self.rho;
        let r_new = self.inner_radius + (r - self.seam_radius()) * self.affine_slope();
        let affine = x * (r_new / r);
        (dilated - affine).norm()
    }
}

/// Push-forward of a material tensor: DF m DF^T / |det DF| at y = F^{-1}(x).
pub fn push_forward<M>(m: &M, map: &BlowupMap, x: Vec3) -> Result<SymTensor3>
where
    M: Fn(Vec3) -> SymTensor3 + ?Sized,
{
    let y = map.inverse(x)?;
    let df = map.jacobian(y)?;
    let det = df.determinant().abs();
    if det <= 0.0 {
        return Err(Error::Numeric("non-positive Jacobian determinant".into()));
    }
    let t = df * m(y).matrix() * df.transpose() / det;
    Ok(SymTensor3::new(t))
}

/// Pull-back of a field through the map: (DF(y))^T E(F(y)).
pub fn pull_back_field<F>(e: &F, map: &BlowupMap, y: Vec3) -> Result<CVec3>
where
    F: Fn(Vec3) -> CVec3 + ?Sized,
{
    let df = map.jacobian(y)?;
    let v = e(map.map(y));
    let dft = df.transpose();
    let col = |row: usize| {
        Complex64::from(dft[(row, 0)]) * v.x
            + Complex64::from(dft[(row, 1)]) * v.y
            + Complex64::from(dft[(row, 2)]) * v.z
    };
    Ok(CVec3::new(col(0), col(1), col(2)))
}

// ---------------------------------------------------------------------------
// Region-wise material layouts
// ---------------------------------------------------------------------------

/// One radial region with its three tensor fields.
pub struct MaterialRegion {
    pub name: &'static str,
    pub r_min: f64,
    pub r_max: f64,
    pub eps: Box<dyn Fn(Vec3) -> SymTensor3 + Sync + Send>,
    pub mu: Box<dyn Fn(Vec3) -> SymTensor3 + Sync + Send>,
    pub sigma: Box<dyn Fn(Vec3) -> SymTensor3 + Sync + Send>,
}

/// Region-wise material field covering a ball, radial regions only.
pub struct MaterialField {
    pub regions: Vec<MaterialRegion>,
    pub outer_radius: f64,
}

/// Constant isotropic core material used in the parameter sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoreMaterial {
    pub eps: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl CoreMaterial {
    pub fn vacuum() -> Self {
        CoreMaterial { eps: 1.0, mu: 1.0, sigma: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || !(self.mu > 0.0) || self.sigma < 0.0 {
            return Err(Error::Validation(format!(
                "core material must satisfy eps > 0, mu > 0, sigma >= 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

impl MaterialField {
    /// Evaluate (eps, mu, sigma) at a point strictly inside a region.
    pub fn eval(&self, x: Vec3) -> Result<(SymTensor3, SymTensor3, SymTensor3)> {
        let r = x.norm();
        let tol = INTERFACE_TOL * self.outer_radius;
        for region in &self.regions {
            if r > region.r_min + tol && r < region.r_max - tol {
                return Ok(((region.eps)(x), (region.mu)(x), (region.sigma)(x)));
            }
        }
        Err(Error::Interface(format!(
            "point with |x| = {r} is on or within tolerance of a region interface"
        )))
    }

    pub fn region_of(&self, x: Vec3) -> Option<&MaterialRegion> {
        let r = x.norm();
        let tol = INTERFACE_TOL * self.outer_radius;
        self.regions
            .iter()
            .find(|reg| r > reg.r_min + tol && r < reg.r_max - tol)
    }
}

/// Scaling constants of the conducting layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerConstants {
    pub alpha0: f64,
    pub beta0: f64,
    pub gamma0: f64,
}

impl Default for LayerConstants {
    fn default() -> Self {
        LayerConstants { alpha0: 1.0, beta0: 1.0, gamma0: 1.0 }
    }
}

/// Physical cloaking medium on the ball of radius R_Omega: the transformed
/// shell outside the cloaked region, the pushed-forward conducting layer, and
/// the pushed-forward content.
pub fn build_physical_medium(
    rho: f64,
    consts: LayerConstants,
    core: CoreMaterial,
    inner_radius: f64,
    outer_radius: f64,
) -> Result<MaterialField> {
    core.validate()?;
    let map = BlowupMap::new(rho, inner_radius, outer_radius)?;
    let LayerConstants { alpha0, beta0, gamma0 } = consts;
    if !(alpha0 > 0.0 && beta0 > 0.0) || gamma0 < 0.0 {
        return Err(Error::Validation("need alpha0, beta0 > 0 and gamma0 >= 0".into()));
    }
    let id = move |_: Vec3| SymTensor3::identity();
    let sig_layer = gamma0 * rho.powi(-2);

    let shell = MaterialRegion {
        name: "cloak shell",
        r_min: inner_radius,
        r_max: outer_radius,
        eps: Box::new(move |x| push_forward(&id, &map, x).expect("shell eps")),
        mu: Box::new(move |x| push_forward(&id, &map, x).expect("shell mu")),
        sigma: Box::new(|_| SymTensor3::zero()),
    };
    let layer = MaterialRegion {
        name: "conducting layer",
        r_min: 0.5 * inner_radius,
        r_max: inner_radius,
        eps: Box::new(move |x| {
            push_forward(&move |_| SymTensor3::scalar(alpha0), &map, x).expect("layer eps")
        }),
        mu: Box::new(move |x| {
            push_forward(&move |_| SymTensor3::scalar(beta0), &map, x).expect("layer mu")
        }),
        sigma: Box::new(move |x| {
            push_forward(&move |_| SymTensor3::scalar(sig_layer), &map, x).expect("layer sigma")
        }),
    };
    let content = MaterialRegion {
        name: "cloaked content",
        r_min: 0.0,
        r_max: 0.5 * inner_radius,
        eps: Box::new(move |x| {
            push_forward(&move |_| SymTensor3::scalar(core.eps), &map, x).expect("core eps")
        }),
        mu: Box::new(move |x| {
            push_forward(&move |_| SymTensor3::scalar(core.mu), &map, x).expect("core mu")
        }),
        sigma: Box::new(move |x| {
            push_forward(&move |_| SymTensor3::scalar(core.sigma), &map, x).expect("core sigma")
        }),
    };
    Ok(MaterialField { regions: vec![shell, layer, content], outer_radius })
}

/// Virtual medium: vacuum outside the small ball, the conducting layer and
/// content inside it.
///
/// With `literal_mu_scaling` off (default) the layer permeability is the
/// pull-back-consistent beta0; with the flag on it is beta0 rho^2. Both
/// variants are provided because the source conventions differ; neither is
/// asserted as ground truth.
pub fn build_virtual_medium(
    rho: f64,
    consts: LayerConstants,
    core: CoreMaterial,
    inner_radius: f64,
    outer_radius: f64,
    literal_mu_scaling: bool,
) -> Result<MaterialField> {
    core.validate()?;
    let LayerConstants { alpha0, beta0, gamma0 } = consts;
    if !(alpha0 > 0.0 && beta0 > 0.0) || gamma0 < 0.0 {
        return Err(Error::Validation("need alpha0, beta0 > 0 and gamma0 >= 0".into()));
    }
    let seam = rho * inner_radius;
    let mu_layer = if literal_mu_scaling { beta0 * rho * rho } else { beta0 };
    let sig_layer = gamma0 * rho.powi(-2);

    let exterior = MaterialRegion {
        name: "vacuum",
        r_min: seam,
        r_max: outer_radius,
        eps: Box::new(|_| SymTensor3::identity()),
        mu: Box::new(|_| SymTensor3::identity()),
        sigma: Box::new(|_| SymTensor3::zero()),
    };
    let layer = MaterialRegion {
        name: "conducting layer",
        r_min: 0.5 * seam,
        r_max: seam,
        eps: Box::new(move |_| SymTensor3::scalar(alpha0)),
        mu: Box::new(move |_| SymTensor3::scalar(mu_layer)),
        sigma: Box::new(move |_| SymTensor3::scalar(sig_layer)),
    };
    let content = MaterialRegion {
        name: "content",
        r_min: 0.0,
        r_max: 0.5 * seam,
        eps: Box::new(move |_| SymTensor3::scalar(core.eps)),
        mu: Box::new(move |_| SymTensor3::scalar(core.mu)),
        sigma: Box::new(move |_| SymTensor3::scalar(core.sigma)),
    };
    Ok(MaterialField { regions: vec![exterior, layer, content], outer_radius })
}

/// Layered-sphere spec realizing a virtual medium for the oracle.
pub fn virtual_medium_spec(
    rho: f64,
    consts: LayerConstants,
    core: CoreMaterial,
    inner_radius: f64,
    outer_radius: f64,
    omega: f64,
    literal_mu_scaling: bool,
) -> Result<crate::mie::LayeredSphereSpec> {
    core.validate()?;
    let seam = rho * inner_radius;
    let mu_layer = if literal_mu_scaling { consts.beta0 * rho * rho } else { consts.beta0 };
    crate::mie::LayeredSphereSpec::new(
        vec![0.5 * seam, seam, outer_radius],
        vec![
            crate::mie::LayerMedium { eps: core.eps, mu: core.mu, sigma: core.sigma },
            crate::mie::LayerMedium {
                eps: consts.alpha0,
                mu: mu_layer,
                sigma: consts.gamma0 * rho.powi(-2),
            },
            crate::mie::LayerMedium::vacuum(),
        ],
        omega,
    )
}

/// Eigenvalue extrema of the three tensor fields over sample points.
#[derive(Debug, Clone, Copy)]
pub struct RegularityReport {
    pub eps: (f64, f64),
    pub mu: (f64, f64),
    pub sigma: (f64, f64),
    /// Positivity of eps/mu and nonnegativity of sigma over the samples.
    pub admissible: bool,
}

/// Scan eigenvalue bounds of a material field over sample points; reports
/// rather than fails.
pub fn check_regularity(mf: &MaterialField, samples: &[Vec3]) -> RegularityReport {
    let mut rep = RegularityReport {
        eps: (f64::INFINITY, f64::NEG_INFINITY),
        mu: (f64::INFINITY, f64::NEG_INFINITY),
        sigma: (f64::INFINITY, f64::NEG_INFINITY),
        admissible: true,
    };
    let update = |slot: &mut (f64, f64), t: &SymTensor3| {
        let ev = t.eigenvalues();
        slot.0 = slot.0.min(ev[0]);
        slot.1 = slot.1.max(ev[2]);
    };
    for &x in samples {
        if let Ok((e, m, s)) = mf.eval(x) {
            update(&mut rep.eps, &e);
            update(&mut rep.mu, &m);
            update(&mut rep.sigma, &s);
        }
    }
    rep.admissible = rep.eps.0 > 0.0 && rep.mu.0 > 0.0 && rep.sigma.0 >= 0.0;
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn map_default(rho: f64) -> BlowupMap {
        BlowupMap::new(rho, 1.0, 2.0).unwrap()
    }

    #[test]
    fn identity_on_outer_boundary() {
        let map = map_default(0.5);
        for dir in [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.3, -0.5, 0.81).normalize()] {
            let x = dir * 2.0;
            assert!((map.map(x) - x).norm() < 1e-14);
        }
    }

    #[test]
    fn seam_maps_to_inner_sphere() {
        let map = map_default(0.5);
        let x = Vec3::new(0.0, 0.5, 0.0);
        assert_relative_eq!(map.map(x).norm(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn affine_branch_midpoint() {
        // rho = 0.5, R_D = 1, R_Omega = 2: |x| = 1.25 maps to
        // 1 + (1.25 - 0.5) * (1 / 1.5) = 1.5.
        let map = map_default(0.5);
        let x = Vec3::new(1.25, 0.0, 0.0);
        assert_relative_eq!(map.map(x).norm(), 1.5, max_relative = 1e-14);
    }

    #[test]
    fn rejects_rho_outside_unit_interval() {
        assert!(matches!(BlowupMap::new(1.5, 1.0, 2.0), Err(Error::Domain(_))));
        assert!(matches!(BlowupMap::new(0.0, 1.0, 2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn seam_continuity() {
        for rho in [0.4, 0.2, 0.05] {
            let map = map_default(rho);
            for dir in [Vec3::x(), Vec3::new(-0.6, 0.8, 0.0), Vec3::new(0.1, 0.3, -0.95)] {
                assert!(map.seam_defect(dir) < 1e-12);
            }
        }
    }

    #[test]
    fn dilation_branch_jacobian() {
        let map = map_default(0.25);
        let x = Vec3::new(0.05, 0.02, -0.04);
        let j = map.jacobian(x).unwrap();
        assert!((j - Mat3::identity() * 4.0).norm() < 1e-14);
        assert!(j.determinant() > 0.0);
    }

    #[test]
    fn jacobian_matches_finite_differences_on_affine_branch() {
        let map = map_default(0.3);
        for x in [Vec3::new(1.2, 0.4, -0.3), Vec3::new(0.0, 0.0, 1.99), Vec3::new(-0.9, 0.9, 0.6)] {
            let j = map.jacobian(x).unwrap();
            let h = 1e-6;
            for c in 0..3 {
                let mut dx = Vec3::zeros();
                dx[c] = h;
                let fd = (map.map(x + dx) - map.map(x - dx)) / (2.0 * h);
                for r in 0..3 {
                    assert!(
                        (j[(r, c)] - fd[r]).abs() < 1e-6 * j.norm().max(1.0),
                        "entry ({r},{c}) at {x:?}"
                    );
                }
            }
            assert!(j.determinant() > 0.0);
        }
    }

    #[test]
    fn jacobian_refused_on_seam() {
        let map = map_default(0.5);
        let x = Vec3::new(0.5, 0.0, 0.0);
        assert!(matches!(map.jacobian(x), Err(Error::Interface(_))));
    }

    #[test]
    fn inverse_round_trip() {
        let map = map_default(0.37);
        for x in [Vec3::new(0.1, 0.05, -0.02), Vec3::new(1.0, -0.7, 0.4), Vec3::new(0.0, 1.8, 0.0)] {
            let y = map.map(x);
            let back = map.inverse(y).unwrap();
            assert!((back - x).norm() < 1e-12 * x.norm().max(1.0));
        }
    }

    #[test]
    fn dilation_pushforward_of_identity() {
        // Under x -> x / rho: DF = I/rho, |det| = rho^{-3}, so the
        // push-forward of the identity is rho I.
        let rho = 0.2;
        let map = map_default(rho);
        let id = |_: Vec3| SymTensor3::identity();
        let x = Vec3::new(0.3, -0.2, 0.1); // inside the blown-up image of the small ball
        assert!(x.norm() < 1.0);
        let t = push_forward(&id, &map, x).unwrap();
        assert!((t.matrix() - Mat3::identity() * rho).norm() < 1e-13);
    }

    #[test]
    fn dilation_pushforward_of_layer_conductivity() {
        // gamma0 rho^{-2} I pushes forward to gamma0 rho^{-1} I.
        let rho = 0.1;
        let map = map_default(rho);
        let gamma0 = 1.0;
        let sig = move |_: Vec3| SymTensor3::scalar(gamma0 * rho.powi(-2));
        let x = Vec3::new(0.4, 0.45, 0.0); // image of the layer region
        assert!(x.norm() > 0.5 && x.norm() < 1.0);
        let t = push_forward(&sig, &map, x).unwrap();
        assert!((t.matrix() - Mat3::identity() * (gamma0 / rho)).norm() < 1e-10);
    }

    proptest! {
        #[test]
        fn pushforward_preserves_symmetry_and_spd(
            seed in 0u64..500,
            rx in -1.9f64..1.9, ry in -1.9f64..1.9, rz in -1.9f64..1.9,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x = Vec3::new(rx, ry, rz);
            prop_assume!(x.norm() < 2.0 && x.norm() > 1e-3);
            let map = map_default(0.35);
            // Random SPD tensor a a^T + 0.1 I.
            let a = Mat3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let spd = SymTensor3::new(a * a.transpose() + Mat3::identity() * 0.1);
            let m = move |_: Vec3| spd;
            // Skip the seam tolerance band.
            let y = map.inverse(x).unwrap();
            prop_assume!((y.norm() - map.seam_radius()).abs() > 1e-6);
            let t = push_forward(&m, &map, x).unwrap();
            let sym_defect = (t.matrix() - t.matrix().transpose()).norm();
            prop_assert!(sym_defect < 1e-12);
            let ev = t.eigenvalues();
            prop_assert!(ev[0] > 0.0);
        }

        #[test]
        fn pushforward_functoriality_on_dilations(sa in 0.2f64..0.8, sb in 0.2f64..0.8) {
            // On the dilation branches composing maps multiplies the ratios:
            // (F_a o F_b)_* m = F_a_* (F_b_* m).
            let map_a = map_default(sa);
            let map_b = map_default(sb);
            let spd = SymTensor3::from_entries([2.0, 1.5, 1.0, 0.2, -0.1, 0.05]);
            let m = move |_: Vec3| spd;
            let x = Vec3::new(0.05, 0.03, -0.02);
            let inner = push_forward(&m, &map_b, x).unwrap();
            let inner_fn = move |_: Vec3| inner;
            let two_step = push_forward(&inner_fn, &map_a, x).unwrap();
            let map_ab = map_default(sa * sb);
            let one_step = push_forward(&m, &map_ab, x).unwrap();
            let scale = one_step.matrix().norm();
            prop_assert!((two_step.matrix() - one_step.matrix()).norm() < 1e-10 * scale);
        }
    }

    #[test]
    fn physical_medium_shell_has_no_conductivity() {
        let mf = build_physical_medium(
            0.3,
            LayerConstants::default(),
            CoreMaterial { eps: 5.0, mu: 2.0, sigma: 1.0 },
            1.0,
            2.0,
        )
        .unwrap();
        for x in [Vec3::new(1.5, 0.0, 0.0), Vec3::new(0.0, -1.2, 0.9)] {
            let (_, _, sigma) = mf.eval(x).unwrap();
            assert_eq!(sigma.matrix().norm(), 0.0);
        }
    }

    #[test]
    fn physical_medium_layer_conductivity_scaling() {
        let rho = 0.1;
        let mf = build_physical_medium(
            rho,
            LayerConstants::default(),
            CoreMaterial::vacuum(),
            1.0,
            2.0,
        )
        .unwrap();
        let x = Vec3::new(0.0, 0.7, 0.0);
        let (_, _, sigma) = mf.eval(x).unwrap();
        assert!((sigma.matrix() - Mat3::identity() * (1.0 / rho)).norm() < 1e-9);
    }

    #[test]
    fn physical_medium_near_identity_as_rho_tends_to_one() {
        let mf = build_physical_medium(
            0.999,
            LayerConstants { alpha0: 1.0, beta0: 1.0, gamma0: 0.0 },
            CoreMaterial::vacuum(),
            1.0,
            2.0,
        )
        .unwrap();
        for x in [Vec3::new(1.5, 0.0, 0.0), Vec3::new(0.3, 0.2, 0.0), Vec3::new(0.0, 0.9, 0.0)] {
            let (eps, mu, _) = mf.eval(x).unwrap();
            assert!((eps.matrix() - Mat3::identity()).norm() < 0.02, "eps at {x:?}");
            assert!((mu.matrix() - Mat3::identity()).norm() < 0.02);
        }
    }

    #[test]
    fn virtual_medium_regions() {
        let rho = 0.1;
        let mf = build_virtual_medium(
            rho,
            LayerConstants::default(),
            CoreMaterial { eps: 7.0, mu: 1.0, sigma: 3.0 },
            1.0,
            2.0,
            false,
        )
        .unwrap();
        // Vacuum outside the small ball.
        let (e, m, s) = mf.eval(Vec3::new(0.5, 0.0, 0.0)).unwrap();
        assert_eq!(e, SymTensor3::identity());
        assert_eq!(m, SymTensor3::identity());
        assert_eq!(s, SymTensor3::zero());
        // Layer: (1, 1, rho^{-2}) with the pull-back-consistent default.
        let (e, m, s) = mf.eval(Vec3::new(0.08, 0.0, 0.0)).unwrap();
        assert_eq!(e, SymTensor3::identity());
        assert_eq!(m, SymTensor3::identity());
        assert!((s.matrix() - Mat3::identity() * 100.0).norm() < 1e-10);
        // Core carries the content.
        let (e, _, _) = mf.eval(Vec3::new(0.03, 0.0, 0.0)).unwrap();
        assert!((e.matrix() - Mat3::identity() * 7.0).norm() < 1e-12);
    }

    #[test]
    fn virtual_medium_literal_mu_flag() {
        let rho = 0.1;
        let mf = build_virtual_medium(
            rho,
            LayerConstants::default(),
            CoreMaterial::vacuum(),
            1.0,
            2.0,
            true,
        )
        .unwrap();
        let (_, m, _) = mf.eval(Vec3::new(0.08, 0.0, 0.0)).unwrap();
        assert!((m.matrix() - Mat3::identity() * (rho * rho)).norm() < 1e-14);
    }

    #[test]
    fn interface_evaluation_rejected() {
        let mf = build_virtual_medium(
            0.2,
            LayerConstants::default(),
            CoreMaterial::vacuum(),
            1.0,
            2.0,
            false,
        )
        .unwrap();
        assert!(matches!(
            mf.eval(Vec3::new(0.2, 0.0, 0.0)),
            Err(Error::Interface(_))
        ));
    }

    #[test]
    fn regularity_of_vacuum_field() {
        let mf = build_virtual_medium(
            0.5,
            LayerConstants { alpha0: 1.0, beta0: 1.0, gamma0: 0.0 },
            CoreMaterial::vacuum(),
            1.0,
            2.0,
            false,
        )
        .unwrap();
        let samples: Vec<Vec3> = (1..20)
            .map(|i| Vec3::new(0.09 * i as f64, 0.01, 0.0))
            .collect();
        let rep = check_regularity(&mf, &samples);
        assert!(rep.admissible);
        assert_relative_eq!(rep.eps.0, 1.0, max_relative = 1e-12);
        assert_relative_eq!(rep.eps.1, 1.0, max_relative = 1e-12);
        assert_relative_eq!(rep.sigma.1, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn cloak_shell_degenerates_as_rho_shrinks() {
        // Smallest eigenvalue of the transformed permittivity near the
        // cloaked region boundary tends to zero with rho.
        let sample = Vec3::new(1.02, 0.0, 0.0);
        let mut prev = f64::INFINITY;
        for rho in [0.4, 0.2, 0.1, 0.05] {
            let mf = build_physical_medium(
                rho,
                LayerConstants::default(),
                CoreMaterial::vacuum(),
                1.0,
                2.0,
            )
            .unwrap();
            let (eps, _, _) = mf.eval(sample).unwrap();
            let ev = eps.eigenvalues();
            assert!(ev[0] < prev);
            prev = ev[0];
        }
        assert!(prev < 0.05, "smallest eigenvalue {prev}");
    }

    #[test]
    fn layer_sigma_eigenvalues_report() {
        let rho = 0.1;
        let mf = build_physical_medium(
            rho,
            LayerConstants::default(),
            CoreMaterial::vacuum(),
            1.0,
            2.0,
        )
        .unwrap();
        let samples = vec![Vec3::new(0.7, 0.0, 0.0), Vec3::new(0.0, 0.6, 0.3)];
        let rep = check_regularity(&mf, &samples);
        assert_relative_eq!(rep.sigma.1, 10.0, max_relative = 1e-9);
    }

    #[test]
    fn pull_back_of_constant_field_under_dilation() {
        let rho = 0.25;
        let map = map_default(rho);
        let e = |_: Vec3| CVec3::new(1.0.into(), 2.0.into(), (-0.5).into());
        let y = Vec3::new(0.04, 0.01, 0.02);
        let v = pull_back_field(&e, &map, y).unwrap();
        let expect = e(y) / Complex64::from(rho);
        assert!((v - expect).norm() < 1e-13);
    }

    #[test]
    fn pull_back_identity_map_limit() {
        let map = BlowupMap::identity_like(1.0, 2.0).unwrap();
        let e = |x: Vec3| crate::cvec3_from_real(x);
        let y = Vec3::new(1.4, -0.2, 0.3);
        let v = pull_back_field(&e, &map, y).unwrap();
        assert!((v - e(y)).norm() < 1e-9);
    }

    #[test]
    fn pulled_back_mode_satisfies_transformed_maxwell() {
        // Manufactured single-mode vacuum solution (E0, H0) in the image
        // coordinates; its pull-back must satisfy curl E' = i omega mu' H'
        // with the pulled-back tensors. The finite-difference curl residual
        // must shrink at first order or better in the step.
        use crate::mie::expansion::VshExpansion;
        use crate::mie::{solve_layered_sphere, LayeredSphereSpec};
        let omega = 1.0;
        let spec = LayeredSphereSpec::vacuum(2.0, omega).unwrap();
        let psi = VshExpansion::single_grad(2, 2.0, 1, 0);
        let sol = solve_layered_sphere(&spec, &psi).unwrap();
        let map = map_default(0.5);
        let y0 = Vec3::new(1.1, 0.35, -0.4); // affine branch, away from the seam

        let e_field = |x: Vec3| sol.eval_e(x);
        let h_field = |x: Vec3| sol.eval_h(x);
        // Pulled-back permeability (F^{-1})_* I at y: |det DF| (DF^T DF)^{-1}.
        let df = map.jacobian(y0).unwrap();
        let det = df.determinant();
        let gram = df.transpose() * df;
        let mu_pb = gram.try_inverse().unwrap() * det.abs();

        let mut residuals = Vec::new();
        for &h in &[2e-3, 1e-3, 5e-4] {
            let mut curl = CVec3::zeros();
            for (i, j, k) in [(0usize, 1usize, 2usize), (1, 2, 0), (2, 0, 1)] {
                let mut ej = Vec3::zeros();
                ej[j] = h;
                let mut ek = Vec3::zeros();
                ek[k] = h;
                let d_j = (pull_back_field(&e_field, &map, y0 + ej).unwrap()[k]
                    - pull_back_field(&e_field, &map, y0 - ej).unwrap()[k])
                    / Complex64::from(2.0 * h);
                let d_k = (pull_back_field(&e_field, &map, y0 + ek).unwrap()[j]
                    - pull_back_field(&e_field, &map, y0 - ek).unwrap()[j])
                    / Complex64::from(2.0 * h);
                curl[i] = d_j - d_k;
            }
            let hp = pull_back_field(&h_field, &map, y0).unwrap();
            let mu_hp_re = mu_pb * Vec3::new(hp.x.re, hp.y.re, hp.z.re);
            let mu_hp_im = mu_pb * Vec3::new(hp.x.im, hp.y.im, hp.z.im);
            let mu_hp = CVec3::new(
                Complex64::new(mu_hp_re.x, mu_hp_im.x),
                Complex64::new(mu_hp_re.y, mu_hp_im.y),
                Complex64::new(mu_hp_re.z, mu_hp_im.z),
            );
            let rhs = mu_hp * Complex64::new(0.0, omega);
            residuals.push((curl - rhs).norm());
        }
        let scale = pull_back_field(&h_field, &map, y0).unwrap().norm() * omega;
        assert!(residuals[2] < 1e-4 * scale, "residuals {residuals:?}");
        // First order or better in the step.
        assert!(residuals[2] < residuals[0] * 0.6, "{residuals:?}");
    }

    #[test]
    fn core_bounds_validated() {
        let bad = CoreMaterial { eps: -1.0, mu: 1.0, sigma: 0.0 };
        assert!(build_virtual_medium(0.2, LayerConstants::default(), bad, 1.0, 2.0, false).is_err());
    }
}
