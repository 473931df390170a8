//! Semi-analytic Maxwell solver for concentric layered spheres.
//!
//! Fields in each homogeneous isotropic layer split per mode (n, m) and
//! polarization into spherical vector wave functions
//!
//!   M(k; x) = f_n(kr) (Grad Y_n^m x r_hat),
//!   N(k; x) = n(n+1) f_n(kr)/(kr) Y_n^m r_hat + [kr f_n(kr)]'/(kr) Grad Y_n^m,
//!
//! with f a spherical Bessel (regular) or Hankel (outgoing) function and
//! Grad the unit-sphere surface gradient. TE modes carry tangential E of
//! rotated type, TM modes of gradient type, so polarizations decouple and the
//! transmission problem reduces to one small linear system per (n, pol).
//! Enforcing tangential E and H continuity at every interface, regularity at
//! the origin and the tangential-E boundary condition at the outer sphere
//! determines all layer coefficients.

use crate::error::{Error, Result};
use crate::mie::bessel::{sph_h1_ladder, sph_j_ladder, BesselLadder};
use crate::mie::expansion::{mode_index, modes, n_modes, VshExpansion};
use crate::mie::sh::sh_tables;
use crate::{rcross, CVec3, Vec3};
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Constant isotropic material data of one spherical layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerMedium {
    pub eps: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl LayerMedium {
    pub fn vacuum() -> Self {
        LayerMedium { eps: 1.0, mu: 1.0, sigma: 0.0 }
    }

    /// Complex effective permittivity eps + i sigma / omega.
    pub fn eps_eff(&self, omega: f64) -> Complex64 {
        Complex64::new(self.eps, self.sigma / omega)
    }

    /// Layer wavenumber omega sqrt(mu (eps + i sigma/omega)), branch Im k >= 0.
    pub fn wavenumber(&self, omega: f64) -> Complex64 {
        let k = (self.eps_eff(omega) * self.mu).sqrt() * omega;
        if k.im < 0.0 {
            -k
        } else {
            k
        }
    }
}

/// Concentric layered ball: layer i occupies radii[i-1] < r < radii[i]
/// (radii[-1] = 0), and radii.last() is the outer boundary sphere.
#[derive(Debug, Clone)]
pub struct LayeredSphereSpec {
    pub radii: Vec<f64>,
    pub layers: Vec<LayerMedium>,
    pub omega: f64,
}

/// TE: tangential E of rotated type. TM: tangential E of gradient type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarization {
    Te,
    Tm,
}

impl LayeredSphereSpec {
    pub fn new(radii: Vec<f64>, layers: Vec<LayerMedium>, omega: f64) -> Result<Self> {
        if radii.is_empty() || radii.len() != layers.len() {
            return Err(Error::Validation(
                "need one layer per interface radius, innermost first".into(),
            ));
        }
        if !(omega > 0.0) {
            return Err(Error::Domain(format!("frequency must be > 0, got {omega}")));
        }
        let mut prev = 0.0;
        for &r in &radii {
            if !(r > prev) {
                return Err(Error::Validation("radii must be strictly increasing and positive".into()));
            }
            prev = r;
        }
        for l in &layers {
            if !(l.eps > 0.0) || !(l.mu > 0.0) || l.sigma < 0.0 {
                return Err(Error::Validation(
                    "layers need eps > 0, mu > 0, sigma >= 0".into(),
                ));
            }
        }
        Ok(LayeredSphereSpec { radii, layers, omega })
    }

    /// Homogeneous vacuum ball of the given radius.
    pub fn vacuum(radius: f64, omega: f64) -> Result<Self> {
        LayeredSphereSpec::new(vec![radius], vec![LayerMedium::vacuum()], omega)
    }

    pub fn boundary_radius(&self) -> f64 {
        *self.radii.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    fn layer_of(&self, r: f64) -> usize {
        for (i, &ri) in self.radii.iter().enumerate() {
            if r <= ri {
                return i;
            }
        }
        self.layers.len() - 1
    }
}

/// Per-layer coefficients (regular, outgoing) of one mode and polarization.
pub type LayerCoeffs = Vec<(Complex64, Complex64)>;

/// Ladders of j and h at one radial argument.
struct RadialBasis {
    j: BesselLadder,
    h: Option<BesselLadder>,
    k: Complex64,
    r: f64,
}

impl RadialBasis {
    fn new(n_max: usize, k: Complex64, r: f64, with_h: bool) -> Result<Self> {
        let z = k * r;
        Ok(RadialBasis {
            j: sph_j_ladder(n_max, z)?,
            h: if with_h { Some(sph_h1_ladder(n_max, z)?) } else { None },
            k,
            r,
        })
    }

    /// (E row entry, H row entry) for the regular and outgoing families.
    ///
    /// TE rows: E entry r f_n(kr) multiplies the rotated harmonic, H entry
    /// [kr f]'/(i omega mu) the gradient harmonic. TM rows: E entry
    /// [kr f]'/k (gradient), H entry (k/(i omega mu)) r f_n (rotated).
    fn entries(
        &self,
        n: usize,
        pol: Polarization,
        omega: f64,
        mu: f64,
    ) -> ((Complex64, Complex64), (Complex64, Complex64)) {
        let iwm = Complex64::new(0.0, omega * mu);
        let fj = self.j.value(n);
        let dj = self.j.riccati_deriv(n);
        let (fh, dh) = match &self.h {
            Some(h) => (h.value(n), h.riccati_deriv(n)),
            None => (Complex64::ZERO, Complex64::ZERO),
        };
        match pol {
            Polarization::Te => {
                let e = (fj * self.r, fh * self.r);
                let h = (dj / iwm, dh / iwm);
                (e, h)
            }
            Polarization::Tm => {
                let e = (dj / self.k, dh / self.k);
                let hrow = self.k / iwm * self.r;
                let h = (fj * hrow, fh * hrow);
                (e, h)
            }
        }
    }
}

/// Solve one (n, pol) transmission problem with unit tangential-E boundary
/// coefficient. Returns per-layer (regular, outgoing) coefficients.
fn solve_unit_mode(
    spec: &LayeredSphereSpec,
    bases: &[(RadialBasis, Option<RadialBasis>)],
    n: usize,
    pol: Polarization,
) -> Result<LayerCoeffs> {
    let nl = spec.n_layers();
    let dim = 2 * nl - 1;
    let mut a = DMatrix::<Complex64>::zeros(dim, dim);
    let mut b = nalgebra::DVector::<Complex64>::zeros(dim);

    // Unknown layout: layer 0 contributes its regular coefficient only,
    // each further layer a (regular, outgoing) pair.
    let col = |l: usize| if l == 0 { 0 } else { 2 * l - 1 };
    let ncols = |l: usize| if l == 0 { 1 } else { 2 };

    let mut row = 0;
    for i in 0..nl - 1 {
        // Continuity of tangential E and tangential H at radii[i].
        let (inner, outer_opt) = &bases[i];
        let outer = outer_opt.as_ref().expect("inner interface basis");
        let (e_in, h_in) = inner.entries(n, pol, spec.omega, spec.layers[i].mu);
        let (e_out, h_out) = outer.entries(n, pol, spec.omega, spec.layers[i + 1].mu);
        for (vals, r) in [((e_in, e_out), row), ((h_in, h_out), row + 1)] {
            let ((vin, vout), r) = (vals, r);
            a[(r, col(i))] = vin.0;
            if ncols(i) == 2 {
                a[(r, col(i) + 1)] = vin.1;
            }
            a[(r, col(i + 1))] = -vout.0;
            if ncols(i + 1) == 2 {
                a[(r, col(i + 1) + 1)] = -vout.1;
            }
        }
        row += 2;
    }
    // Boundary condition at the outer sphere.
    let (bnd, _) = &bases[nl - 1];
    let (e_b, _) = bnd.entries(n, pol, spec.omega, spec.layers[nl - 1].mu);
    a[(row, col(nl - 1))] = e_b.0;
    if ncols(nl - 1) == 2 {
        a[(row, col(nl - 1) + 1)] = e_b.1;
    }
    b[row] = Complex64::ONE;

    // Equilibrate rows then columns so pivot ratios reflect conditioning.
    let mut col_scale = vec![1.0f64; dim];
    for r in 0..dim {
        let m = (0..dim).map(|c| a[(r, c)].norm()).fold(0.0, f64::max);
        if m > 0.0 {
            for c in 0..dim {
                a[(r, c)] /= m;
            }
            b[r] /= m;
        }
    }
    for c in 0..dim {
        let m = (0..dim).map(|r| a[(r, c)].norm()).fold(0.0, f64::max);
        if m > 0.0 {
            col_scale[c] = m;
            for r in 0..dim {
                a[(r, c)] /= m;
            }
        }
    }

    let lu = a.clone().full_piv_lu();
    let diag = lu.u().diagonal();
    let (mut pmin, mut pmax) = (f64::INFINITY, 0.0f64);
    for d in diag.iter() {
        pmin = pmin.min(d.norm());
        pmax = pmax.max(d.norm());
    }
    if pmin == 0.0 || pmax / pmin > 1e14 {
        return Err(Error::Resonance(format!(
            "singular modal transfer matrix at n = {n}, {:?} (pivot ratio {:.2e})",
            pol,
            pmax / pmin.max(1e-300)
        )));
    }
    let mut x = lu
        .solve(&b)
        .ok_or_else(|| Error::Resonance(format!("modal solve failed at n = {n}, {:?}", pol)))?;
    // One round of iterative refinement keeps interface residuals near
    // machine precision even when the equilibrated system is mildly
    // ill-conditioned.
    let r = &b - &a * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }

    let mut out = Vec::with_capacity(nl);
    for l in 0..nl {
        let reg = x[col(l)] / col_scale[col(l)];
        let og = if ncols(l) == 2 {
            x[col(l) + 1] / col_scale[col(l) + 1]
        } else {
            Complex64::ZERO
        };
        out.push((reg, og));
    }
    Ok(out)
}

/// Radial bases per layer: at the layer's inner-side outer radius and, for
/// interface layers, at the outer-side radius of the same interface.
fn build_bases(
    spec: &LayeredSphereSpec,
    n_max: usize,
) -> Result<Vec<(RadialBasis, Option<RadialBasis>)>> {
    let nl = spec.n_layers();
    let mut bases = Vec::with_capacity(nl);
    for i in 0..nl {
        let r = spec.radii[i];
        let k_in = spec.layers[i].wavenumber(spec.omega);
        let with_h_in = i > 0;
        let inner = RadialBasis::new(n_max, k_in, r, with_h_in)?;
        let outer = if i + 1 < nl {
            let k_out = spec.layers[i + 1].wavenumber(spec.omega);
            Some(RadialBasis::new(n_max, k_out, r, true)?)
        } else {
            None
        };
        bases.push((inner, outer));
    }
    Ok(bases)
}

/// All unit-mode solutions of a layered sphere up to degree n_max.
#[derive(Debug, Clone)]
pub struct UnitModes {
    pub n_max: usize,
    /// Per n (index n-1), layer coefficients for unit TE boundary data.
    pub te: Vec<LayerCoeffs>,
    /// Per n (index n-1), layer coefficients for unit TM boundary data.
    pub tm: Vec<LayerCoeffs>,
}

pub fn solve_unit_modes(spec: &LayeredSphereSpec, n_max: usize) -> Result<UnitModes> {
    let bases = build_bases(spec, n_max)?;
    let mut te = Vec::with_capacity(n_max);
    let mut tm = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        te.push(solve_unit_mode(spec, &bases, n, Polarization::Te)?);
        tm.push(solve_unit_mode(spec, &bases, n, Polarization::Tm)?);
    }
    Ok(UnitModes { n_max, te, tm })
}

/// Full solution of the layered-sphere problem for given tangential-E
/// boundary data nu x E = psi on the outer sphere.
#[derive(Debug, Clone)]
pub struct LayeredSolution {
    pub spec: LayeredSphereSpec,
    pub unit: UnitModes,
    /// Boundary data nu x E as an expansion on the outer sphere.
    pub psi: VshExpansion,
}

/// Solve the layered sphere with boundary data psi = nu x E on the outer
/// sphere given as a harmonic expansion.
pub fn solve_layered_sphere(spec: &LayeredSphereSpec, psi: &VshExpansion) -> Result<LayeredSolution> {
    if (psi.radius - spec.boundary_radius()).abs() > 1e-12 * spec.boundary_radius() {
        return Err(Error::Validation(format!(
            "boundary data lives on radius {}, spec boundary is {}",
            psi.radius,
            spec.boundary_radius()
        )));
    }
    let unit = solve_unit_modes(spec, psi.n_max)?;
    Ok(LayeredSolution { spec: spec.clone(), unit, psi: psi.clone() })
}

impl LayeredSolution {
    /// TE/TM drive coefficients of mode (n, m): psi = (p, q) in the
    /// (gradient, rotated) basis gives tangential E coefficients
    /// b_E = p (TE) and a_E = -q (TM).
    fn drives(&self, n: usize, m: i64) -> (Complex64, Complex64) {
        let k = mode_index(n, m);
        (self.psi.grad[k], -self.psi.rot[k])
    }

    /// Electric field at an interior point.
    pub fn eval_e(&self, x: Vec3) -> CVec3 {
        self.eval_fields(x).0
    }

    /// Magnetic field at an interior point.
    pub fn eval_h(&self, x: Vec3) -> CVec3 {
        self.eval_fields(x).1
    }

    /// (E, H) at an interior point by modal synthesis.
    pub fn eval_fields(&self, x: Vec3) -> (CVec3, CVec3) {
        let r = x.norm().max(1e-13);
        let dir = if x.norm() > 1e-13 { x / x.norm() } else { Vec3::new(0.0, 0.0, 1.0) };
        let l = self.spec.layer_of(r);
        let layer = self.spec.layers[l];
        let k = layer.wavenumber(self.spec.omega);
        let z = k * r;
        let n_max = self.psi.n_max;
        let j = sph_j_ladder(n_max, z).expect("j ladder");
        let h = if l > 0 { Some(sph_h1_ladder(n_max, z).expect("h ladder")) } else { None };
        let tables = sh_tables(n_max, dir);
        let scale_h = k / Complex64::new(0.0, self.spec.omega * layer.mu);

        let mut e = CVec3::zeros();
        let mut hfield = CVec3::zeros();
        for (n, m) in modes(n_max) {
            let (p_drive, a_drive) = self.drives(n, m);
            if p_drive == Complex64::ZERO && a_drive == Complex64::ZERO {
                continue;
            }
            let y = tables.y(n, m);
            let grad = tables.grad_y(n, m);
            let rot = rcross(&(-dir), &grad); // grad x dir
            let nn = (n * (n + 1)) as f64;
            let dirc = crate::cvec3_from_real(dir);

            // Basis fields for f = j and (if present) f = h.
            let m_j = rot * j.value(n);
            let n_j = dirc * (nn * j.value(n) / z * y) + grad * (j.riccati_deriv(n) / z);
            let (m_h, n_h) = match &h {
                Some(hl) => (
                    rot * hl.value(n),
                    dirc * (nn * hl.value(n) / z * y) + grad * (hl.riccati_deriv(n) / z),
                ),
                None => (CVec3::zeros(), CVec3::zeros()),
            };

            let (te_reg, te_out) = self.unit.te[n - 1][l];
            let (tm_reg, tm_out) = self.unit.tm[n - 1][l];

            // TE: E = c M, H = (k / i omega mu) c N.
            let c_reg = p_drive * te_reg;
            let c_out = p_drive * te_out;
            e += m_j * c_reg + m_h * c_out;
            hfield += (n_j * c_reg + n_h * c_out) * scale_h;

            // TM: E = d N, H = (k / i omega mu) d M.
            let d_reg = a_drive * tm_reg;
            let d_out = a_drive * tm_out;
            e += n_j * d_reg + n_h * d_out;
            hfield += (m_j * d_reg + m_h * d_out) * scale_h;
        }
        (e, hfield)
    }

    /// Tangential trace coefficients (a_E, b_E, a_H, b_H) of mode n at radius
    /// r evaluated inside layer `l`.
    pub fn mode_trace_coeffs(
        &self,
        n: usize,
        l: usize,
        r: f64,
    ) -> Result<(Complex64, Complex64, Complex64, Complex64)> {
        let layer = self.spec.layers[l];
        let k = layer.wavenumber(self.spec.omega);
        let basis = RadialBasis::new(n, k, r, l > 0)?;
        let (e_te, h_te) = basis.entries(n, Polarization::Te, self.spec.omega, layer.mu);
        let (e_tm, h_tm) = basis.entries(n, Polarization::Tm, self.spec.omega, layer.mu);
        let (te_reg, te_out) = self.unit.te[n - 1][l];
        let (tm_reg, tm_out) = self.unit.tm[n - 1][l];
        // Unit-drive coefficients; caller applies the per-m drives.
        let b_e = e_te.0 * te_reg + e_te.1 * te_out;
        let a_h = h_te.0 * te_reg + h_te.1 * te_out;
        let a_e = e_tm.0 * tm_reg + e_tm.1 * tm_out;
        let b_h = h_tm.0 * tm_reg + h_tm.1 * tm_out;
        Ok((a_e, b_e, a_h, b_h))
    }

    /// nu x H on the outer sphere as a harmonic expansion.
    pub fn nu_cross_h_boundary(&self) -> Result<VshExpansion> {
        let n_max = self.psi.n_max;
        let r = self.spec.boundary_radius();
        let l = self.spec.n_layers() - 1;
        let mut out = VshExpansion::zero(n_max, r);
        for n in 1..=n_max {
            let (_, _, a_h_unit, b_h_unit) = self.mode_trace_coeffs(n, l, r)?;
            for m in -(n as i64)..=(n as i64) {
                let k = mode_index(n, m);
                let (p_drive, a_drive) = self.drives(n, m);
                let a_h = p_drive * a_h_unit;
                let b_h = a_drive * b_h_unit;
                // nu x (a Grad + b Rot) = b Grad - a Rot.
                out.grad[k] = b_h;
                out.rot[k] = -a_h;
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Admittance matrices
// ---------------------------------------------------------------------------

/// Finite admittance matrix in the truncated tangential-harmonic basis,
/// block-diagonal over modes for spherically symmetric media.
#[derive(Debug, Clone)]
pub struct AdmittanceMatrix {
    pub n_max: usize,
    pub radius: f64,
    /// q_H / p per degree n (index n-1): rotated response to gradient drive.
    pub lam_te: Vec<Complex64>,
    /// p_H / q per degree n: gradient response to rotated drive.
    pub lam_tm: Vec<Complex64>,
}

impl AdmittanceMatrix {
    /// Apply to an expansion of nu x E, producing the expansion of nu x H.
    pub fn apply(&self, psi: &VshExpansion) -> Result<VshExpansion> {
        if psi.n_max > self.n_max {
            return Err(Error::Validation("expansion exceeds admittance truncation".into()));
        }
        let mut out = VshExpansion::zero(psi.n_max, psi.radius);
        for (n, m) in modes(psi.n_max) {
            let k = mode_index(n, m);
            out.grad[k] = self.lam_tm[n - 1] * psi.rot[k];
            out.rot[k] = self.lam_te[n - 1] * psi.grad[k];
        }
        Ok(out)
    }

    /// Dense matrix on the coefficient vector [grad; rot], flat mode order.
    pub fn to_matrix(&self) -> ndarray::Array2<Complex64> {
        let k = n_modes(self.n_max);
        let mut a = ndarray::Array2::<Complex64>::zeros((2 * k, 2 * k));
        for (n, m) in modes(self.n_max) {
            let idx = mode_index(n, m);
            a[(idx, k + idx)] = self.lam_tm[n - 1];
            a[(k + idx, idx)] = self.lam_te[n - 1];
        }
        a
    }
}

/// Admittance matrix of a layered sphere: for each degree and polarization,
/// solve with unit boundary data and read off nu x H.
pub fn admittance_sphere(spec: &LayeredSphereSpec, n_max: usize) -> Result<AdmittanceMatrix> {
    let unit = solve_unit_modes(spec, n_max)?;
    let r = spec.boundary_radius();
    let l = spec.n_layers() - 1;
    let layer = spec.layers[l];
    let k = layer.wavenumber(spec.omega);
    let basis = RadialBasis::new(n_max, k, r, l > 0)?;
    let mut lam_te = Vec::with_capacity(n_max);
    let mut lam_tm = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let (_, h_te) = basis.entries(n, Polarization::Te, spec.omega, layer.mu);
        let (_, h_tm) = basis.entries(n, Polarization::Tm, spec.omega, layer.mu);
        let (te_reg, te_out) = unit.te[n - 1][l];
        let (tm_reg, tm_out) = unit.tm[n - 1][l];
        let a_h = h_te.0 * te_reg + h_te.1 * te_out;
        let b_h = h_tm.0 * tm_reg + h_tm.1 * tm_out;
        // nu x H: gradient part b_H responds to TM drive q (a_E = -q),
        // rotated part -a_H responds to TE drive p.
        lam_te.push(-a_h);
        lam_tm.push(-b_h);
    }
    Ok(AdmittanceMatrix { n_max, radius: r, lam_te, lam_tm })
}

/// Free-space admittance map of the vacuum ball.
pub fn free_space_admittance(radius: f64, omega: f64, n_max: usize) -> Result<AdmittanceMatrix> {
    admittance_sphere(&LayeredSphereSpec::vacuum(radius, omega)?, n_max)
}

// ---------------------------------------------------------------------------
// Interior eigenvalue proximity
// ---------------------------------------------------------------------------

/// Result of the interior-resonance scan for the vacuum ball.
#[derive(Debug, Clone)]
pub struct EigenvalueCheck {
    pub is_eigenvalue: bool,
    /// Smallest modal determinant magnitude over n <= n_max and both
    /// polarizations.
    pub min_det: f64,
    pub worst_n: usize,
    pub worst_pol: Polarization,
}

/// Check whether omega sits within `tol` of an interior Maxwell eigenvalue of
/// the vacuum ball of radius r.
///
/// TE resonances are zeros of j_n(omega r), TM resonances zeros of the
/// Riccati derivative [z j_n(z)]' at z = omega r. The reported determinant is
/// the scale-invariant Newton measure |f| / (|z f'| + |f|), which is the
/// relative distance in z to the nearest zero and stays O(1) in the static
/// limit where j_n itself vanishes without a resonance.
pub fn is_em_eigenvalue(omega: f64, radius: f64, n_max: usize, tol: f64) -> Result<EigenvalueCheck> {
    if !(omega > 0.0) {
        return Err(Error::Domain("frequency must be > 0".into()));
    }
    let z = Complex64::from(omega * radius);
    let j = sph_j_ladder(n_max, z)?;
    let mut min_det = f64::INFINITY;
    let mut worst_n = 1;
    let mut worst_pol = Polarization::Te;
    for n in 1..=n_max {
        let f_te = j.value(n);
        let df_te = j.deriv(n);
        let det_te = f_te.norm() / ((z * df_te).norm() + f_te.norm());
        // Riccati-Bessel equation: [z j_n]'' = (n(n+1)/z^2 - 1) z j_n.
        let f_tm = j.riccati_deriv(n);
        let ddf_tm = ((n * (n + 1)) as f64 / (z * z) - 1.0) * z * j.value(n);
        let det_tm = f_tm.norm() / ((z * ddf_tm).norm() + f_tm.norm());
        if det_te < min_det {
            min_det = det_te;
            worst_n = n;
            worst_pol = Polarization::Te;
        }
        if det_tm < min_det {
            min_det = det_tm;
            worst_n = n;
            worst_pol = Polarization::Tm;
        }
    }
    Ok(EigenvalueCheck { is_eigenvalue: min_det < tol, min_det, worst_n, worst_pol })
}

// ---------------------------------------------------------------------------
// Outgoing exterior solutions (PEC scattering oracle and far fields)
// ---------------------------------------------------------------------------

/// Purely outgoing Maxwell field in the exterior of a sphere.
#[derive(Debug, Clone)]
pub struct OutgoingWave {
    pub omega: f64,
    pub n_max: usize,
    /// TE coefficients (of M with Hankel radial factor), flat mode order.
    pub te: Vec<Complex64>,
    /// TM coefficients (of N with Hankel radial factor).
    pub tm: Vec<Complex64>,
}

impl OutgoingWave {
    /// Electric field at an exterior point.
    pub fn eval_e(&self, x: Vec3) -> CVec3 {
        let r = x.norm();
        let dir = x / r;
        let z = Complex64::from(self.omega) * r;
        let h = sph_h1_ladder(self.n_max, z).expect("h ladder");
        let tables = sh_tables(self.n_max, dir);
        let mut e = CVec3::zeros();
        for (n, m) in modes(self.n_max) {
            let k = mode_index(n, m);
            let (c, d) = (self.te[k], self.tm[k]);
            if c == Complex64::ZERO && d == Complex64::ZERO {
                continue;
            }
            let y = tables.y(n, m);
            let grad = tables.grad_y(n, m);
            let rot = rcross(&(-dir), &grad);
            let nn = (n * (n + 1)) as f64;
            let dirc = crate::cvec3_from_real(dir);
            e += rot * (h.value(n) * c);
            e += (dirc * (nn * h.value(n) / z * y) + grad * (h.riccati_deriv(n) / z)) * d;
        }
        e
    }

    /// Far-field amplitude: E ~ F(x_hat) e^{i omega r} / r as r -> infinity.
    pub fn far_field(&self, dir: Vec3) -> CVec3 {
        let tables = sh_tables(self.n_max, dir);
        let mut f = CVec3::zeros();
        let mi = Complex64::new(0.0, -1.0);
        for (n, m) in modes(self.n_max) {
            let k = mode_index(n, m);
            let (c, d) = (self.te[k], self.tm[k]);
            if c == Complex64::ZERO && d == Complex64::ZERO {
                continue;
            }
            let grad = tables.grad_y(n, m);
            let rot = rcross(&(-dir), &grad);
            let phase_m = mi.powu(n as u32 + 1);
            let phase_n = mi.powu(n as u32);
            f += rot * (c * phase_m / self.omega) + grad * (d * phase_n / self.omega);
        }
        f
    }
}

/// Per-mode solution of the vacuum annulus problem: nu x U = psi on the outer
/// sphere, nu x U = 0 on the inner sphere. Returns nu x V on the outer
/// sphere. Independent of the layer-potential route and used to validate it.
pub fn vsh_annulus_nu_cross_v(
    psi: &VshExpansion,
    omega: f64,
    r_inner: f64,
    r_outer: f64,
) -> Result<VshExpansion> {
    if !(r_inner > 0.0 && r_outer > r_inner) {
        return Err(Error::Validation("need 0 < r_inner < r_outer".into()));
    }
    let n_max = psi.n_max;
    let k = Complex64::from(omega);
    let bi = RadialBasis::new(n_max, k, r_inner, true)?;
    let bo = RadialBasis::new(n_max, k, r_outer, true)?;
    let mut out = VshExpansion::zero(n_max, r_outer);
    for n in 1..=n_max {
        let mut lam = [Complex64::ZERO; 2];
        for (slot, pol) in [(0usize, Polarization::Te), (1, Polarization::Tm)] {
            let (e_in, _) = bi.entries(n, pol, omega, 1.0);
            let (e_out, h_out) = bo.entries(n, pol, omega, 1.0);
            // Solve [e_in.0 e_in.1; e_out.0 e_out.1] (cj, ch) = (0, 1).
            let det = e_in.0 * e_out.1 - e_in.1 * e_out.0;
            if det.norm() < 1e-300 {
                return Err(Error::Resonance(format!("annulus mode n = {n} singular")));
            }
            let cj = -e_in.1 / det;
            let ch = e_in.0 / det;
            lam[slot] = h_out.0 * cj + h_out.1 * ch;
        }
        for m in -(n as i64)..=(n as i64) {
            let idx = mode_index(n, m);
            // Drives: TE from the gradient part p, TM from a_E = -q.
            let a_h = psi.grad[idx] * lam[0];
            let b_h = -psi.rot[idx] * lam[1];
            out.grad[idx] = b_h;
            out.rot[idx] = -a_h;
        }
    }
    Ok(out)
}

/// Scattered wave of a perfectly conducting sphere: nu x (E_inc + E_sc) = 0
/// on the sphere, so the scattered trace is the negated incident trace.
pub fn pec_scattered_wave(
    incident_trace: &VshExpansion,
    omega: f64,
) -> Result<OutgoingWave> {
    let r = incident_trace.radius;
    let n_max = incident_trace.n_max;
    let z = Complex64::from(omega * r);
    let h = sph_h1_ladder(n_max, z)?;
    let mut te = vec![Complex64::ZERO; n_modes(n_max)];
    let mut tm = vec![Complex64::ZERO; n_modes(n_max)];
    for (n, m) in modes(n_max) {
        let k = mode_index(n, m);
        // Scattered boundary condition nu x E_sc = -(p, q) of the incident trace.
        let p = -incident_trace.grad[k];
        let q = -incident_trace.rot[k];
        // TE: b_E = p = c r h_n(z); TM: a_E = -q = d [z h]' / (omega).
        te[k] = p / (h.value(n) * r);
        tm[k] = -q * Complex64::from(omega) / h.riccati_deriv(n);
    }
    Ok(OutgoingWave { omega, n_max, te, tm })
}
