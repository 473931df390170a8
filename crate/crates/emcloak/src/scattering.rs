//! Exterior radiating and bounded-annulus Maxwell solvers via layer
//! potentials.
//!
//! The exterior problem uses the curl-single-layer ansatz
//! U = curl int G a with the jump relation (I + M) a = 2 phi on the obstacle
//! boundary. The annulus problem couples densities on both boundaries through
//! the two-by-two block system
//!
//!   (I + M_outer) a1 - M_{inner->outer} a2 = 2 P1,
//!   M_{outer->inner} a1 + (I - M_inner) a2 = 2 P2,
//!
//! where P1, P2 apply the electric dipole operator to the prescribed
//! tangential trace on the outer boundary. Scaling the obstacle by tau is
//! algebraically the same discrete system as working on the reference surface
//! with wavenumber omega tau, which is what the small-obstacle estimates use.

use crate::bie::{
    assemble_electric_dipole_cross, assemble_electric_dipole_self, assemble_magnetic_dipole,
    assemble_magnetic_dipole_cross, eval_curl_curl_layer, eval_curl_layer,
    eval_electric_dipole_potential, far_field_curl_layer, frame_components,
    trace_from_components, NearQuadrature, TargetSet,
};
use crate::error::{Error, Result};
use crate::geometry::{scale_mesh, SurfaceMesh};
use crate::mie::{solve_layered_sphere, LayeredSolution, LayeredSphereSpec, VshExpansion};
use crate::trace::TangentialTrace;
use crate::{CVec3, Vec3};
use ndarray::{s, Array1, Array2};
use ndarray_linalg::{FactorizeInto, ReciprocalConditionNum, Solve};
use num_complex::Complex64;

/// Conditioning threshold: beyond this the small-obstacle regime (or the
/// resonance-free assumption) is considered violated.
const COND_LIMIT: f64 = 1e12;

/// Result of an exterior radiating solve on one obstacle surface.
pub struct ScatterSolution {
    pub mesh: SurfaceMesh,
    pub density: TangentialTrace,
    pub omega: f64,
    /// Relative linear-system residual.
    pub residual: f64,
    /// Reciprocal condition estimate of the system matrix.
    pub rcond: f64,
}

impl ScatterSolution {
    /// Scattered electric field U at an exterior point.
    pub fn eval_e(&self, x: Vec3) -> Result<CVec3> {
        eval_curl_layer(&self.mesh, &self.density, x, self.omega)
    }

    /// Magnetic partner V = curl U / (i omega).
    pub fn eval_h(&self, x: Vec3) -> Result<CVec3> {
        eval_curl_curl_layer(&self.mesh, &self.density, x, self.omega)
    }

    /// Far-field amplitude along a direction.
    pub fn far_field(&self, dir: Vec3) -> Result<CVec3> {
        far_field_curl_layer(&self.mesh, &self.density, dir, self.omega)
    }

    /// nu x U and its surface divergence sampled on another surface.
    pub fn trace_on(&self, surface: &SurfaceMesh) -> Result<TangentialTrace> {
        let mut values = Vec::with_capacity(surface.n_nodes());
        let mut div = Vec::with_capacity(surface.n_nodes());
        for (&x, &nu) in surface.quad_nodes.iter().zip(&surface.normals) {
            let u = self.eval_e(x)?;
            let v = self.eval_h(x)?;
            values.push(crate::rcross(&nu, &u));
            // Div(nu x U) = -nu . curl U = -i omega nu . V.
            div.push(
                crate::cdot(&v, &crate::cvec3_from_real(nu)) * Complex64::new(0.0, -self.omega),
            );
        }
        Ok(TangentialTrace { values, div: Some(div) })
    }
}

/// Shared dense solve for the second-kind systems: adds the identity, checks
/// conditioning, runs one refinement round and reports the relative residual.
fn solve_system(
    mut a: Array2<Complex64>,
    rhs: Array1<Complex64>,
    what: &str,
) -> Result<(Array1<Complex64>, f64, f64)> {
    let n = rhs.len();
    for i in 0..n {
        a[(i, i)] += Complex64::ONE;
    }
    let rhs_norm = rhs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let a_copy = a.clone();
    let f = a
        .factorize_into()
        .map_err(|e| Error::Solver(format!("{what}: factorization failed: {e}")))?;
    let rcond = f.rcond().unwrap_or(0.0);
    if rcond < 1.0 / COND_LIMIT {
        return Err(Error::Solver(format!(
            "{what}: system condition exceeds {COND_LIMIT:.1e} (rcond {rcond:.3e}); \
             obstacle too large or frequency near a resonance"
        )));
    }
    let mut x = f
        .solve(&rhs)
        .map_err(|e| Error::Solver(format!("{what}: solve failed: {e}")))?;
    // One refinement round.
    let r = &rhs - &a_copy.dot(&x);
    if let Ok(dx) = f.solve(&r) {
        x += &dx;
    }
    let res = &rhs - &a_copy.dot(&x);
    let res_norm = res.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    Ok((x, res_norm / rhs_norm.max(1e-300), rcond))
}

/// Solve the exterior radiating problem nu x U = phi on the obstacle surface.
pub fn solve_exterior(
    mesh: &SurfaceMesh,
    omega: f64,
    phi: &TangentialTrace,
    cfg: &NearQuadrature,
) -> Result<ScatterSolution> {
    phi.check_tangential(mesh)?;
    if phi.len() != mesh.n_nodes() {
        return Err(Error::Validation("boundary data/mesh node mismatch".into()));
    }
    let m = assemble_magnetic_dipole(mesh, omega, cfg)?;
    let rhs = frame_components(mesh, phi) * Complex64::from(2.0);
    let (x, residual, rcond) = solve_system(m, rhs, "exterior solve")?;
    let density = trace_from_components(mesh, &x);
    Ok(ScatterSolution { mesh: mesh.clone(), density, omega, residual, rcond })
}

/// Solve the exterior problem in reference coordinates: assembling with
/// wavenumber omega tau on the unit-scale surface is the same discrete system
/// as assembling on the tau-scaled surface with wavenumber omega. Returns
/// the reference-surface density together with the solution attached to the
/// scaled mesh (identical nodal values).
pub fn solve_exterior_scaled(
    mesh_unit: &SurfaceMesh,
    tau: f64,
    omega: f64,
    phi_scaled: &TangentialTrace,
    cfg: &NearQuadrature,
) -> Result<(TangentialTrace, ScatterSolution)> {
    phi_scaled.check_tangential(mesh_unit)?;
    let m = assemble_magnetic_dipole(mesh_unit, omega * tau, cfg)?;
    let rhs = frame_components(mesh_unit, phi_scaled) * Complex64::from(2.0);
    let (x, residual, rcond) = solve_system(m, rhs, "scaled exterior solve")?;
    let density = trace_from_components(mesh_unit, &x);
    let scaled_mesh = scale_mesh(mesh_unit, tau)?;
    let sol = ScatterSolution {
        mesh: scaled_mesh,
        density: density.clone(),
        omega,
        residual,
        rcond,
    };
    Ok((density, sol))
}

/// Solution of the bounded annulus problem between two surfaces.
pub struct AnnulusSolution {
    pub mesh_outer: SurfaceMesh,
    pub mesh_inner: SurfaceMesh,
    pub omega: f64,
    /// nu x V on the outer boundary (the quantity the estimates control).
    pub trace_outer: TangentialTrace,
    /// nu x V on the inner boundary.
    pub trace_inner: TangentialTrace,
    /// Prescribed tangential trace of U on the outer boundary.
    pub outer_data: TangentialTrace,
    pub residual: f64,
    pub rcond: f64,
}

impl AnnulusSolution {
    /// The magnetic partner V at a point of the annulus, by the integral
    /// representation from both boundary traces and the prescribed data.
    pub fn eval_v(&self, x: Vec3) -> Result<CVec3> {
        let outer = eval_curl_layer(&self.mesh_outer, &self.trace_outer, x, self.omega)?;
        let inner = eval_curl_layer(&self.mesh_inner, &self.trace_inner, x, self.omega)?;
        let dipole =
            eval_electric_dipole_potential(&self.mesh_outer, &self.outer_data, x, self.omega)?;
        Ok(-outer + inner + dipole)
    }
}

/// Solve the annulus problem: U has prescribed tangential trace `outer_data`
/// on the outer boundary (with divergence data) and vanishing tangential
/// trace on the inner obstacle.
pub fn solve_annulus(
    mesh_outer: &SurfaceMesh,
    mesh_inner: &SurfaceMesh,
    omega: f64,
    outer_data: &TangentialTrace,
    cfg: &NearQuadrature,
) -> Result<AnnulusSolution> {
    outer_data.check_tangential(mesh_outer)?;
    if outer_data.div.is_none() {
        return Err(Error::Validation(
            "annulus solve needs surface-divergence data on the outer trace".into(),
        ));
    }
    let no = 2 * mesh_outer.n_nodes();
    let ni = 2 * mesh_inner.n_nodes();

    let targets_inner = TargetSet::from_mesh(mesh_inner);
    let targets_outer = TargetSet::from_mesh(mesh_outer);

    // Block operators; solve_system adds the identity over the whole
    // diagonal, so store M_oo and -M_ii in the diagonal blocks.
    let m_oo = assemble_magnetic_dipole(mesh_outer, omega, cfg)?;
    let m_io = assemble_magnetic_dipole_cross(&targets_outer, mesh_inner, omega, cfg)?;
    let m_oi = assemble_magnetic_dipole_cross(&targets_inner, mesh_outer, omega, cfg)?;
    let m_ii = assemble_magnetic_dipole(mesh_inner, omega, cfg)?;

    let p1 = assemble_electric_dipole_self(mesh_outer, omega, cfg)?
        .apply(outer_data, mesh_outer)?;
    let p2 = assemble_electric_dipole_cross(&targets_inner, mesh_outer, omega, cfg)?
        .apply(outer_data, mesh_outer)?;

    let mut a = Array2::<Complex64>::zeros((no + ni, no + ni));
    a.slice_mut(s![..no, ..no]).assign(&m_oo);
    a.slice_mut(s![..no, no..]).assign(&(&m_io * Complex64::from(-1.0)));
    a.slice_mut(s![no.., ..no]).assign(&m_oi);
    a.slice_mut(s![no.., no..]).assign(&(&m_ii * Complex64::from(-1.0)));

    let mut rhs = Array1::<Complex64>::zeros(no + ni);
    rhs.slice_mut(s![..no]).assign(&(&p1 * Complex64::from(2.0)));
    rhs.slice_mut(s![no..]).assign(&(&p2 * Complex64::from(2.0)));

    let (x, residual, rcond) = solve_system(a, rhs, "annulus solve")?;
    let a1 = trace_from_components(mesh_outer, &x.slice(s![..no]).to_owned());
    let a2 = trace_from_components(mesh_inner, &x.slice(s![no..]).to_owned());

    Ok(AnnulusSolution {
        mesh_outer: mesh_outer.clone(),
        mesh_inner: mesh_inner.clone(),
        omega,
        trace_outer: a1,
        trace_inner: a2,
        outer_data: outer_data.clone(),
        residual,
        rcond,
    })
}

/// Output of the composed two-stage solve for the difference fields.
pub struct BoundaryPerturbation {
    /// nu x (H - H_0) sampled on the outer boundary mesh.
    pub trace: TangentialTrace,
    pub exterior_residual: f64,
    pub exterior_rcond: f64,
    pub annulus_residual: f64,
    pub annulus_rcond: f64,
    /// Norm of the intermediate exterior trace on the outer boundary.
    pub u_trace_norm: f64,
}

/// Composed solve for the boundary effect of a small obstacle: given
/// tangential data `phi` on the tau-scaled obstacle (None meaning zero) and
/// free-space boundary data `psi` on the outer sphere, compute
/// nu x (H - H_0) on the outer boundary.
///
/// Stage one solves the exterior radiating problem with data phi - nu x E_0
/// on the obstacle; stage two removes the outer trace of the radiating field
/// through the annulus problem, and the output is the difference of the two
/// magnetic traces.
pub fn solve_lemma_crucial(
    mesh_outer: &SurfaceMesh,
    mesh_inner_unit: &SurfaceMesh,
    omega: f64,
    tau: f64,
    phi: Option<&TangentialTrace>,
    psi: &VshExpansion,
    cfg: &NearQuadrature,
) -> Result<BoundaryPerturbation> {
    let r_omega = mesh_outer
        .nominal_radius
        .ok_or_else(|| Error::Validation("outer boundary must be a sphere mesh".into()))?;
    // Free-space solution driven by psi.
    let free = LayeredSphereSpec::vacuum(r_omega, omega)?;
    let e0: LayeredSolution = solve_layered_sphere(&free, psi)?;

    // Boundary data phi - nu x E_0 on the scaled obstacle.
    let mesh_tau = scale_mesh(mesh_inner_unit, tau)?;
    let mut data = TangentialTrace::from_fn(&mesh_tau, |x| e0.eval_e(x));
    for (v, nu) in data.values.iter_mut().zip(&mesh_tau.normals) {
        *v = crate::rcross(nu, v) * Complex64::from(-1.0);
    }
    if let Some(phi) = phi {
        if phi.len() != mesh_tau.n_nodes() {
            return Err(Error::Validation("phi sampled on the wrong mesh".into()));
        }
        for (v, p) in data.values.iter_mut().zip(&phi.values) {
            *v += p;
        }
    }
    let data = retangentialize(&data, &mesh_tau);

    // Stage one, assembled in reference coordinates.
    let (_, ext) = solve_exterior_scaled(mesh_inner_unit, tau, omega, &data, cfg)?;

    // Stage two: annulus correction with the exterior trace on the outer
    // boundary.
    let outer_data = ext.trace_on(mesh_outer)?;
    let u_trace_norm = outer_data.l2_norm(mesh_outer);
    let ann = solve_annulus(mesh_outer, &ext.mesh, omega, &outer_data, cfg)?;

    // nu x (H - H_0) = nu x V - nu x V_tilde on the outer boundary.
    let mut values = Vec::with_capacity(mesh_outer.n_nodes());
    for ((&x, &nu), a1) in mesh_outer
        .quad_nodes
        .iter()
        .zip(&mesh_outer.normals)
        .zip(&ann.trace_outer.values)
    {
        let v = ext.eval_h(x)?;
        values.push(crate::rcross(&nu, &v) - a1);
    }
    Ok(BoundaryPerturbation {
        trace: TangentialTrace { values, div: None },
        exterior_residual: ext.residual,
        exterior_rcond: ext.rcond,
        annulus_residual: ann.residual,
        annulus_rcond: ann.rcond,
        u_trace_norm,
    })
}

/// Exact tangential projection against the surface normals (guards against
/// accumulated roundoff when traces are combined pointwise).
fn retangentialize(trace: &TangentialTrace, mesh: &SurfaceMesh) -> TangentialTrace {
    let values = trace
        .values
        .iter()
        .zip(&mesh.normals)
        .map(|(v, &nu)| crate::trace::tangential_part(*v, nu))
        .collect();
    TangentialTrace { values, div: trace.div.clone() }
}

/// Block-triangular reference solve used by the structural check: with the
/// coupling blocks removed, the annulus system is lower block triangular and
/// solvable by substitution with the diagonal blocks.
pub fn annulus_block_reference(
    mesh_outer: &SurfaceMesh,
    mesh_inner: &SurfaceMesh,
    omega: f64,
    outer_data: &TangentialTrace,
    cfg: &NearQuadrature,
) -> Result<(Array1<Complex64>, Array1<Complex64>)> {
    let targets_inner = TargetSet::from_mesh(mesh_inner);
    let l11 = assemble_magnetic_dipole(mesh_outer, omega, cfg)?;
    let l21 = assemble_magnetic_dipole_cross(&targets_inner, mesh_outer, omega, cfg)?;
    let l22 = assemble_magnetic_dipole(mesh_inner, 0.0, cfg)?;
    let p1 = assemble_electric_dipole_self(mesh_outer, omega, cfg)?
        .apply(outer_data, mesh_outer)?;
    let p2 = assemble_electric_dipole_cross(&targets_inner, mesh_outer, omega, cfg)?
        .apply(outer_data, mesh_outer)?;

    // a1 = (I + M_outer)^{-1} 2 P1.
    let (a1, _, _) = solve_system(l11, &p1 * Complex64::from(2.0), "block L11")?;
    // a2 = (I - M0_inner)^{-1} (2 P2 - M_{outer->inner} a1).
    let rhs2 = &p2 * Complex64::from(2.0) - l21.dot(&a1);
    let (a2, _, _) = solve_system(l22 * Complex64::from(-1.0), rhs2, "block L22")?;
    Ok((a1, a2))
}

/// One-shot solve of the same triangular system, for the structural
/// comparison against the explicit block inverse.
pub fn annulus_block_direct(
    mesh_outer: &SurfaceMesh,
    mesh_inner: &SurfaceMesh,
    omega: f64,
    outer_data: &TangentialTrace,
    cfg: &NearQuadrature,
) -> Result<(Array1<Complex64>, Array1<Complex64>)> {
    let no = 2 * mesh_outer.n_nodes();
    let ni = 2 * mesh_inner.n_nodes();
    let targets_inner = TargetSet::from_mesh(mesh_inner);
    let l11 = assemble_magnetic_dipole(mesh_outer, omega, cfg)?;
    let l21 = assemble_magnetic_dipole_cross(&targets_inner, mesh_outer, omega, cfg)?;
    let l22 = assemble_magnetic_dipole(mesh_inner, 0.0, cfg)?;
    let p1 = assemble_electric_dipole_self(mesh_outer, omega, cfg)?
        .apply(outer_data, mesh_outer)?;
    let p2 = assemble_electric_dipole_cross(&targets_inner, mesh_outer, omega, cfg)?
        .apply(outer_data, mesh_outer)?;

    let mut a = Array2::<Complex64>::zeros((no + ni, no + ni));
    a.slice_mut(s![..no, ..no]).assign(&l11);
    a.slice_mut(s![no.., ..no]).assign(&l21);
    a.slice_mut(s![no.., no..]).assign(&(l22 * Complex64::from(-1.0)));
    let mut rhs = Array1::<Complex64>::zeros(no + ni);
    rhs.slice_mut(s![..no]).assign(&(&p1 * Complex64::from(2.0)));
    rhs.slice_mut(s![no..]).assign(&(&p2 * Complex64::from(2.0)));
    let (x, _, _) = solve_system(a, rhs, "block direct")?;
    Ok((x.slice(s![..no]).to_owned(), x.slice(s![no..]).to_owned()))
}
