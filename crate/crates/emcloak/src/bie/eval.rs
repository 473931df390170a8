//! Field evaluation from surface densities away from the surface.

use crate::bie::kernel::{helmholtz_hessian, helmholtz_kernel};
use crate::error::{Error, Result};
use crate::geometry::SurfaceMesh;
use crate::trace::TangentialTrace;
use crate::{ccross, cvec3_from_real, CVec3, Vec3};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Shortest distance from `x` to the surface nodes relative to the local
/// panel size; below ~2 the plain quadrature loses accuracy.
pub fn separation_in_panel_units(mesh: &SurfaceMesh, x: Vec3) -> f64 {
    let mut best = f64::INFINITY;
    for (q, &y) in mesh.quad_nodes.iter().enumerate() {
        let h = mesh.tri_diameter(mesh.node_panel[q]);
        best = best.min((x - y).norm() / h);
    }
    best
}

/// U(x) = curl int G a = int grad_x G x a ds, by direct quadrature.
pub fn eval_curl_layer(
    mesh: &SurfaceMesh,
    density: &TangentialTrace,
    x: Vec3,
    omega: f64,
) -> Result<CVec3> {
    if density.len() != mesh.n_nodes() {
        return Err(Error::Validation("density/mesh node mismatch".into()));
    }
    let mut acc = CVec3::zeros();
    for ((&y, &w), a) in mesh
        .quad_nodes
        .iter()
        .zip(&mesh.quad_weights)
        .zip(&density.values)
    {
        let g = helmholtz_kernel(x, y, omega)?.grad_x;
        acc += ccross(&g, a) * Complex64::from(w);
    }
    Ok(acc)
}

/// V(x) = (1/(i omega)) curl U = (1/(i omega)) [omega^2 int G a + Hess G a].
pub fn eval_curl_curl_layer(
    mesh: &SurfaceMesh,
    density: &TangentialTrace,
    x: Vec3,
    omega: f64,
) -> Result<CVec3> {
    if density.len() != mesh.n_nodes() {
        return Err(Error::Validation("density/mesh node mismatch".into()));
    }
    let mut acc = CVec3::zeros();
    let w2 = Complex64::from(omega * omega);
    for ((&y, &w), a) in mesh
        .quad_nodes
        .iter()
        .zip(&mesh.quad_weights)
        .zip(&density.values)
    {
        let k = helmholtz_kernel(x, y, omega)?;
        let h = helmholtz_hessian(x, y, omega)?;
        acc += (h * a + a * (w2 * k.value)) * Complex64::from(w);
    }
    Ok(acc / Complex64::new(0.0, omega))
}

/// Electric-dipole potential -(1/(i omega)) curl curl int G b at a volume
/// point, using surface-divergence data of b:
/// i omega int G b + (i/omega) int grad_x G Div b.
pub fn eval_electric_dipole_potential(
    mesh: &SurfaceMesh,
    density: &TangentialTrace,
    x: Vec3,
    omega: f64,
) -> Result<CVec3> {
    let div = density.div.as_ref().ok_or_else(|| {
        Error::Validation("electric dipole potential needs surface-divergence data".into())
    })?;
    let mut acc = CVec3::zeros();
    let iw = Complex64::new(0.0, omega);
    let iow = Complex64::new(0.0, 1.0 / omega);
    for (((&y, &w), b), s) in mesh
        .quad_nodes
        .iter()
        .zip(&mesh.quad_weights)
        .zip(&density.values)
        .zip(div)
    {
        let k = helmholtz_kernel(x, y, omega)?;
        acc += (b * (iw * k.value) + k.grad_x * (iow * s)) * Complex64::from(w);
    }
    Ok(acc)
}

/// Far-field amplitude of U = curl int G a:
/// U ~ F(x_hat) e^{i omega r} / r with
/// F(x_hat) = (i omega / 4 pi) int e^{-i omega x_hat . y} (x_hat x a) ds.
pub fn far_field_curl_layer(
    mesh: &SurfaceMesh,
    density: &TangentialTrace,
    dir: Vec3,
    omega: f64,
) -> Result<CVec3> {
    if density.len() != mesh.n_nodes() {
        return Err(Error::Validation("density/mesh node mismatch".into()));
    }
    let d = dir.normalize();
    let mut acc = CVec3::zeros();
    for ((&y, &w), a) in mesh
        .quad_nodes
        .iter()
        .zip(&mesh.quad_weights)
        .zip(&density.values)
    {
        let phase = Complex64::new(0.0, -omega * d.dot(&y)).exp();
        acc += crate::rcross(&d, a) * (phase * w);
    }
    Ok(acc * Complex64::new(0.0, omega / (4.0 * PI)))
}

/// Radiation-condition defect |x| | (curl U)(x) x x_hat - i omega U(x) | at a
/// far point; tends to zero along rays for outgoing fields.
pub fn radiation_defect(
    mesh: &SurfaceMesh,
    density: &TangentialTrace,
    x: Vec3,
    omega: f64,
) -> Result<f64> {
    let u = eval_curl_layer(mesh, density, x, omega)?;
    // curl U = i omega V.
    let v = eval_curl_curl_layer(mesh, density, x, omega)?;
    let curl_u = v * Complex64::new(0.0, omega);
    let xhat = x.normalize();
    let defect = ccross(&curl_u, &cvec3_from_real(xhat)) - u * Complex64::new(0.0, omega);
    Ok(defect.norm() * x.norm())
}
