//! Nystrom discretization of the boundary layer operators.
//!
//! Unknowns are tangential vectors at the mesh quadrature nodes, expressed in
//! a local orthonormal tangent frame (two degrees of freedom per node).
//! Far panels use the mesh quadrature directly; panels near a target are
//! re-integrated with a polar (Duffy) transform centered at the singular
//! point, and a middle band with a subdivided rule. Densities on corrected
//! panels are linearly interpolated from the panel's own nodes and projected
//! back onto the tangent plane at each auxiliary point.
//!
//! The magnetic dipole operator follows the convention with the factor 2
//! inside the definition, so the exterior trace of the curl of a single layer
//! with density a is (a + M a) / 2 and the jump relations read (I +/- M).

use crate::bie::kernel::{helmholtz_kernel, CMat3};
use crate::error::{Error, Result};
use crate::geometry::{gauss_legendre, SurfaceMesh, TriRule};
use crate::trace::TangentialTrace;
use crate::{cvec3_from_real, CVec3, Vec3};
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rayon::prelude::*;

/// Orthonormal tangent pair completing the node normal.
#[derive(Debug, Clone, Copy)]
pub struct TangentFrame {
    pub t1: Vec3,
    pub t2: Vec3,
}

impl TangentFrame {
    pub fn from_normal(n: Vec3) -> Self {
        let pick = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
            Vec3::x()
        } else if n.y.abs() <= n.z.abs() {
            Vec3::y()
        } else {
            Vec3::z()
        };
        let t1 = (pick - n * pick.dot(&n)).normalize();
        let t2 = n.cross(&t1);
        TangentFrame { t1, t2 }
    }

    pub fn axis(&self, c: usize) -> Vec3 {
        if c == 0 {
            self.t1
        } else {
            self.t2
        }
    }
}

/// Collocation targets: points with normals and tangent frames.
#[derive(Debug, Clone)]
pub struct TargetSet {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub frames: Vec<TangentFrame>,
}

impl TargetSet {
    pub fn from_mesh(mesh: &SurfaceMesh) -> Self {
        let frames = mesh.normals.iter().map(|&n| TangentFrame::from_normal(n)).collect();
        TargetSet { points: mesh.quad_nodes.clone(), normals: mesh.normals.clone(), frames }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Near-quadrature policy for singular and nearly singular panels.
#[derive(Debug, Clone, Copy)]
pub struct NearQuadrature {
    /// Panels closer than `near_factor * diam` get the polar transform.
    pub near_factor: f64,
    /// Gauss points per dimension of each polar patch.
    pub polar_points: usize,
    /// Panels closer than `medium_factor * diam` (but not near) get a
    /// subdivided plain rule.
    pub medium_factor: f64,
    /// Dyadic subdivision levels in the middle band.
    pub medium_levels: u32,
}

impl Default for NearQuadrature {
    fn default() -> Self {
        NearQuadrature { near_factor: 2.0, polar_points: 12, medium_factor: 6.0, medium_levels: 2 }
    }
}

/// Matrix-valued kernel acting on a vector density: (x, nx, y) -> 3x3.
pub trait VectorKernel: Sync {
    fn eval(&self, x: Vec3, nx: Vec3, y: Vec3) -> CMat3;
}

/// Vector-valued kernel acting on a scalar density: (x, nx, y) -> 3-vector.
pub trait ScalarKernel: Sync {
    fn eval(&self, x: Vec3, nx: Vec3, y: Vec3) -> CVec3;
}

/// Magnetic dipole kernel: a -> 2 nx x (grad_x G x a).
pub struct MagneticDipoleKernel {
    pub omega: f64,
}

impl VectorKernel for MagneticDipoleKernel {
    fn eval(&self, x: Vec3, nx: Vec3, y: Vec3) -> CMat3 {
        let g = helmholtz_kernel(x, y, self.omega).expect("kernel eval").grad_x;
        // nx x (g x a) = g (nx . a) - a (nx . g).
        let nxg = crate::cdot(&g, &cvec3_from_real(nx));
        let mut m = CMat3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                let delta = if i == j { Complex64::ONE } else { Complex64::ZERO };
                m[(i, j)] = (g[i] * Complex64::from(nx[j]) - delta * nxg) * 2.0;
            }
        }
        m
    }
}

/// Plain single-layer kernel G I (no prefactor).
pub struct SingleLayerKernel {
    pub omega: f64,
}

impl VectorKernel for SingleLayerKernel {
    fn eval(&self, x: Vec3, _nx: Vec3, y: Vec3) -> CMat3 {
        let g = helmholtz_kernel(x, y, self.omega).expect("kernel eval").value;
        CMat3::identity() * g
    }
}

/// Tangential-trace single layer with the electric-dipole prefactor:
/// a -> i omega nx x int G a.
struct EdVectorKernel {
    omega: f64,
}

impl VectorKernel for EdVectorKernel {
    fn eval(&self, x: Vec3, nx: Vec3, y: Vec3) -> CMat3 {
        let g = helmholtz_kernel(x, y, self.omega).expect("kernel eval").value;
        let c = Complex64::new(0.0, self.omega) * g;
        // Cross-product matrix of nx, scaled.
        let mut m = CMat3::zeros();
        m[(0, 1)] = Complex64::from(-nx.z) * c;
        m[(0, 2)] = Complex64::from(nx.y) * c;
        m[(1, 0)] = Complex64::from(nx.z) * c;
        m[(1, 2)] = Complex64::from(-nx.x) * c;
        m[(2, 0)] = Complex64::from(-nx.y) * c;
        m[(2, 1)] = Complex64::from(nx.x) * c;
        m
    }
}

/// Scalar-density part of the electric dipole: s -> (i/omega) nx x grad_x G s.
struct EdGradKernel {
    omega_kernel: f64,
    omega_scale: f64,
}

impl ScalarKernel for EdGradKernel {
    fn eval(&self, x: Vec3, nx: Vec3, y: Vec3) -> CVec3 {
        let g = helmholtz_kernel(x, y, self.omega_kernel).expect("kernel eval").grad_x;
        crate::rcross(&nx, &g) * Complex64::new(0.0, 1.0 / self.omega_scale)
    }
}

/// Difference kernel (i/omega) nx x grad_x (G - G0) s; bounded at x = y.
struct EdGradDiffKernel {
    omega: f64,
}

impl ScalarKernel for EdGradDiffKernel {
    fn eval(&self, x: Vec3, nx: Vec3, y: Vec3) -> CVec3 {
        let g = helmholtz_kernel(x, y, self.omega).expect("kernel eval").grad_x;
        let g0 = helmholtz_kernel(x, y, 0.0).expect("kernel eval").grad_x;
        crate::rcross(&nx, &(g - g0)) * Complex64::new(0.0, 1.0 / self.omega)
    }
}

// ---------------------------------------------------------------------------
// Panel quadrature generation
// ---------------------------------------------------------------------------

/// One auxiliary quadrature point on a source panel.
struct PanelPoint {
    pos: Vec3,
    normal: Vec3,
    weight: f64,
    /// Interpolation coefficients onto the panel's own nodes.
    interp: [f64; 3],
}

struct PanelGeometry<'a> {
    mesh: &'a SurfaceMesh,
    /// Gauss points and weights on [0,1] for polar patches.
    gauss01: (Vec<f64>, Vec<f64>),
}

impl<'a> PanelGeometry<'a> {
    fn new(mesh: &'a SurfaceMesh, polar_points: usize) -> Self {
        let (x, w) = gauss_legendre(polar_points);
        let x01: Vec<f64> = x.iter().map(|&t| 0.5 * (t + 1.0)).collect();
        let w01: Vec<f64> = w.iter().map(|&t| 0.5 * t).collect();
        PanelGeometry { mesh, gauss01: (x01, w01) }
    }

    /// Map a flat point of panel `p` to the mesh surface with its area factor.
    fn lift(&self, p: usize, flat: Vec3, n_flat: Vec3) -> (Vec3, Vec3, f64) {
        match self.mesh.nominal_radius {
            Some(r) => {
                let len = flat.norm();
                let dir = flat / len;
                let jac = r * r * dir.dot(&n_flat) / (len * len);
                (dir * r, dir, jac)
            }
            None => {
                let _ = p;
                (flat, n_flat, 1.0)
            }
        }
    }

    /// Interpolation coefficients of a barycentric point from the panel's
    /// rule nodes. For the symmetric 3-point rule the affine interpolant has
    /// the closed form c_q = 2 b_q - 1/3; the centroid rule is constant.
    fn interp_coeffs(&self, bary: [f64; 3]) -> [f64; 3] {
        match self.mesh.rule {
            TriRule::Centroid => [1.0, 0.0, 0.0],
            TriRule::Gauss3 => [
                2.0 * bary[0] - 1.0 / 3.0,
                2.0 * bary[1] - 1.0 / 3.0,
                2.0 * bary[2] - 1.0 / 3.0,
            ],
        }
    }

    /// Generate polar-transform quadrature for panel `p` concentrated at the
    /// flat point `center` (given in barycentric coordinates).
    fn polar_points(&self, p: usize, center_bary: [f64; 3], out: &mut Vec<PanelPoint>) {
        let [a, b, c] = self.mesh.tri_vertices(p);
        let cross = (b - a).cross(&(c - a));
        let n_flat = cross.normalize();
        let center = a * center_bary[0] + b * center_bary[1] + c * center_bary[2];
        let verts = [a, b, c];
        let (gx, gw) = &self.gauss01;

        // Fan around the center; skip slivers.
        let full_area = 0.5 * cross.norm();
        for e in 0..3 {
            let va = verts[e];
            let vb = verts[(e + 1) % 3];
            let sub_area = 0.5 * (va - center).cross(&(vb - center)).norm();
            if sub_area < 1e-12 * full_area {
                continue;
            }
            for (iu, &u) in gx.iter().enumerate() {
                for (iv, &v) in gx.iter().enumerate() {
                    // y = center + u ((va - center) + v (vb - va)); area
                    // element 2 A u du dv.
                    let flat = center + (va - center + (vb - va) * v) * u;
                    let wflat = 2.0 * sub_area * u * gw[iu] * gw[iv];
                    let (pos, normal, jac) = self.lift(p, flat, n_flat);
                    let bary = barycentric(&verts, flat);
                    out.push(PanelPoint {
                        pos,
                        normal,
                        weight: wflat * jac,
                        interp: self.interp_coeffs(bary),
                    });
                }
            }
        }
    }

    /// Subdivided plain rule: `levels` dyadic refinements of the panel, the
    /// mesh rule on each cell.
    fn subdivided_points(&self, p: usize, levels: u32, out: &mut Vec<PanelPoint>) {
        let verts = self.mesh.tri_vertices(p);
        let cross = (verts[1] - verts[0]).cross(&(verts[2] - verts[0]));
        let n_flat = cross.normalize();
        let rule = self.mesh.rule.points();
        let mut stack = vec![(verts, levels)];
        while let Some((tri, lvl)) = stack.pop() {
            if lvl == 0 {
                let area2 = (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).norm();
                for (rb, rw) in &rule {
                    let flat = tri[0] * rb[0] + tri[1] * rb[1] + tri[2] * rb[2];
                    let (pos, normal, jac) = self.lift(p, flat, n_flat);
                    let bary = barycentric(&verts, flat);
                    out.push(PanelPoint {
                        pos,
                        normal,
                        weight: rw * 0.5 * area2 * jac,
                        interp: self.interp_coeffs(bary),
                    });
                }
            } else {
                let m01 = (tri[0] + tri[1]) * 0.5;
                let m12 = (tri[1] + tri[2]) * 0.5;
                let m20 = (tri[2] + tri[0]) * 0.5;
                stack.push(([tri[0], m01, m20], lvl - 1));
                stack.push(([m01, tri[1], m12], lvl - 1));
                stack.push(([m20, m12, tri[2]], lvl - 1));
                stack.push(([m01, m12, m20], lvl - 1));
            }
        }
    }
}

/// Barycentric coordinates of a point in the plane of a triangle.
fn barycentric(verts: &[Vec3; 3], p: Vec3) -> [f64; 3] {
    let v0 = verts[1] - verts[0];
    let v1 = verts[2] - verts[0];
    let v2 = p - verts[0];
    let d00 = v0.dot(&v0);
    let d01 = v0.dot(&v1);
    let d11 = v1.dot(&v1);
    let d20 = v2.dot(&v0);
    let d21 = v2.dot(&v1);
    let denom = d00 * d11 - d01 * d01;
    let v = (d11 * d20 - d01 * d21) / denom;
    let w = (d00 * d21 - d01 * d20) / denom;
    [1.0 - v - w, v, w]
}

/// Closest point of a flat triangle to `p`, in barycentric coordinates.
fn closest_point_bary(verts: &[Vec3; 3], p: Vec3) -> [f64; 3] {
    let bary = barycentric(verts, p);
    if bary.iter().all(|&b| b >= 0.0) {
        return bary;
    }
    // Clamp to the closest edge or vertex.
    let mut best = ([1.0, 0.0, 0.0], f64::INFINITY);
    for e in 0..3 {
        let ia = e;
        let ib = (e + 1) % 3;
        let a = verts[ia];
        let b = verts[ib];
        let t = ((p - a).dot(&(b - a)) / (b - a).norm_squared()).clamp(0.0, 1.0);
        let q = a + (b - a) * t;
        let d = (p - q).norm_squared();
        if d < best.1 {
            let mut bc = [0.0; 3];
            bc[ia] = 1.0 - t;
            bc[ib] = t;
            best = (bc, d);
        }
    }
    best.0
}

// ---------------------------------------------------------------------------
// Assembly drivers
// ---------------------------------------------------------------------------

fn classify(dist: f64, diam: f64, cfg: &NearQuadrature) -> u8 {
    if dist <= cfg.near_factor * diam {
        2
    } else if dist <= cfg.medium_factor * diam {
        1
    } else {
        0
    }
}

/// Panel metadata reused across rows.
struct PanelInfo {
    verts: [Vec3; 3],
    centroid: Vec3,
    diam: f64,
}

fn panel_infos(mesh: &SurfaceMesh) -> Vec<PanelInfo> {
    (0..mesh.triangles.len())
        .map(|t| {
            let verts = mesh.tri_vertices(t);
            PanelInfo {
                verts,
                centroid: (verts[0] + verts[1] + verts[2]) / 3.0,
                diam: mesh.tri_diameter(t),
            }
        })
        .collect()
}

/// Row batch size: assembly parallelizes over targets within a batch and
/// copies finished rows into the output, keeping the extra memory bounded.
const ROW_BATCH: usize = 256;

/// Assemble a vector-density operator matrix (2T x 2S).
pub fn assemble_vector_op<K: VectorKernel>(
    targets: &TargetSet,
    src: &SurfaceMesh,
    kernel: &K,
    cfg: &NearQuadrature,
) -> Result<Array2<Complex64>> {
    check_mesh(src)?;
    let npt = src.rule.nodes_per_tri();
    let n_src = src.n_nodes();
    let panels = panel_infos(src);
    let geom = PanelGeometry::new(src, cfg.polar_points);
    let src_frames: Vec<TangentFrame> =
        src.normals.iter().map(|&n| TangentFrame::from_normal(n)).collect();

    let mut out = Array2::<Complex64>::zeros((2 * targets.len(), 2 * n_src));
    for batch_start in (0..targets.len()).step_by(ROW_BATCH) {
        let batch_end = (batch_start + ROW_BATCH).min(targets.len());
        let rows: Vec<Vec<Complex64>> = (batch_start..batch_end)
            .into_par_iter()
            .map(|i| {
                let x = targets.points[i];
                let nx = targets.normals[i];
                let fr = &targets.frames[i];
                let mut row = vec![Complex64::ZERO; 2 * 2 * n_src];
                let mut aux: Vec<PanelPoint> = Vec::new();
                for (p, info) in panels.iter().enumerate() {
                    let dist = (x - info.centroid).norm();
                    match classify(dist, info.diam, cfg) {
                        0 => {
                            for k in 0..npt {
                                let q = p * npt + k;
                                let m = kernel.eval(x, nx, src.quad_nodes[q]);
                                let w = src.quad_weights[q];
                                accumulate_plain(&mut row, fr, &m, w, q, &src_frames[q]);
                            }
                        }
                        band => {
                            aux.clear();
                            if band == 2 {
                                // Polar patch centered at the nearest flat
                                // point (the node preimage when x is the
                                // panel's own node).
                                let bary =
                                    closest_point_bary(&info.verts, nearest_flat(src, p, x));
                                geom.polar_points(p, bary, &mut aux);
                            } else {
                                geom.subdivided_points(p, cfg.medium_levels, &mut aux);
                            }
                            for pt in &aux {
                                let m = kernel.eval(x, nx, pt.pos);
                                accumulate_interp(&mut row, fr, &m, pt, p, npt, &src_frames);
                            }
                        }
                    }
                }
                row
            })
            .collect();
        for (bi, row) in rows.into_iter().enumerate() {
            let i = batch_start + bi;
            for c in 0..2 * n_src {
                out[(2 * i, c)] = row[c];
                out[(2 * i + 1, c)] = row[2 * n_src + c];
            }
        }
    }
    Ok(out)
}

/// Assemble a scalar-density operator matrix (2T x S).
pub fn assemble_scalar_op<K: ScalarKernel>(
    targets: &TargetSet,
    src: &SurfaceMesh,
    kernel: &K,
    cfg: &NearQuadrature,
) -> Result<Array2<Complex64>> {
    check_mesh(src)?;
    let npt = src.rule.nodes_per_tri();
    let n_src = src.n_nodes();
    let panels = panel_infos(src);
    let geom = PanelGeometry::new(src, cfg.polar_points);

    let rows: Vec<Vec<Complex64>> = (0..targets.len())
        .into_par_iter()
        .map(|i| {
            let x = targets.points[i];
            let nx = targets.normals[i];
            let fr = &targets.frames[i];
            let mut row = vec![Complex64::ZERO; 2 * n_src];
            let mut aux: Vec<PanelPoint> = Vec::new();
            for (p, info) in panels.iter().enumerate() {
                let dist = (x - info.centroid).norm();
                match classify(dist, info.diam, cfg) {
                    0 => {
                        for k in 0..npt {
                            let q = p * npt + k;
                            let v = kernel.eval(x, nx, src.quad_nodes[q]);
                            let w = src.quad_weights[q];
                            row[q] += crate::cdot(&v, &cvec3_from_real(fr.t1)) * w;
                            row[n_src + q] += crate::cdot(&v, &cvec3_from_real(fr.t2)) * w;
                        }
                    }
                    band => {
                        aux.clear();
                        if band == 2 {
                            let bary = closest_point_bary(&info.verts, nearest_flat(src, p, x));
                            geom.polar_points(p, bary, &mut aux);
                        } else {
                            geom.subdivided_points(p, cfg.medium_levels, &mut aux);
                        }
                        for pt in &aux {
                            let v = kernel.eval(x, nx, pt.pos);
                            let c1 = crate::cdot(&v, &cvec3_from_real(fr.t1)) * pt.weight;
                            let c2 = crate::cdot(&v, &cvec3_from_real(fr.t2)) * pt.weight;
                            for k in 0..npt {
                                let q = p * npt + k;
                                let lam = pt.interp[k];
                                if lam != 0.0 {
                                    row[q] += c1 * lam;
                                    row[n_src + q] += c2 * lam;
                                }
                            }
                        }
                    }
                }
            }
            row
        })
        .collect();

    let mut out = Array2::<Complex64>::zeros((2 * targets.len(), n_src));
    for (i, row) in rows.into_iter().enumerate() {
        for c in 0..n_src {
            out[(2 * i, c)] = row[c];
            out[(2 * i + 1, c)] = row[n_src + c];
        }
    }
    Ok(out)
}

/// The flat-panel point whose lift is nearest to x: for the panel's own node
/// this is the node preimage, which centers the polar transform exactly at
/// the singularity.
fn nearest_flat(src: &SurfaceMesh, p: usize, x: Vec3) -> Vec3 {
    let npt = src.rule.nodes_per_tri();
    let mut best = (f64::INFINITY, x);
    for k in 0..npt {
        let q = p * npt + k;
        let d = (src.quad_nodes[q] - x).norm();
        if d < best.0 {
            best = (d, src.flat_quad_nodes[q]);
        }
    }
    if best.0 < 1e-12 * src.tri_diameter(p).max(1e-300) {
        best.1
    } else {
        x
    }
}

fn accumulate_plain(
    row: &mut [Complex64],
    fr: &TangentFrame,
    m: &CMat3,
    w: f64,
    q: usize,
    src_frame: &TangentFrame,
) {
    let n_cols = row.len() / 2;
    for (ci, tgt_axis) in [fr.t1, fr.t2].iter().enumerate() {
        let ta = cvec3_from_real(*tgt_axis);
        for (cj, src_axis) in [src_frame.t1, src_frame.t2].iter().enumerate() {
            let sa = cvec3_from_real(*src_axis);
            let val = crate::cdot(&ta, &(m * sa)) * w;
            row[ci * n_cols + 2 * q + cj] += val;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn accumulate_interp(
    row: &mut [Complex64],
    fr: &TangentFrame,
    m: &CMat3,
    pt: &PanelPoint,
    p: usize,
    npt: usize,
    src_frames: &[TangentFrame],
) {
    let n_cols = row.len() / 2;
    let n = cvec3_from_real(pt.normal);
    for k in 0..npt {
        let lam = pt.interp[k];
        if lam == 0.0 {
            continue;
        }
        let q = p * npt + k;
        for (cj, src_axis) in [src_frames[q].t1, src_frames[q].t2].iter().enumerate() {
            // Tangentialize the interpolated direction at the auxiliary point.
            let sa = cvec3_from_real(*src_axis);
            let sa_t = &sa - &n * crate::cdot(&sa, &n);
            let col = m * sa_t;
            for (ci, tgt_axis) in [fr.t1, fr.t2].iter().enumerate() {
                let ta = cvec3_from_real(*tgt_axis);
                row[ci * n_cols + 2 * q + cj] += crate::cdot(&ta, &col) * pt.weight * lam;
            }
        }
    }
}

fn check_mesh(mesh: &SurfaceMesh) -> Result<()> {
    for t in 0..mesh.triangles.len() {
        if mesh.tri_area(t) < 1e-14 {
            return Err(Error::Mesh(format!("degenerate triangle {t}")));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Public operators
// ---------------------------------------------------------------------------

/// Magnetic dipole operator on a single surface (targets = nodes of `mesh`).
/// `omega = 0` gives the static operator.
pub fn assemble_magnetic_dipole(
    mesh: &SurfaceMesh,
    omega: f64,
    cfg: &NearQuadrature,
) -> Result<Array2<Complex64>> {
    let targets = TargetSet::from_mesh(mesh);
    assemble_vector_op(&targets, mesh, &MagneticDipoleKernel { omega }, cfg)
}

/// Magnetic dipole operator from `src` to arbitrary targets.
pub fn assemble_magnetic_dipole_cross(
    targets: &TargetSet,
    src: &SurfaceMesh,
    omega: f64,
    cfg: &NearQuadrature,
) -> Result<Array2<Complex64>> {
    assemble_vector_op(targets, src, &MagneticDipoleKernel { omega }, cfg)
}

/// Single-layer operator (tangential frame components of int G a).
pub fn assemble_single_layer(
    mesh: &SurfaceMesh,
    omega: f64,
    cfg: &NearQuadrature,
) -> Result<Array2<Complex64>> {
    let targets = TargetSet::from_mesh(mesh);
    assemble_vector_op(&targets, mesh, &SingleLayerKernel { omega }, cfg)
}

/// Discretized electric dipole operator. Acts on a tangential density with
/// surface-divergence data:
///
///   P(a) = -(1/(i omega)) nu x curl curl int G a
///        = i omega nu x int G a + (i/omega) nu x int grad_x G Div a.
///
/// Assembled for targets on the source surface (hypersingular part handled by
/// zero-mean subtraction of the static gradient kernel) or off it.
pub struct ElectricDipoleOp {
    pub vec_part: Array2<Complex64>,
    pub div_part: Array2<Complex64>,
}

impl ElectricDipoleOp {
    /// Apply to a density with Div data, returning target frame components.
    pub fn apply(&self, density: &TangentialTrace, src: &SurfaceMesh) -> Result<Array1<Complex64>> {
        let div = density.div.as_ref().ok_or_else(|| {
            Error::Validation(
                "electric dipole operator needs surface-divergence data on the density".into(),
            )
        })?;
        let comps = frame_components(src, density);
        let divv = Array1::from_vec(div.clone());
        Ok(self.vec_part.dot(&comps) + self.div_part.dot(&divv))
    }
}

/// Assemble the electric dipole operator for targets away from the source
/// surface (all kernels smooth, or mildly near).
pub fn assemble_electric_dipole_cross(
    targets: &TargetSet,
    src: &SurfaceMesh,
    omega: f64,
    cfg: &NearQuadrature,
) -> Result<ElectricDipoleOp> {
    if omega <= 0.0 {
        return Err(Error::Validation("electric dipole operator needs omega > 0".into()));
    }
    let vec_part = assemble_vector_op(targets, src, &EdVectorKernel { omega }, cfg)?;
    let div_part = assemble_scalar_op(
        targets,
        src,
        &EdGradKernel { omega_kernel: omega, omega_scale: omega },
        cfg,
    )?;
    Ok(ElectricDipoleOp { vec_part, div_part })
}

/// Assemble the electric dipole operator with targets on the source surface.
///
/// The gradient part is strongly singular; it is split as
/// grad G = grad G0 + grad (G - G0), the static part regularized by
/// subtracting the density value at the target (the leading odd moment of the
/// static gradient integrates to a purely normal vector on spheres, so its
/// tangential projection drops).
pub fn assemble_electric_dipole_self(
    mesh: &SurfaceMesh,
    omega: f64,
    cfg: &NearQuadrature,
) -> Result<ElectricDipoleOp> {
    if omega <= 0.0 {
        return Err(Error::Validation("electric dipole operator needs omega > 0".into()));
    }
    if mesh.nominal_radius.is_none() {
        return Err(Error::Validation(
            "on-surface electric dipole assembly is supported on sphere meshes only".into(),
        ));
    }
    let targets = TargetSet::from_mesh(mesh);
    let vec_part = assemble_vector_op(&targets, mesh, &EdVectorKernel { omega }, cfg)?;
    // Static gradient with subtraction: B s - diag(B 1) s.
    let b0 = assemble_scalar_op(
        &targets,
        mesh,
        &EdGradKernel { omega_kernel: 0.0, omega_scale: omega },
        cfg,
    )?;
    let smooth = assemble_scalar_op(&targets, mesh, &EdGradDiffKernel { omega }, cfg)?;
    let n = mesh.n_nodes();
    let mut div_part = b0.clone() + &smooth;
    for i in 0..targets.len() {
        // The target node index equals the row node: collocation nodes are
        // the mesh nodes in order.
        let row_sums: (Complex64, Complex64) = (
            (0..n).map(|c| b0[(2 * i, c)]).sum(),
            (0..n).map(|c| b0[(2 * i + 1, c)]).sum(),
        );
        div_part[(2 * i, i)] -= row_sums.0;
        div_part[(2 * i + 1, i)] -= row_sums.1;
    }
    Ok(ElectricDipoleOp { vec_part, div_part })
}

/// Frame components (2N vector) of a nodal trace.
pub fn frame_components(mesh: &SurfaceMesh, trace: &TangentialTrace) -> Array1<Complex64> {
    let frames: Vec<TangentFrame> =
        mesh.normals.iter().map(|&n| TangentFrame::from_normal(n)).collect();
    let mut out = Array1::<Complex64>::zeros(2 * trace.len());
    for (q, v) in trace.values.iter().enumerate() {
        out[2 * q] = crate::cdot(v, &cvec3_from_real(frames[q].t1));
        out[2 * q + 1] = crate::cdot(v, &cvec3_from_real(frames[q].t2));
    }
    out
}

/// Rebuild a nodal trace from frame components.
pub fn trace_from_components(mesh: &SurfaceMesh, comps: &Array1<Complex64>) -> TangentialTrace {
    let frames: Vec<TangentFrame> =
        mesh.normals.iter().map(|&n| TangentFrame::from_normal(n)).collect();
    let values = (0..mesh.n_nodes())
        .map(|q| {
            cvec3_from_real(frames[q].t1) * comps[2 * q]
                + cvec3_from_real(frames[q].t2) * comps[2 * q + 1]
        })
        .collect();
    TangentialTrace { values, div: None }
}

/// Little-endian binary dump of an assembled operator: two u64 dims followed
/// by row-major (re, im) f64 pairs.
pub fn write_matrix<W: std::io::Write>(m: &Array2<Complex64>, mut w: W) -> Result<()> {
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for v in m.iter() {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

/// Read back a matrix written by [`write_matrix`].
pub fn read_matrix<R: std::io::Read>(mut r: R) -> Result<Array2<Complex64>> {
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8)?;
    let rows = u64::from_le_bytes(buf8) as usize;
    r.read_exact(&mut buf8)?;
    let cols = u64::from_le_bytes(buf8) as usize;
    let mut out = Array2::<Complex64>::zeros((rows, cols));
    for i in 0..rows {
        for j in 0..cols {
            r.read_exact(&mut buf8)?;
            let re = f64::from_le_bytes(buf8);
            r.read_exact(&mut buf8)?;
            let im = f64::from_le_bytes(buf8);
            out[(i, j)] = Complex64::new(re, im);
        }
    }
    Ok(out)
}

/// Surface area sanity for the static single layer: on the unit sphere the
/// potential of a constant density is the radius. Used by self-convergence
/// tests and the check suite.
pub fn static_single_layer_constant_density(mesh: &SurfaceMesh, cfg: &NearQuadrature) -> Result<f64> {
    let geom = PanelGeometry::new(mesh, cfg.polar_points);
    let panels = panel_infos(mesh);
    let mut worst = 0.0f64;
    let radius = mesh
        .nominal_radius
        .ok_or_else(|| Error::Validation("sphere mesh required".into()))?;
    for &x in mesh.quad_nodes.iter().step_by(17) {
        let mut acc = Complex64::ZERO;
        let mut aux = Vec::new();
        for (p, info) in panels.iter().enumerate() {
            let dist = (x - info.centroid).norm();
            match classify(dist, info.diam, cfg) {
                0 => {
                    let npt = mesh.rule.nodes_per_tri();
                    for k in 0..npt {
                        let q = p * npt + k;
                        acc += helmholtz_kernel(x, mesh.quad_nodes[q], 0.0)?.value
                            * mesh.quad_weights[q];
                    }
                }
                band => {
                    aux.clear();
                    if band == 2 {
                        let bary = closest_point_bary(&info.verts, nearest_flat(mesh, p, x));
                        geom.polar_points(p, bary, &mut aux);
                    } else {
                        geom.subdivided_points(p, cfg.medium_levels, &mut aux);
                    }
                    for pt in &aux {
                        acc += helmholtz_kernel(x, pt.pos, 0.0)?.value * pt.weight;
                    }
                }
            }
        }
        worst = worst.max((acc.re - radius).abs() / radius);
    }
    Ok(worst)
}

/// 4 pi steradian solid-angle identity: sum of static double-layer rows is
/// -1/2 at on-surface targets. A cheap global accuracy probe of the near
/// machinery.
pub fn gauss_identity_defect(mesh: &SurfaceMesh, cfg: &NearQuadrature) -> Result<f64> {
    let geom = PanelGeometry::new(mesh, cfg.polar_points);
    let panels = panel_infos(mesh);
    let mut worst = 0.0f64;
    for &x in mesh.quad_nodes.iter().step_by(13) {
        let mut acc = 0.0;
        let mut aux = Vec::new();
        for (p, info) in panels.iter().enumerate() {
            let dist = (x - info.centroid).norm();
            match classify(dist, info.diam, cfg) {
                0 => {
                    let npt = mesh.rule.nodes_per_tri();
                    for k in 0..npt {
                        let q = p * npt + k;
                        let y = mesh.quad_nodes[q];
                        let g = helmholtz_kernel(x, y, 0.0)?.grad_x;
                        // d/dn_y G0(x, y) = -grad_x G0 . n_y.
                        let v = -crate::cdot(&g, &cvec3_from_real(mesh.normals[q])).re;
                        acc += v * mesh.quad_weights[q];
                    }
                }
                band => {
                    aux.clear();
                    if band == 2 {
                        let bary = closest_point_bary(&info.verts, nearest_flat(mesh, p, x));
                        geom.polar_points(p, bary, &mut aux);
                    } else {
                        geom.subdivided_points(p, cfg.medium_levels, &mut aux);
                    }
                    for pt in &aux {
                        let g = helmholtz_kernel(x, pt.pos, 0.0)?.grad_x;
                        let v = -crate::cdot(&g, &cvec3_from_real(pt.normal)).re;
                        acc += v * pt.weight;
                    }
                }
            }
        }
        worst = worst.max((acc + 0.5).abs());
    }
    Ok(worst)
}
