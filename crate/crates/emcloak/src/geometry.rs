//! Triangulated closed surfaces with quadrature, plus spectral sphere grids.
//!
//! Spheres are icosahedral subdivision meshes whose quadrature nodes are
//! radially projected onto the exact sphere; the quadrature weight of a node
//! carries the flat-to-sphere area Jacobian so that smooth integrands are
//! integrated on the true surface. Arbitrary closed triangle meshes (OFF
//! import) are supported for solver plumbing with flat panels.

use crate::error::{Error, Result};
use crate::{CVec3, Vec3};
use num_complex::Complex64;
use std::collections::HashMap;
use std::io::{BufRead, Write};

/// Per-triangle quadrature rule, given in barycentric coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum TriRule {
    /// One point at the centroid, exact for linear integrands.
    Centroid,
    /// Symmetric three-point Gauss rule, exact for quadratics. Default.
    Gauss3,
}

impl TriRule {
    /// Barycentric points and weights (weights sum to 1).
    pub fn points(&self) -> Vec<([f64; 3], f64)> {
        match self {
            TriRule::Centroid => vec![([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 1.0)],
            TriRule::Gauss3 => {
                let a = 2.0 / 3.0;
                let b = 1.0 / 6.0;
                let w = 1.0 / 3.0;
                vec![([a, b, b], w), ([b, a, b], w), ([b, b, a], w)]
            }
        }
    }

    pub fn nodes_per_tri(&self) -> usize {
        match self {
            TriRule::Centroid => 1,
            TriRule::Gauss3 => 3,
        }
    }
}

impl Default for TriRule {
    fn default() -> Self {
        TriRule::Gauss3
    }
}

/// Anything that carries quadrature nodes with weights and outward normals.
pub trait SurfaceQuadrature {
    fn nodes(&self) -> &[Vec3];
    fn weights(&self) -> &[f64];
    fn normals(&self) -> &[Vec3];
    /// Radius when the surface is a sphere centered at the origin.
    fn sphere_radius(&self) -> Option<f64>;
}

/// Triangulated closed surface with quadrature nodes, weights and normals.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    /// Quadrature nodes, `rule.nodes_per_tri()` per triangle, triangle-major.
    pub quad_nodes: Vec<Vec3>,
    pub quad_weights: Vec<f64>,
    /// Outward unit normal at each quadrature node.
    pub normals: Vec<Vec3>,
    /// Triangle owning each quadrature node.
    pub node_panel: Vec<usize>,
    /// Rule nodes on the flat triangles, before any projection. Singular
    /// quadrature uses these to center polar transforms exactly.
    pub flat_quad_nodes: Vec<Vec3>,
    /// Set for origin-centered spheres; nodes then lie on the exact sphere.
    pub nominal_radius: Option<f64>,
    pub rule: TriRule,
}

const MAX_REFINEMENT: u32 = 7;

/// Icosahedral subdivision sphere of the given radius.
///
/// `refinement` levels of 1-to-4 subdivision give `20 * 4^refinement`
/// triangles; all vertices and quadrature nodes are projected onto the exact
/// sphere and node weights include the flat-to-sphere area Jacobian.
pub fn make_sphere_mesh(radius: f64, refinement: u32) -> Result<SurfaceMesh> {
    make_sphere_mesh_with_rule(radius, refinement, TriRule::default())
}

/// Same as [`make_sphere_mesh`] with an explicit per-triangle rule.
pub fn make_sphere_mesh_with_rule(
    radius: f64,
    refinement: u32,
    rule: TriRule,
) -> Result<SurfaceMesh> {
    if !(radius > 0.0) {
        return Err(Error::Domain(format!("sphere radius must be > 0, got {radius}")));
    }
    if refinement > MAX_REFINEMENT {
        return Err(Error::Resource(format!(
            "refinement {refinement} exceeds the supported maximum {MAX_REFINEMENT} \
             ({} triangles)",
            20u64 * 4u64.pow(MAX_REFINEMENT)
        )));
    }

    let (mut vertices, mut triangles) = icosahedron();
    for _ in 0..refinement {
        subdivide(&mut vertices, &mut triangles);
    }
    for v in vertices.iter_mut() {
        *v = v.normalize() * radius;
    }
    orient_outward(&vertices, &mut triangles);

    let mut mesh = SurfaceMesh {
        vertices,
        triangles,
        quad_nodes: Vec::new(),
        quad_weights: Vec::new(),
        normals: Vec::new(),
        node_panel: Vec::new(),
        flat_quad_nodes: Vec::new(),
        nominal_radius: Some(radius),
        rule,
    };
    mesh.build_quadrature();
    Ok(mesh)
}

impl SurfaceMesh {
    /// Assemble quadrature nodes/weights/normals from vertices and triangles.
    fn build_quadrature(&mut self) {
        let pts = self.rule.points();
        let n = self.triangles.len() * pts.len();
        self.quad_nodes = Vec::with_capacity(n);
        self.quad_weights = Vec::with_capacity(n);
        self.normals = Vec::with_capacity(n);
        self.node_panel = Vec::with_capacity(n);
        self.flat_quad_nodes = Vec::with_capacity(n);

        for (t, tri) in self.triangles.iter().enumerate() {
            let [a, b, c] = [self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]]];
            let cross = (b - a).cross(&(c - a));
            let area2 = cross.norm();
            let n_flat = cross / area2;
            for (bary, w) in &pts {
                let p_flat = a * bary[0] + b * bary[1] + c * bary[2];
                let (p, nrm, jac) = match self.nominal_radius {
                    Some(r) => {
                        // Radial projection onto the sphere; the solid-angle
                        // Jacobian converts the flat area element.
                        let len = p_flat.norm();
                        let dir = p_flat / len;
                        let j = r * r * dir.dot(&n_flat) / (len * len);
                        (dir * r, dir, j)
                    }
                    None => (p_flat, n_flat, 1.0),
                };
                self.quad_nodes.push(p);
                self.quad_weights.push(w * 0.5 * area2 * jac);
                self.normals.push(nrm);
                self.node_panel.push(t);
                self.flat_quad_nodes.push(p_flat);
            }
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.quad_nodes.len()
    }

    /// Total quadrature weight, an approximation of the surface area.
    pub fn area(&self) -> f64 {
        self.quad_weights.iter().sum()
    }

    /// Flat area of triangle `t`.
    pub fn tri_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.tri_vertices(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn tri_vertices(&self, t: usize) -> [Vec3; 3] {
        let tri = self.triangles[t];
        [self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]]]
    }

    pub fn tri_diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.tri_vertices(t);
        (a - b).norm().max((b - c).norm()).max((c - a).norm())
    }

    /// Verify closedness: every edge must be shared by exactly two triangles.
    pub fn check_closed(&self) -> Result<()> {
        let mut edges: HashMap<(usize, usize), u32> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (i, j) = (tri[k], tri[(k + 1) % 3]);
                if i >= self.vertices.len() || j >= self.vertices.len() {
                    return Err(Error::Mesh("triangle vertex index out of range".into()));
                }
                let key = (i.min(j), i.max(j));
                *edges.entry(key).or_insert(0) += 1;
            }
        }
        for (e, cnt) in edges {
            if cnt != 2 {
                return Err(Error::Mesh(format!(
                    "edge {:?} shared by {} triangles, expected 2",
                    e, cnt
                )));
            }
        }
        Ok(())
    }
}

impl SurfaceQuadrature for SurfaceMesh {
    fn nodes(&self) -> &[Vec3] {
        &self.quad_nodes
    }
    fn weights(&self) -> &[f64] {
        &self.quad_weights
    }
    fn normals(&self) -> &[Vec3] {
        &self.normals
    }
    fn sphere_radius(&self) -> Option<f64> {
        self.nominal_radius
    }
}

/// Scale a mesh by `rho`: positions scale by `rho`, weights by `rho^2`,
/// normals are unchanged.
pub fn scale_mesh(mesh: &SurfaceMesh, rho: f64) -> Result<SurfaceMesh> {
    if !(rho > 0.0) {
        return Err(Error::Domain(format!("scale factor must be > 0, got {rho}")));
    }
    let mut out = mesh.clone();
    for v in out.vertices.iter_mut() {
        *v *= rho;
    }
    for p in out.quad_nodes.iter_mut() {
        *p *= rho;
    }
    for p in out.flat_quad_nodes.iter_mut() {
        *p *= rho;
    }
    for w in out.quad_weights.iter_mut() {
        *w *= rho * rho;
    }
    out.nominal_radius = mesh.nominal_radius.map(|r| r * rho);
    Ok(out)
}

/// Quadrature sum of a scalar integrand over the surface.
pub fn integrate_scalar<S, F>(surface: &S, f: F) -> Complex64
where
    S: SurfaceQuadrature + ?Sized,
    F: Fn(Vec3) -> Complex64,
{
    surface
        .nodes()
        .iter()
        .zip(surface.weights())
        .map(|(&x, &w)| f(x) * w)
        .sum()
}

/// Quadrature sum of a complex vector field dotted with itself would lose the
/// weights; this integrates a pointwise function of (node, normal).
pub fn integrate_with_normal<S, F>(surface: &S, f: F) -> Complex64
where
    S: SurfaceQuadrature + ?Sized,
    F: Fn(Vec3, Vec3) -> Complex64,
{
    surface
        .nodes()
        .iter()
        .zip(surface.normals())
        .zip(surface.weights())
        .map(|((&x, &n), &w)| f(x, n) * w)
        .sum()
}

/// Discrete L2 norm of a nodal complex vector field on the surface.
pub fn l2_norm<S: SurfaceQuadrature + ?Sized>(surface: &S, values: &[CVec3]) -> f64 {
    values
        .iter()
        .zip(surface.weights())
        .map(|(v, &w)| w * v.norm_squared())
        .sum::<f64>()
        .sqrt()
}

// ---------------------------------------------------------------------------
// Icosahedron and subdivision
// ---------------------------------------------------------------------------

fn icosahedron() -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut vertices = vec![
        Vec3::new(-1.0, phi, 0.0),
        Vec3::new(1.0, phi, 0.0),
        Vec3::new(-1.0, -phi, 0.0),
        Vec3::new(1.0, -phi, 0.0),
        Vec3::new(0.0, -1.0, phi),
        Vec3::new(0.0, 1.0, phi),
        Vec3::new(0.0, -1.0, -phi),
        Vec3::new(0.0, 1.0, -phi),
        Vec3::new(phi, 0.0, -1.0),
        Vec3::new(phi, 0.0, 1.0),
        Vec3::new(-phi, 0.0, -1.0),
        Vec3::new(-phi, 0.0, 1.0),
    ];
    for v in vertices.iter_mut() {
        *v = v.normalize();
    }
    let triangles = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (vertices, triangles)
}

fn subdivide(vertices: &mut Vec<Vec3>, triangles: &mut Vec<[usize; 3]>) {
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut mid = |i: usize, j: usize, vertices: &mut Vec<Vec3>| -> usize {
        let key = (i.min(j), i.max(j));
        *midpoint.entry(key).or_insert_with(|| {
            let m = ((vertices[i] + vertices[j]) * 0.5).normalize();
            vertices.push(m);
            vertices.len() - 1
        })
    };
    let mut out = Vec::with_capacity(triangles.len() * 4);
    for tri in triangles.iter() {
        let [a, b, c] = *tri;
        let ab = mid(a, b, vertices);
        let bc = mid(b, c, vertices);
        let ca = mid(c, a, vertices);
        out.push([a, ab, ca]);
        out.push([b, bc, ab]);
        out.push([c, ca, bc]);
        out.push([ab, bc, ca]);
    }
    *triangles = out;
}

fn orient_outward(vertices: &[Vec3], triangles: &mut [[usize; 3]]) {
    for tri in triangles.iter_mut() {
        let [a, b, c] = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
        let n = (b - a).cross(&(c - a));
        let centroid = (a + b + c) / 3.0;
        if n.dot(&centroid) < 0.0 {
            tri.swap(1, 2);
        }
    }
}

// ---------------------------------------------------------------------------
// OFF import/export
// ---------------------------------------------------------------------------

/// Read a closed triangle mesh in ASCII OFF format. Panels stay flat and
/// normals come from the facets; orientation is taken from the file.
pub fn read_off<R: BufRead>(reader: R, rule: TriRule) -> Result<SurfaceMesh> {
    let mut lines = reader
        .lines()
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty() && !l.starts_with('#'));

    let header = lines.next().ok_or_else(|| Error::Validation("empty OFF file".into()))?;
    if header != "OFF" {
        return Err(Error::Validation(format!("expected OFF header, got '{header}'")));
    }
    let counts = lines.next().ok_or_else(|| Error::Validation("missing OFF counts".into()))?;
    let mut it = counts.split_whitespace();
    let nv: usize = parse_tok(it.next(), "vertex count")?;
    let nf: usize = parse_tok(it.next(), "face count")?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let line = lines.next().ok_or_else(|| Error::Validation("truncated OFF vertices".into()))?;
        let mut it = line.split_whitespace();
        let x: f64 = parse_tok(it.next(), "vertex coord")?;
        let y: f64 = parse_tok(it.next(), "vertex coord")?;
        let z: f64 = parse_tok(it.next(), "vertex coord")?;
        vertices.push(Vec3::new(x, y, z));
    }
    let mut triangles = Vec::with_capacity(nf);
    for _ in 0..nf {
        let line = lines.next().ok_or_else(|| Error::Validation("truncated OFF faces".into()))?;
        let mut it = line.split_whitespace();
        let k: usize = parse_tok(it.next(), "face arity")?;
        if k != 3 {
            return Err(Error::Validation("only triangle faces are supported".into()));
        }
        let a: usize = parse_tok(it.next(), "face index")?;
        let b: usize = parse_tok(it.next(), "face index")?;
        let c: usize = parse_tok(it.next(), "face index")?;
        if a >= nv || b >= nv || c >= nv {
            return Err(Error::Mesh("face index out of range".into()));
        }
        triangles.push([a, b, c]);
    }

    let mut mesh = SurfaceMesh {
        vertices,
        triangles,
        quad_nodes: Vec::new(),
        quad_weights: Vec::new(),
        normals: Vec::new(),
        node_panel: Vec::new(),
        flat_quad_nodes: Vec::new(),
        nominal_radius: None,
        rule,
    };
    mesh.check_closed()?;
    for (t, _) in mesh.triangles.iter().enumerate() {
        if mesh.tri_area(t) < 1e-14 {
            return Err(Error::Mesh(format!("degenerate triangle {t}")));
        }
    }
    mesh.build_quadrature();
    Ok(mesh)
}

fn parse_tok<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<T> {
    tok.ok_or_else(|| Error::Validation(format!("missing {what}")))?
        .parse::<T>()
        .map_err(|_| Error::Validation(format!("cannot parse {what}")))
}

/// Write the mesh in ASCII OFF format.
pub fn write_off<W: Write>(mesh: &SurfaceMesh, mut w: W) -> Result<()> {
    writeln!(w, "OFF")?;
    writeln!(w, "{} {} 0", mesh.vertices.len(), mesh.triangles.len())?;
    for v in &mesh.vertices {
        writeln!(w, "{:.17e} {:.17e} {:.17e}", v.x, v.y, v.z)?;
    }
    for t in &mesh.triangles {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Gauss-Legendre product grid on a sphere
// ---------------------------------------------------------------------------

/// Spectral quadrature grid on an origin-centered sphere: Gauss-Legendre in
/// cos(theta) times a uniform rule in phi. Exact for spherical-harmonic
/// integrands up to degree `2*n_theta - 1` in theta and azimuthal order
/// `n_phi - 1`.
#[derive(Debug, Clone)]
pub struct GaussSphereGrid {
    pub radius: f64,
    nodes: Vec<Vec3>,
    weights: Vec<f64>,
    normals: Vec<Vec3>,
}

impl GaussSphereGrid {
    pub fn new(radius: f64, n_theta: usize, n_phi: usize) -> Self {
        let (ct, wt) = gauss_legendre(n_theta);
        let mut nodes = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        let mut normals = Vec::with_capacity(n_theta * n_phi);
        let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
        for (i, &c) in ct.iter().enumerate() {
            let s = (1.0 - c * c).sqrt();
            for k in 0..n_phi {
                let phi = dphi * (k as f64 + 0.5);
                let dir = Vec3::new(s * phi.cos(), s * phi.sin(), c);
                nodes.push(dir * radius);
                weights.push(wt[i] * dphi * radius * radius);
                normals.push(dir);
            }
        }
        GaussSphereGrid { radius, nodes, weights, normals }
    }

    /// Grid exact for products of tangential harmonics up to degree `n_max`.
    pub fn for_degree(radius: f64, n_max: usize) -> Self {
        GaussSphereGrid::new(radius, n_max + 4, 2 * n_max + 8)
    }
}

impl SurfaceQuadrature for GaussSphereGrid {
    fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }
    fn weights(&self) -> &[f64] {
        &self.weights
    }
    fn normals(&self) -> &[Vec3] {
        &self.normals
    }
    fn sphere_radius(&self) -> Option<f64> {
        Some(self.radius)
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        // Tricomi-style initial guess, then Newton on P_n.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        loop {
            let (p, dp) = legendre_pair(n, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_pair(n, z);
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Legendre polynomial P_n and its derivative at `z`.
fn legendre_pair(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let pk = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = pk;
    }
    let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, dp)
}

// ---------------------------------------------------------------------------
