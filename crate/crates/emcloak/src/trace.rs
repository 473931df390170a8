//! Complex tangential vector fields sampled on a quadrature surface.

use crate::error::{Error, Result};
use crate::geometry::SurfaceQuadrature;
use crate::{cvec3_from_real, CVec3, Vec3};
use num_complex::Complex64;

/// Tangential trace sampled at the quadrature nodes of a surface, optionally
/// carrying surface-divergence data (the discrete counterpart of a member of
/// the Div-conforming trace space).
#[derive(Debug, Clone)]
pub struct TangentialTrace {
    pub values: Vec<CVec3>,
    pub div: Option<Vec<Complex64>>,
}

impl TangentialTrace {
    pub fn zero(n: usize) -> Self {
        TangentialTrace { values: vec![CVec3::zeros(); n], div: None }
    }

    /// Sample a field at the surface nodes, projecting out any normal
    /// component so the result is exactly tangential.
    pub fn from_fn<S, F>(surface: &S, f: F) -> Self
    where
        S: SurfaceQuadrature + ?Sized,
        F: Fn(Vec3) -> CVec3,
    {
        let values = surface
            .nodes()
            .iter()
            .zip(surface.normals())
            .map(|(&x, &nu)| tangential_part(f(x), nu))
            .collect();
        TangentialTrace { values, div: None }
    }

    pub fn with_div(mut self, div: Vec<Complex64>) -> Self {
        self.div = Some(div);
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest pointwise norm.
    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Discrete L2 norm with the surface quadrature weights.
    pub fn l2_norm<S: SurfaceQuadrature + ?Sized>(&self, surface: &S) -> f64 {
        crate::geometry::l2_norm(surface, &self.values)
    }

    /// Verify tangentiality against the surface normals.
    pub fn check_tangential<S: SurfaceQuadrature + ?Sized>(&self, surface: &S) -> Result<()> {
        let scale = self.max_norm().max(1.0);
        for (k, (v, nu)) in self.values.iter().zip(surface.normals()).enumerate() {
            let nproj = crate::cdot(v, &cvec3_from_real(*nu)).norm();
            if nproj > 1e-10 * scale {
                return Err(Error::Validation(format!(
                    "trace not tangential at node {k}: |v.nu| = {nproj:.3e}"
                )));
            }
        }
        Ok(())
    }

    /// Pointwise linear combination self + c * other.
    pub fn axpy(&self, c: Complex64, other: &TangentialTrace) -> TangentialTrace {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b * c)
            .collect();
        let div = match (&self.div, &other.div) {
            (Some(da), Some(db)) => {
                Some(da.iter().zip(db).map(|(a, b)| a + b * c).collect())
            }
            _ => None,
        };
        TangentialTrace { values, div }
    }
}

/// Remove the component along the (unit) normal.
pub fn tangential_part(v: CVec3, nu: Vec3) -> CVec3 {
    let n = cvec3_from_real(nu);
    let p = crate::cdot(&v, &n);
    v - n * p
}

/// nu x v at each node.
pub fn cross_with_normal<S: SurfaceQuadrature + ?Sized>(
    surface: &S,
    trace: &TangentialTrace,
) -> TangentialTrace {
    let values = trace
        .values
        .iter()
        .zip(surface.normals())
        .map(|(v, nu)| crate::rcross(nu, v))
        .collect();
    TangentialTrace { values, div: None }
}
