//! Analytic reference surfaces and discrete geometric quantities on `Γ_h`.
//!
//! Curvature conventions: `H = κ₁ + κ₂` and `|A|² = κ₁² + κ₂²` with the outward
//! normal, so a sphere of radius `R` has `H = 2/R` and `|A|² = 2/R²`.

use nalgebra::{DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::mesh::{BulkSurfaceMesh, ReferenceElement};
use crate::num::Real;

const PROJECTION_MAX_ITERS: usize = 200;

/// Closed surface with a computable closest-point map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalyticSurface<T: Real> {
    Sphere { center: Vector3<T>, radius: T },
    Ellipsoid { center: Vector3<T>, semi_axes: Vector3<T> },
}

/// Exact normal and curvatures at a surface point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactGeometry<T: Real> {
    pub normal: Vector3<T>,
    pub mean_curvature: T,
    pub weingarten_sq: T,
}

impl<T: Real> AnalyticSurface<T> {
    pub fn sphere(radius: T) -> Self {
        AnalyticSurface::Sphere { center: Vector3::zeros(), radius }
    }

    pub fn ellipsoid(a: T, b: T, c: T) -> Self {
        AnalyticSurface::Ellipsoid { center: Vector3::zeros(), semi_axes: Vector3::new(a, b, c) }
    }

    /// Unique nearest point on the surface.
    pub fn closest_point(&self, p: &Vector3<T>) -> Result<Vector3<T>> {
        match self {
            AnalyticSurface::Sphere { center, radius } => {
                let d = p - center;
                let r = d.norm();
                if r <= T::zero() {
                    return Err(projection_error(p));
                }
                Ok(center + d * (*radius / r))
            }
            AnalyticSurface::Ellipsoid { center, semi_axes } => {
                let (y, _) = ellipsoid_projection(&(p - center), semi_axes).ok_or_else(|| projection_error(p))?;
                Ok(center + y)
            }
        }
    }

    /// Derivative of the closest-point map at `p`.
    pub fn projection_jacobian(&self, p: &Vector3<T>) -> Result<Matrix3<T>> {
        match self {
            AnalyticSurface::Sphere { center, radius } => {
                let d = p - center;
                let r = d.norm();
                if r <= T::zero() {
                    return Err(projection_error(p));
                }
                let e = d / r;
                Ok((Matrix3::identity() - e * e.transpose()) * (*radius / r))
            }
            AnalyticSurface::Ellipsoid { center, semi_axes } => {
                let x = p - center;
                let (y, t) = ellipsoid_projection(&x, semi_axes).ok_or_else(|| projection_error(p))?;
                let a2 = semi_axes.component_mul(semi_axes);
                let denom = a2.add_scalar(t);
                let s: T = (0..3).map(|i| y[i] * y[i] / (a2[i] * denom[i])).fold(T::zero(), |a, b| a + b);
                let dt = Vector3::from_fn(|j, _| y[j] / denom[j] / s);
                Ok(Matrix3::from_fn(|i, j| {
                    let diag = if i == j { a2[i] / denom[i] } else { T::zero() };
                    diag - y[i] / denom[i] * dt[j]
                }))
            }
        }
    }

    /// Outward normal, mean curvature and `|A|²` at a point on the surface.
    pub fn exact_geometry(&self, p: &Vector3<T>) -> ExactGeometry<T> {
        match self {
            AnalyticSurface::Sphere { center, radius } => {
                let d = p - center;
                let r = *radius;
                ExactGeometry {
                    normal: d / d.norm(),
                    mean_curvature: T::lit(2.0) / r,
                    weingarten_sq: T::lit(2.0) / (r * r),
                }
            }
            AnalyticSurface::Ellipsoid { center, semi_axes } => {
                // Level set g = Σ y_i²/a_i² - 1; shape operator P ∇²g P / |∇g|.
                let y = p - center;
                let two = T::lit(2.0);
                let grad = Vector3::from_fn(|i, _| two * y[i] / (semi_axes[i] * semi_axes[i]));
                let gn = grad.norm();
                let normal = grad / gn;
                let hess = Matrix3::from_diagonal(&Vector3::from_fn(|i, _| two / (semi_axes[i] * semi_axes[i])));
                let proj = Matrix3::identity() - normal * normal.transpose();
                let shape = proj * hess * proj / gn;
                ExactGeometry {
                    normal,
                    mean_curvature: shape.trace(),
                    weingarten_sq: shape.norm_squared(),
                }
            }
        }
    }
}

fn projection_error<T: Real>(p: &Vector3<T>) -> Error {
    Error::ProjectionFailed { x: p.x.to_f64_lossy(), y: p.y.to_f64_lossy(), z: p.z.to_f64_lossy() }
}

/// Closest point on the centred ellipsoid, returned with the Lagrange
/// parameter `t` such that `y_i = a_i² x_i / (a_i² + t)`.
///
/// Safeguarded Newton on `f(t) = Σ (a_i x_i / (a_i² + t))² - 1`, which is
/// convex and decreasing on `(-min a_i², ∞)`.
fn ellipsoid_projection<T: Real>(x: &Vector3<T>, axes: &Vector3<T>) -> Option<(Vector3<T>, T)> {
    let a2 = axes.component_mul(axes);
    let f = |t: T| -> (T, T) {
        let mut val = -T::one();
        let mut der = T::zero();
        for i in 0..3 {
            let q = axes[i] * x[i] / (a2[i] + t);
            val += q * q;
            der -= T::lit(2.0) * q * q / (a2[i] + t);
        }
        (val, der)
    };
    let a_min2 = a2.min();
    let scale = a2.max();
    let mut lo = -a_min2;
    let mut hi = axes.max() * x.norm();
    if hi <= lo {
        return None;
    }
    // Points on an axis of the smallest semi-axis direction can sit at the pole
    // of the bracket; start from the midpoint if the left end is singular.
    let mut t = if x.norm() <= T::zero() { return None } else { (lo + hi) * T::lit(0.5) };
    for _ in 0..PROJECTION_MAX_ITERS {
        let (val, der) = f(t);
        if val > T::zero() {
            lo = t;
        } else {
            hi = t;
        }
        let mut next = t - val / der;
        if !(next > lo && next < hi) || der >= T::zero() {
            next = (lo + hi) * T::lit(0.5);
        }
        t = next;
        let (val, _) = f(t);
        if val.abs() <= T::lit(8.0) * T::eps() || hi - lo <= T::lit(4.0) * T::eps() * (t.abs() + scale) {
            let y = Vector3::from_fn(|i, _| a2[i] * x[i] / (a2[i] + t));
            return Some((y, t));
        }
    }
    None
}

/// Nodal samples of the surface fields on `Γ_h`.
///
/// Vector fields are stacked by component: entry `i + ℓ N_Γ` holds component `ℓ`
/// at boundary node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceFieldSamples<T: Real> {
    pub normal: DVector<T>,
    pub mean_curvature: DVector<T>,
    pub source: DVector<T>,
}

/// Interpolates the exact normal, mean curvature and source at the projections
/// of the boundary nodes.
pub fn init_surface_fields<T: Real>(
    mesh: &BulkSurfaceMesh<T>,
    surface: &AnalyticSurface<T>,
    source: &dyn Fn(&Vector3<T>, T) -> T,
    time: T,
) -> Result<SurfaceFieldSamples<T>> {
    let nb = mesh.n_boundary();
    let mut normal = DVector::zeros(3 * nb);
    let mut mean_curvature = DVector::zeros(nb);
    let mut q = DVector::zeros(nb);
    for (j, x) in mesh.nodes()[..nb].iter().enumerate() {
        let p = surface.closest_point(x)?;
        let g = surface.exact_geometry(&p);
        for l in 0..3 {
            normal[j + l * nb] = g.normal[l];
        }
        mean_curvature[j] = g.mean_curvature;
        q[j] = source(&p, time);
    }
    Ok(SurfaceFieldSamples { normal, mean_curvature, source: q })
}

/// Values of the interpolated normal field and of `|∇_{Γ_h} n_h|²` at the
/// quadrature points of one boundary face.
pub(crate) fn face_normal_field<T: Real>(
    mesh: &BulkSurfaceMesh<T>,
    n_nodal: &DVector<T>,
    face: usize,
    reference: &ReferenceElement<T>,
) -> Result<Vec<(Vector3<T>, T)>> {
    let nb = mesh.n_boundary();
    let nodes = mesh.face_nodes(face);
    let points = mesh.surface_element_geometry(face, reference)?;
    let mut out = Vec::with_capacity(points.len());
    for (q, sp) in points.iter().enumerate() {
        let vals = reference.values(q);
        let grads = reference.gradients(q);
        let mut n_h = Vector3::zeros();
        // row ℓ holds ∇_Γ (n_h)_ℓ
        let mut jac = Matrix3::<T>::zeros();
        for (a, &node) in nodes.iter().enumerate() {
            let sg = sp.surface_gradient(&grads[a]);
            for l in 0..3 {
                let c = n_nodal[node + l * nb];
                n_h[l] += c * vals[a];
                for m in 0..3 {
                    jac[(l, m)] += c * sg[m];
                }
            }
        }
        out.push((n_h, jac.norm_squared()));
    }
    Ok(out)
}

/// `|A_h|²` at the quadrature points of a face: the squared Frobenius norm of
/// the discrete surface Jacobian of the interpolated normal field.
pub fn discrete_weingarten_sq<T: Real>(
    mesh: &BulkSurfaceMesh<T>,
    n_nodal: &DVector<T>,
    face: usize,
    reference: &ReferenceElement<T>,
) -> Result<Vec<T>> {
    check_len("normal field", 3 * mesh.n_boundary(), n_nodal.len())?;
    Ok(face_normal_field(mesh, n_nodal, face, reference)?.into_iter().map(|(_, a)| a).collect())
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::SizeMismatch { what, expected, got });
    }
    Ok(())
}
