//! Mass, stiffness, tangential-gradient and Robin matrices together with the
//! nonlinear load vectors of the coupled system.
//!
//! Element loops run in parallel; local contributions are collected in element
//! order and summed sequentially, so results are bitwise reproducible.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;

use crate::error::Result;
use crate::geometry::{check_len, face_normal_field, AnalyticSurface};
use crate::mesh::{surface_point, BulkSurfaceMesh, ReferenceElement, SurfacePoint};
use crate::num::Real;
use crate::sparse::SparseOperator;

/// Node partition under the boundary-first ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Part {
    Gamma,
    Omega,
}

/// Which bulk matrix a block view refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BulkMatrix {
    Mass,
    Stiffness,
}

/// All matrices of the semi-discrete system at one node configuration.
#[derive(Debug, Clone)]
pub struct OperatorSet<T: Real> {
    pub m_bulk: SparseOperator<T>,
    pub a_bulk: SparseOperator<T>,
    pub m_surf: SparseOperator<T>,
    pub a_surf: SparseOperator<T>,
    /// `3N_Γ × N_Γ`, row `i + ℓN_Γ` holds `∫ ψ_i (∇_Γ ψ_j)_ℓ`.
    pub d: SparseOperator<T>,
    /// `A_bulk + α γᵀ M_surf γ`.
    pub l: SparseOperator<T>,
    alpha: T,
    n_boundary: usize,
    stamp: u64,
}

impl<T: Real> OperatorSet<T> {
    pub fn assemble(mesh: &BulkSurfaceMesh<T>, alpha: T) -> Result<Self> {
        let (m_bulk, a_bulk) = assemble_bulk(mesh)?;
        let (m_surf, a_surf) = assemble_surface(mesh)?;
        let d = assemble_tangential_gradient(mesh)?;
        let l = robin_matrix(&a_bulk, &m_surf, alpha);
        Ok(Self { m_bulk, a_bulk, m_surf, a_surf, d, l, alpha, n_boundary: mesh.n_boundary(), stamp: stamp(mesh) })
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn n_nodes(&self) -> usize {
        self.m_bulk.nrows()
    }

    pub fn n_boundary(&self) -> usize {
        self.n_boundary
    }

    /// Hash of node coordinates, degree and quadrature orders.
    pub fn stamp(&self) -> u64 {
        self.stamp
    }

    pub fn range(&self, part: Part) -> std::ops::Range<usize> {
        match part {
            Part::Gamma => 0..self.n_boundary,
            Part::Omega => self.n_boundary..self.n_nodes(),
        }
    }

    /// Block of `M_bulk` or `A_bulk`, e.g. `A_ΩΓ` for `(Stiffness, Omega, Gamma)`.
    pub fn block(&self, which: BulkMatrix, rows: Part, cols: Part) -> SparseOperator<T> {
        let op = match which {
            BulkMatrix::Mass => &self.m_bulk,
            BulkMatrix::Stiffness => &self.a_bulk,
        };
        op.block(self.range(rows), self.range(cols))
    }
}

/// Configuration hash of a mesh.
pub fn stamp<T: Real>(mesh: &BulkSurfaceMesh<T>) -> u64 {
    let mut h = DefaultHasher::new();
    mesh.degree().hash(&mut h);
    mesh.tet_reference().quadrature().order().hash(&mut h);
    mesh.tri_reference().quadrature().order().hash(&mut h);
    for x in mesh.nodes() {
        for c in x.iter() {
            c.to_f64_lossy().to_bits().hash(&mut h);
        }
    }
    h.finish()
}

fn scatter<T: Real>(triplets: &mut Vec<(usize, usize, T)>, rows: &[usize], cols: &[usize], local: &DMatrix<T>) {
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            triplets.push((i, j, local[(a, b)]));
        }
    }
}

/// Bulk mass and stiffness matrices.
pub fn assemble_bulk<T: Real>(mesh: &BulkSurfaceMesh<T>) -> Result<(SparseOperator<T>, SparseOperator<T>)> {
    assemble_bulk_with(mesh, mesh.tet_reference())
}

pub fn assemble_bulk_with<T: Real>(
    mesh: &BulkSurfaceMesh<T>,
    reference: &ReferenceElement<T>,
) -> Result<(SparseOperator<T>, SparseOperator<T>)> {
    let nb = reference.n_basis();
    let locals: Vec<(DMatrix<T>, DMatrix<T>)> = (0..mesh.n_tets())
        .into_par_iter()
        .map(|e| {
            let mut m = DMatrix::zeros(nb, nb);
            let mut a = DMatrix::zeros(nb, nb);
            for (q, p) in mesh.element_geometry(e, reference)?.iter().enumerate() {
                let vals = reference.values(q);
                let grads: Vec<Vector3<T>> = reference.gradients(q).iter().map(|g| p.gradient(g)).collect();
                let dx = p.dx();
                for i in 0..nb {
                    for j in 0..nb {
                        m[(i, j)] += vals[i] * vals[j] * dx;
                        a[(i, j)] += grads[i].dot(&grads[j]) * dx;
                    }
                }
            }
            Ok((m, a))
        })
        .collect::<Result<_>>()?;
    let n = mesh.n_nodes();
    let mut tm = Vec::with_capacity(locals.len() * nb * nb);
    let mut ta = Vec::with_capacity(locals.len() * nb * nb);
    for (e, (m, a)) in locals.iter().enumerate() {
        let nodes = mesh.tet_nodes(e);
        scatter(&mut tm, nodes, nodes, m);
        scatter(&mut ta, nodes, nodes, a);
    }
    Ok((SparseOperator::from_triplets(n, n, &tm, true), SparseOperator::from_triplets(n, n, &ta, true)))
}

/// Quadrature points of a boundary face, optionally lifted onto an analytic
/// surface through the closest-point map.
pub fn face_points<T: Real>(
    mesh: &BulkSurfaceMesh<T>,
    face: usize,
    reference: &ReferenceElement<T>,
    lift: Option<&AnalyticSurface<T>>,
) -> Result<Vec<SurfacePoint<T>>> {
    let points = mesh.surface_element_geometry(face, reference)?;
    let Some(surface) = lift else {
        return Ok(points);
    };
    points
        .into_iter()
        .map(|p| {
            let y = surface.closest_point(&p.point)?;
            let j = surface.projection_jacobian(&p.point)?;
            surface_point(y, j * p.tangents[0], j * p.tangents[1], p.weight, face)
        })
        .collect()
}

/// Surface mass and Laplace–Beltrami stiffness matrices on `Γ_h`.
pub fn assemble_surface<T: Real>(mesh: &BulkSurfaceMesh<T>) -> Result<(SparseOperator<T>, SparseOperator<T>)> {
    assemble_surface_with(mesh, mesh.tri_reference(), None)
}

/// Surface matrices with a custom rule; with `lift` the lifted basis on the
/// analytic surface is used instead.
pub fn assemble_surface_with<T: Real>(
    mesh: &BulkSurfaceMesh<T>,
    reference: &ReferenceElement<T>,
    lift: Option<&AnalyticSurface<T>>,
) -> Result<(SparseOperator<T>, SparseOperator<T>)> {
    let nb = reference.n_basis();
    let locals: Vec<(DMatrix<T>, DMatrix<T>)> = (0..mesh.n_faces())
        .into_par_iter()
        .map(|f| {
            let mut m = DMatrix::zeros(nb, nb);
            let mut a = DMatrix::zeros(nb, nb);
            for (q, p) in face_points(mesh, f, reference, lift)?.iter().enumerate() {
                let vals = reference.values(q);
                let grads: Vec<Vector3<T>> = reference.gradients(q).iter().map(|g| p.surface_gradient(g)).collect();
                let da = p.da();
                for i in 0..nb {
                    for j in 0..nb {
                        m[(i, j)] += vals[i] * vals[j] * da;
                        a[(i, j)] += grads[i].dot(&grads[j]) * da;
                    }
                }
            }
            Ok((m, a))
        })
        .collect::<Result<_>>()?;
    let n = mesh.n_boundary();
    let mut tm = Vec::with_capacity(locals.len() * nb * nb);
    let mut ta = Vec::with_capacity(locals.len() * nb * nb);
    for (f, (m, a)) in locals.iter().enumerate() {
        let nodes = mesh.face_nodes(f);
        scatter(&mut tm, nodes, nodes, m);
        scatter(&mut ta, nodes, nodes, a);
    }
    Ok((SparseOperator::from_triplets(n, n, &tm, true), SparseOperator::from_triplets(n, n, &ta, true)))
}

/// Tangential gradient matrix `D`.
pub fn assemble_tangential_gradient<T: Real>(mesh: &BulkSurfaceMesh<T>) -> Result<SparseOperator<T>> {
    let reference = mesh.tri_reference();
    let nb = reference.n_basis();
    let locals: Vec<[DMatrix<T>; 3]> = (0..mesh.n_faces())
        .into_par_iter()
        .map(|f| {
            let mut d = [DMatrix::zeros(nb, nb), DMatrix::zeros(nb, nb), DMatrix::zeros(nb, nb)];
            for (q, p) in mesh.surface_element_geometry(f, reference)?.iter().enumerate() {
                let vals = reference.values(q);
                let da = p.da();
                for (j, g) in reference.gradients(q).iter().enumerate() {
                    let sg = p.surface_gradient(g);
                    for i in 0..nb {
                        for (l, dl) in d.iter_mut().enumerate() {
                            dl[(i, j)] += vals[i] * sg[l] * da;
                        }
                    }
                }
            }
            Ok(d)
        })
        .collect::<Result<_>>()?;
    let n = mesh.n_boundary();
    let mut t = Vec::with_capacity(locals.len() * 3 * nb * nb);
    for (f, d) in locals.iter().enumerate() {
        let nodes = mesh.face_nodes(f);
        for (l, dl) in d.iter().enumerate() {
            let rows: Vec<usize> = nodes.iter().map(|&i| i + l * n).collect();
            scatter(&mut t, &rows, nodes, dl);
        }
    }
    Ok(SparseOperator::from_triplets(3 * n, n, &t, false))
}

/// `L = A_bulk + α γᵀ M_surf γ`; `γ` selects the leading boundary block.
pub fn robin_matrix<T: Real>(a_bulk: &SparseOperator<T>, m_surf: &SparseOperator<T>, alpha: T) -> SparseOperator<T> {
    a_bulk.add_embedded(T::one(), m_surf, alpha, 0)
}

/// `I_d ⊗ op`.
pub fn kron_lift<T: Real>(op: &SparseOperator<T>, d: usize) -> SparseOperator<T> {
    op.kron_identity(d)
}

/// `∫_{Ω_h} φ_i` for every node.
pub fn bulk_integrals<T: Real>(mesh: &BulkSurfaceMesh<T>) -> Result<DVector<T>> {
    let reference = mesh.tet_reference();
    let locals: Vec<Vec<T>> = (0..mesh.n_tets())
        .into_par_iter()
        .map(|e| {
            let mut v = vec![T::zero(); reference.n_basis()];
            for (q, p) in mesh.element_geometry(e, reference)?.iter().enumerate() {
                for (vi, phi) in v.iter_mut().zip(reference.values(q)) {
                    *vi += *phi * p.dx();
                }
            }
            Ok(v)
        })
        .collect::<Result<_>>()?;
    let mut out = DVector::zeros(mesh.n_nodes());
    for (e, v) in locals.iter().enumerate() {
        for (&i, vi) in mesh.tet_nodes(e).iter().zip(v) {
            out[i] += *vi;
        }
    }
    Ok(out)
}

/// Sums per-face local vectors of length `width · n_basis` into a stacked
/// vector of `width` blocks of size `N_Γ`.
fn gather_faces<T: Real>(mesh: &BulkSurfaceMesh<T>, locals: &[Vec<T>], width: usize) -> DVector<T> {
    let n = mesh.n_boundary();
    let mut out = DVector::zeros(width * n);
    for (f, v) in locals.iter().enumerate() {
        let nodes = mesh.face_nodes(f);
        for l in 0..width {
            for (a, &i) in nodes.iter().enumerate() {
                out[i + l * n] += v[a + l * nodes.len()];
            }
        }
    }
    out
}

fn interpolate<T: Real>(vals: &[T], nodes: &[usize], field: &DVector<T>) -> T {
    vals.iter().zip(nodes).fold(T::zero(), |s, (phi, &i)| s + *phi * field[i])
}

/// `f_u[i] = −∫_{Ω_h} φ_i + ∫_{Γ_h} (βH_h + Q_h) γ_h φ_i`.
pub fn load_f_u<T: Real>(mesh: &BulkSurfaceMesh<T>, h: &DVector<T>, q: &DVector<T>, beta: T) -> Result<DVector<T>> {
    let nb = mesh.n_boundary();
    check_len("mean curvature", nb, h.len())?;
    check_len("source", nb, q.len())?;
    let reference = mesh.tri_reference();
    let locals: Vec<Vec<T>> = (0..mesh.n_faces())
        .into_par_iter()
        .map(|f| {
            let nodes = mesh.face_nodes(f);
            let mut v = vec![T::zero(); nodes.len()];
            for (qp, p) in mesh.surface_element_geometry(f, reference)?.iter().enumerate() {
                let vals = reference.values(qp);
                let g = beta * interpolate(vals, nodes, h) + interpolate(vals, nodes, q);
                for (vi, psi) in v.iter_mut().zip(vals) {
                    *vi += g * *psi * p.da();
                }
            }
            Ok(v)
        })
        .collect::<Result<_>>()?;
    let surface = gather_faces(mesh, &locals, 1);
    let mut f = -bulk_integrals(mesh)?;
    for i in 0..nb {
        f[i] += surface[i];
    }
    Ok(f)
}

/// `f_n[i + ℓN_Γ] = β ∫_{Γ_h} |A_h|² (n_h)_ℓ ψ_i`.
pub fn load_f_n<T: Real>(mesh: &BulkSurfaceMesh<T>, n: &DVector<T>, beta: T) -> Result<DVector<T>> {
    check_len("normal field", 3 * mesh.n_boundary(), n.len())?;
    let reference = mesh.tri_reference();
    let locals: Vec<Vec<T>> = (0..mesh.n_faces())
        .into_par_iter()
        .map(|f| {
            let k = mesh.face_nodes(f).len();
            let mut v = vec![T::zero(); 3 * k];
            let points = mesh.surface_element_geometry(f, reference)?;
            let fields = face_normal_field(mesh, n, f, reference)?;
            for (qp, (p, (nh, a2))) in points.iter().zip(fields).enumerate() {
                for (a, psi) in reference.values(qp).iter().enumerate() {
                    for l in 0..3 {
                        v[a + l * k] += beta * a2 * nh[l] * *psi * p.da();
                    }
                }
            }
            Ok(v)
        })
        .collect::<Result<_>>()?;
    Ok(gather_faces(mesh, &locals, 3))
}

/// `f_H[i] = −∫_{Γ_h} |A_h|² V_h ψ_i`.
pub fn load_f_h<T: Real>(mesh: &BulkSurfaceMesh<T>, n: &DVector<T>, v_normal: &DVector<T>) -> Result<DVector<T>> {
    check_len("normal field", 3 * mesh.n_boundary(), n.len())?;
    check_len("normal velocity", mesh.n_boundary(), v_normal.len())?;
    let reference = mesh.tri_reference();
    let locals: Vec<Vec<T>> = (0..mesh.n_faces())
        .into_par_iter()
        .map(|f| {
            let nodes = mesh.face_nodes(f);
            let mut v = vec![T::zero(); nodes.len()];
            let points = mesh.surface_element_geometry(f, reference)?;
            let fields = face_normal_field(mesh, n, f, reference)?;
            for (qp, (p, (_, a2))) in points.iter().zip(fields).enumerate() {
                let vals = reference.values(qp);
                let vh = interpolate(vals, nodes, v_normal);
                for (vi, psi) in v.iter_mut().zip(vals) {
                    *vi -= a2 * vh * *psi * p.da();
                }
            }
            Ok(v)
        })
        .collect::<Result<_>>()?;
    Ok(gather_faces(mesh, &locals, 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_ball_mesh, DEFAULT_NODE_BUDGET};

    #[test]
    fn p1_mass_on_reference_tet() {
        let v = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
        ];
        let mesh = BulkSurfaceMesh::from_skeleton(&v, &[[0, 1, 2, 3]], 1, None, DEFAULT_NODE_BUDGET).unwrap();
        let (m, _) = assemble_bulk(&mesh).unwrap();
        let vol: f64 = 1.0 / 6.0;
        for i in 0..4 {
            for j in 0..4 {
                let expect = vol / 20.0 * if i == j { 2.0 } else { 1.0 };
                assert!((m.entry(i, j) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn octahedron_surface_area() {
        let mesh = build_ball_mesh(1.0f64, 0, 1).unwrap();
        let (m, a) = assemble_surface(&mesh).unwrap();
        let one = DVector::from_element(6, 1.0);
        assert!((one.dot(&m.matvec(&one)) - 4.0 * 3f64.sqrt()).abs() < 1e-13);
        assert!(a.matvec(&one).amax() < 1e-13);
    }

    #[test]
    fn robin_row_sums() {
        let mesh = build_ball_mesh(1.0f64, 1, 1).unwrap();
        let ops = OperatorSet::assemble(&mesh, 2.0).unwrap();
        let one = DVector::from_element(mesh.n_nodes(), 1.0);
        let l1 = ops.l.matvec(&one);
        let m1 = ops.m_surf.matvec(&DVector::from_element(mesh.n_boundary(), 1.0));
        for i in 0..mesh.n_nodes() {
            let expect = if i < mesh.n_boundary() { 2.0 * m1[i] } else { 0.0 };
            assert!((l1[i] - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn block_views_partition_the_matrix() {
        let mesh = build_ball_mesh(1.0f64, 1, 2).unwrap();
        let ops = OperatorSet::assemble(&mesh, 1.0).unwrap();
        let nb = mesh.n_boundary();
        let a = ops.a_bulk.to_dense();
        let aog = ops.block(BulkMatrix::Stiffness, Part::Omega, Part::Gamma).to_dense();
        assert_eq!(aog, a.view((nb, 0), (mesh.n_nodes() - nb, nb)).into_owned());
        let mgg = ops.block(BulkMatrix::Mass, Part::Gamma, Part::Gamma);
        assert!(mgg.is_symmetric());
    }

    #[test]
    fn stamp_tracks_configuration() {
        let mut mesh = build_ball_mesh(1.0f64, 0, 1).unwrap();
        let s0 = stamp(&mesh);
        assert_eq!(s0, stamp(&mesh.clone()));
        let moved: Vec<_> = mesh.nodes().iter().map(|x| x * 1.01).collect();
        mesh.set_nodes(&moved).unwrap();
        assert_ne!(s0, stamp(&mesh));
    }

    #[test]
    fn loads_reject_wrong_sizes() {
        let mesh = build_ball_mesh(1.0f64, 0, 1).unwrap();
        let z = DVector::zeros(5);
        assert!(load_f_u(&mesh, &z, &z, 1.0).is_err());
        assert!(load_f_n(&mesh, &z, 1.0).is_err());
    }
}
