//! Isoparametric bulk–surface meshes of ball-like domains.
//!
//! Nodes are numbered boundary-first: indices `0..N_Γ` are the nodes on the
//! boundary surface `Γ_h`, the remaining `N - N_Γ` are interior. Trace and
//! restriction operators are therefore plain index ranges.

mod ball;
mod quadrature;
mod quality;
mod reference;

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Matrix2, Matrix3, Vector3};

pub use ball::{build_ball_mesh, build_ball_mesh_with_budget};
pub use quadrature::{gauss_legendre, QuadratureRule};
pub use quality::MeshQualityReport;
pub use reference::{lattice, ReferenceElement};

use crate::error::{Error, Result};
use crate::geometry::AnalyticSurface;
use crate::num::Real;

/// Default cap on the number of mesh nodes.
pub const DEFAULT_NODE_BUDGET: usize = 4_000_000;

/// Local vertex triples of the four tetrahedron faces; face `i` is opposite vertex `i`.
const TET_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

/// Degree-`k` isoparametric tetrahedral mesh together with its boundary
/// triangulation.
#[derive(Debug, Clone)]
pub struct BulkSurfaceMesh<T: Real> {
    degree: usize,
    nodes: Vec<Vector3<T>>,
    n_boundary: usize,
    tet_nodes: Vec<usize>,
    face_nodes: Vec<usize>,
    /// Straight-sided vertex skeleton, kept for refinement.
    skeleton_tets: Vec<[usize; 4]>,
    skeleton_faces: Vec<[usize; 3]>,
    vertex_nodes: Vec<usize>,
    surface: Option<AnalyticSurface<T>>,
    node_budget: usize,
    tet_ref: ReferenceElement<T>,
    tri_ref: ReferenceElement<T>,
}

/// Geometry of the isoparametric map at one quadrature point of a tetrahedron.
#[derive(Debug, Clone, Copy)]
pub struct ElementPoint<T: Real> {
    pub point: Vector3<T>,
    /// `J[(r, a)] = ∂x_r / ∂ξ_a`.
    pub jacobian: Matrix3<T>,
    pub det: T,
    pub inv_transpose: Matrix3<T>,
    /// Reference quadrature weight.
    pub weight: T,
}

impl<T: Real> ElementPoint<T> {
    /// Physical volume element `w · det J`.
    pub fn dx(&self) -> T {
        self.weight * self.det
    }

    /// Maps a reference gradient to the physical gradient.
    pub fn gradient(&self, reference: &[T; 3]) -> Vector3<T> {
        self.inv_transpose * Vector3::new(reference[0], reference[1], reference[2])
    }
}

/// Geometry of a boundary face at one quadrature point.
#[derive(Debug, Clone, Copy)]
pub struct SurfacePoint<T: Real> {
    pub point: Vector3<T>,
    pub tangents: [Vector3<T>; 2],
    /// Area element `|t₁ × t₂|`.
    pub measure: T,
    /// Outward unit normal of `Γ_h`.
    pub normal: Vector3<T>,
    pub metric_inverse: Matrix2<T>,
    pub weight: T,
}

impl<T: Real> SurfacePoint<T> {
    pub fn da(&self) -> T {
        self.weight * self.measure
    }

    /// Tangential gradient `Σ_ab g^{ab} ∂_a ψ t_b` of a function with the given
    /// reference gradient.
    pub fn surface_gradient(&self, reference: &[T; 3]) -> Vector3<T> {
        let g = &self.metric_inverse;
        let c0 = g[(0, 0)] * reference[0] + g[(0, 1)] * reference[1];
        let c1 = g[(1, 0)] * reference[0] + g[(1, 1)] * reference[1];
        self.tangents[0] * c0 + self.tangents[1] * c1
    }

    /// Tangential projector `I - n nᵀ`.
    pub fn projector(&self) -> Matrix3<T> {
        Matrix3::identity() - self.normal * self.normal.transpose()
    }
}

impl<T: Real> BulkSurfaceMesh<T> {
    /// Builds a degree-`k` mesh from a positively oriented vertex skeleton.
    ///
    /// Boundary lattice nodes that are not skeleton vertices are projected onto
    /// `surface` when one is given; all other higher-order nodes sit at their
    /// affine lattice positions.
    pub fn from_skeleton(
        vertices: &[Vector3<T>],
        tets: &[[usize; 4]],
        degree: usize,
        surface: Option<AnalyticSurface<T>>,
        node_budget: usize,
    ) -> Result<Self> {
        if !(1..=3).contains(&degree) {
            return Err(Error::InvalidDegree(degree));
        }
        let tet_ref = ReferenceElement::with_default_quadrature(3, degree)?;
        let tri_ref = ReferenceElement::with_default_quadrature(2, degree)?;
        let tets: Vec<[usize; 4]> = tets.iter().map(|t| orient_positively(vertices, *t)).collect();
        let faces = boundary_faces(vertices, &tets)?;

        let key = |verts: &[usize], alpha: &[usize]| -> Vec<usize> {
            let mut k: Vec<usize> = verts
                .iter()
                .zip(alpha)
                .flat_map(|(&v, &a)| std::iter::repeat_n(v, a))
                .collect();
            k.sort_unstable();
            k
        };

        let mut boundary_keys = BTreeSet::new();
        for f in &faces {
            for beta in tri_ref.lattice() {
                boundary_keys.insert(key(f, beta));
            }
        }
        let mut interior_keys = BTreeSet::new();
        for t in &tets {
            for alpha in tet_ref.lattice() {
                let k = key(t, alpha);
                if !boundary_keys.contains(&k) {
                    interior_keys.insert(k);
                }
            }
        }
        let n_nodes = boundary_keys.len() + interior_keys.len();
        if n_nodes > node_budget {
            return Err(Error::NodeBudgetExceeded { nodes: n_nodes, budget: node_budget });
        }
        let n_boundary = boundary_keys.len();
        let mut index: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        let mut nodes = Vec::with_capacity(n_nodes);
        let inv_k = T::one() / T::from_usize_lossy(degree);
        for (i, k) in boundary_keys.into_iter().chain(interior_keys).enumerate() {
            let mut p = Vector3::zeros();
            for &v in &k {
                p += vertices[v] * inv_k;
            }
            let is_vertex = k.iter().all(|&v| v == k[0]);
            if i < n_boundary && !is_vertex {
                if let Some(s) = &surface {
                    p = s.closest_point(&p)?;
                }
            }
            if is_vertex {
                p = vertices[k[0]];
            }
            nodes.push(p);
            index.insert(k, i);
        }

        let mut tet_nodes = Vec::with_capacity(tets.len() * tet_ref.n_basis());
        for t in &tets {
            for alpha in tet_ref.lattice() {
                tet_nodes.push(index[&key(t, alpha)]);
            }
        }
        let mut face_nodes = Vec::with_capacity(faces.len() * tri_ref.n_basis());
        for f in &faces {
            for beta in tri_ref.lattice() {
                face_nodes.push(index[&key(f, beta)]);
            }
        }
        let vertex_nodes = (0..vertices.len()).map(|v| index[&vec![v; degree]]).collect();

        let mesh = Self {
            degree,
            nodes,
            n_boundary,
            tet_nodes,
            face_nodes,
            skeleton_tets: tets,
            skeleton_faces: faces,
            vertex_nodes,
            surface,
            node_budget,
            tet_ref,
            tri_ref,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Uniform red refinement; new boundary nodes are snapped to the parent
    /// surface when the mesh carries one.
    pub fn refine(&self) -> Result<Self> {
        let vertices = self.skeleton_vertices();
        let boundary_edges = edges_of_faces(&self.skeleton_faces);
        let (v, t) = ball::red_refine(&vertices, &self.skeleton_tets, &boundary_edges, self.surface.as_ref())?;
        Self::from_skeleton(&v, &t, self.degree, self.surface, self.node_budget)
    }

    /// Checks positivity of all Jacobian determinants and nondegenerate faces.
    pub fn validate(&self) -> Result<()> {
        for e in 0..self.n_tets() {
            self.element_geometry(e, &self.tet_ref)?;
        }
        for f in 0..self.n_faces() {
            self.surface_element_geometry(f, &self.tri_ref)?;
        }
        Ok(())
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Number of boundary nodes `N_Γ`.
    pub fn n_boundary(&self) -> usize {
        self.n_boundary
    }

    pub fn n_interior(&self) -> usize {
        self.nodes.len() - self.n_boundary
    }

    pub fn n_tets(&self) -> usize {
        self.skeleton_tets.len()
    }

    pub fn n_faces(&self) -> usize {
        self.skeleton_faces.len()
    }

    pub fn nodes(&self) -> &[Vector3<T>] {
        &self.nodes
    }

    /// Moves the nodes; connectivity is unchanged.
    pub fn set_nodes(&mut self, nodes: &[Vector3<T>]) -> Result<()> {
        if nodes.len() != self.nodes.len() {
            return Err(Error::SizeMismatch { what: "node positions", expected: self.nodes.len(), got: nodes.len() });
        }
        self.nodes.copy_from_slice(nodes);
        Ok(())
    }

    /// Node indices of tetrahedron `e` in reference lattice order.
    pub fn tet_nodes(&self, e: usize) -> &[usize] {
        let n = self.tet_ref.n_basis();
        &self.tet_nodes[e * n..(e + 1) * n]
    }

    /// Node indices of boundary face `f` in reference lattice order.
    pub fn face_nodes(&self, f: usize) -> &[usize] {
        let n = self.tri_ref.n_basis();
        &self.face_nodes[f * n..(f + 1) * n]
    }

    pub fn skeleton_tets(&self) -> &[[usize; 4]] {
        &self.skeleton_tets
    }

    pub fn skeleton_faces(&self) -> &[[usize; 3]] {
        &self.skeleton_faces
    }

    /// Node index of every skeleton vertex.
    pub fn vertex_nodes(&self) -> &[usize] {
        &self.vertex_nodes
    }

    pub fn skeleton_vertices(&self) -> Vec<Vector3<T>> {
        self.vertex_nodes.iter().map(|&n| self.nodes[n]).collect()
    }

    /// Analytic surface the boundary nodes were snapped to, if any.
    pub fn surface(&self) -> Option<&AnalyticSurface<T>> {
        self.surface.as_ref()
    }

    /// Same mesh with quadrature of the given orders on tetrahedra and faces.
    pub fn with_quadrature_orders(mut self, tet_order: usize, tri_order: usize) -> Result<Self> {
        self.tet_ref = ReferenceElement::new(3, self.degree, QuadratureRule::simplex(3, tet_order))?;
        self.tri_ref = ReferenceElement::new(2, self.degree, QuadratureRule::simplex(2, tri_order))?;
        Ok(self)
    }

    pub fn tet_reference(&self) -> &ReferenceElement<T> {
        &self.tet_ref
    }

    pub fn tri_reference(&self) -> &ReferenceElement<T> {
        &self.tri_ref
    }

    /// Isoparametric map of tetrahedron `e` at the quadrature points of `reference`.
    pub fn element_geometry(&self, e: usize, reference: &ReferenceElement<T>) -> Result<Vec<ElementPoint<T>>> {
        let nodes = self.tet_nodes(e);
        let quad = reference.quadrature();
        let mut out = Vec::with_capacity(quad.len());
        for q in 0..quad.len() {
            let vals = reference.values(q);
            let grads = reference.gradients(q);
            let mut point = Vector3::zeros();
            let mut jac = Matrix3::<T>::zeros();
            for (a, &n) in nodes.iter().enumerate() {
                let x = &self.nodes[n];
                point += x * vals[a];
                for c in 0..3 {
                    jac[(0, c)] += x[0] * grads[a][c];
                    jac[(1, c)] += x[1] * grads[a][c];
                    jac[(2, c)] += x[2] * grads[a][c];
                }
            }
            let det = jac.determinant();
            if det <= T::zero() {
                return Err(Error::DegenerateElement { element: e, point: q, det: det.to_f64_lossy() });
            }
            let inv = jac.try_inverse().ok_or(Error::DegenerateElement {
                element: e,
                point: q,
                det: det.to_f64_lossy(),
            })?;
            out.push(ElementPoint {
                point,
                jacobian: jac,
                det,
                inv_transpose: inv.transpose(),
                weight: quad.weights()[q],
            });
        }
        Ok(out)
    }

    /// Parametrised boundary face `f` at the quadrature points of `reference`.
    pub fn surface_element_geometry(&self, f: usize, reference: &ReferenceElement<T>) -> Result<Vec<SurfacePoint<T>>> {
        let nodes = self.face_nodes(f);
        let quad = reference.quadrature();
        let mut out = Vec::with_capacity(quad.len());
        for q in 0..quad.len() {
            let vals = reference.values(q);
            let grads = reference.gradients(q);
            let mut point = Vector3::zeros();
            let mut t0 = Vector3::zeros();
            let mut t1 = Vector3::zeros();
            for (a, &n) in nodes.iter().enumerate() {
                let x = &self.nodes[n];
                point += x * vals[a];
                t0 += x * grads[a][0];
                t1 += x * grads[a][1];
            }
            out.push(surface_point(point, t0, t1, quad.weights()[q], f)?);
        }
        Ok(out)
    }

    /// Volume of `Ω_h` by quadrature.
    pub fn volume(&self) -> Result<T> {
        let mut v = T::zero();
        for e in 0..self.n_tets() {
            for p in self.element_geometry(e, &self.tet_ref)? {
                v += p.dx();
            }
        }
        Ok(v)
    }

    /// Area of `Γ_h` by quadrature.
    pub fn area(&self) -> Result<T> {
        let mut a = T::zero();
        for f in 0..self.n_faces() {
            for p in self.surface_element_geometry(f, &self.tri_ref)? {
                a += p.da();
            }
        }
        Ok(a)
    }

    /// Area-weighted mean of `|x - c|` over the quadrature points of `Γ_h`.
    pub fn mean_boundary_radius(&self, center: &Vector3<T>) -> Result<T> {
        let mut a = T::zero();
        let mut r = T::zero();
        for f in 0..self.n_faces() {
            for p in self.surface_element_geometry(f, &self.tri_ref)? {
                a += p.da();
                r += p.da() * (p.point - center).norm();
            }
        }
        Ok(r / a)
    }

    /// Face-sharing counts of the skeleton: every interior face must be shared
    /// by two tetrahedra and every boundary face by one.
    pub fn check_watertight(&self) -> Result<()> {
        let counts = face_counts(&self.skeleton_tets);
        let boundary: BTreeSet<[usize; 3]> = self.skeleton_faces.iter().map(|f| sorted3(*f)).collect();
        for (face, (count, _, _)) in counts {
            let expected = if boundary.contains(&face) { 1 } else { 2 };
            if count != expected {
                return Err(Error::NotWatertight { face, count });
            }
        }
        Ok(())
    }
}

pub(crate) fn surface_point<T: Real>(
    point: Vector3<T>,
    t0: Vector3<T>,
    t1: Vector3<T>,
    weight: T,
    face: usize,
) -> Result<SurfacePoint<T>> {
    let cross = t0.cross(&t1);
    let measure = cross.norm();
    if measure <= T::zero() {
        return Err(Error::DegenerateFace { face, measure: measure.to_f64_lossy() });
    }
    let metric = Matrix2::new(t0.dot(&t0), t0.dot(&t1), t1.dot(&t0), t1.dot(&t1));
    let metric_inverse = metric.try_inverse().ok_or(Error::DegenerateFace { face, measure: measure.to_f64_lossy() })?;
    Ok(SurfacePoint { point, tangents: [t0, t1], measure, normal: cross / measure, metric_inverse, weight })
}

fn sorted3(mut f: [usize; 3]) -> [usize; 3] {
    f.sort_unstable();
    f
}

fn signed_volume<T: Real>(v: &[Vector3<T>], t: &[usize; 4]) -> T {
    let a = v[t[1]] - v[t[0]];
    let b = v[t[2]] - v[t[0]];
    let c = v[t[3]] - v[t[0]];
    a.cross(&b).dot(&c)
}

fn orient_positively<T: Real>(v: &[Vector3<T>], t: [usize; 4]) -> [usize; 4] {
    if signed_volume(v, &t) < T::zero() {
        [t[0], t[1], t[3], t[2]]
    } else {
        t
    }
}

/// Sorted face → (count, first tet, local opposite vertex).
fn face_counts(tets: &[[usize; 4]]) -> BTreeMap<[usize; 3], (usize, usize, usize)> {
    let mut map: BTreeMap<[usize; 3], (usize, usize, usize)> = BTreeMap::new();
    for (e, t) in tets.iter().enumerate() {
        for (opp, lf) in TET_FACES.iter().enumerate() {
            let f = sorted3([t[lf[0]], t[lf[1]], t[lf[2]]]);
            map.entry(f).and_modify(|c| c.0 += 1).or_insert((1, e, opp));
        }
    }
    map
}

/// Boundary faces of a tetrahedral skeleton, oriented with outward normals,
/// in order of first appearance.
pub(crate) fn boundary_faces<T: Real>(vertices: &[Vector3<T>], tets: &[[usize; 4]]) -> Result<Vec<[usize; 3]>> {
    let counts = face_counts(tets);
    let mut faces = Vec::new();
    for (e, t) in tets.iter().enumerate() {
        for (opp, lf) in TET_FACES.iter().enumerate() {
            let f = [t[lf[0]], t[lf[1]], t[lf[2]]];
            let (count, first, first_opp) = counts[&sorted3(f)];
            if count > 2 {
                return Err(Error::NotWatertight { face: sorted3(f), count });
            }
            if count == 1 && first == e && first_opp == opp {
                let [a, b, c] = f;
                let d = t[opp];
                let n = (vertices[b] - vertices[a]).cross(&(vertices[c] - vertices[a]));
                if n.dot(&(vertices[d] - vertices[a])) > T::zero() {
                    faces.push([a, c, b]);
                } else {
                    faces.push([a, b, c]);
                }
            }
        }
    }
    Ok(faces)
}

pub(crate) fn edges_of_faces(faces: &[[usize; 3]]) -> BTreeSet<(usize, usize)> {
    let mut edges = BTreeSet::new();
    for f in faces {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[0], f[2])] {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    edges
}
