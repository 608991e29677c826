//! Octahedron-based ball meshes and red refinement.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Vector3;

use super::{boundary_faces, edges_of_faces, BulkSurfaceMesh, DEFAULT_NODE_BUDGET};
use crate::error::{Error, Result};
use crate::geometry::AnalyticSurface;
use crate::num::Real;

/// Ball of the given radius: eight tetrahedra joining the octant faces of the
/// octahedron to the centre, red-refined `level` times with boundary vertices
/// snapped to the sphere after every refinement.
pub fn build_ball_mesh<T: Real>(radius: T, level: usize, degree: usize) -> Result<BulkSurfaceMesh<T>> {
    build_ball_mesh_with_budget(radius, level, degree, DEFAULT_NODE_BUDGET)
}

pub fn build_ball_mesh_with_budget<T: Real>(
    radius: T,
    level: usize,
    degree: usize,
    node_budget: usize,
) -> Result<BulkSurfaceMesh<T>> {
    if !(1..=3).contains(&degree) {
        return Err(Error::InvalidDegree(degree));
    }
    if !(radius > T::zero()) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {}", radius.to_f64_lossy())));
    }
    // Rough node count: vertices grow ~8x per level, lattice adds ~k^3.
    let estimate = 7usize.saturating_mul(8usize.saturating_pow(level as u32)).saturating_mul(degree.pow(3));
    if estimate > node_budget.saturating_mul(2) {
        return Err(Error::NodeBudgetExceeded { nodes: estimate, budget: node_budget });
    }
    let surface = AnalyticSurface::sphere(radius);
    let (mut vertices, mut tets) = octahedron(radius);
    for _ in 0..level {
        let faces = boundary_faces(&vertices, &tets)?;
        let edges = edges_of_faces(&faces);
        let (v, t) = red_refine(&vertices, &tets, &edges, Some(&surface))?;
        vertices = v;
        tets = t;
    }
    BulkSurfaceMesh::from_skeleton(&vertices, &tets, degree, Some(surface), node_budget)
}

/// Vertices `+e1, -e1, +e2, -e2, +e3, -e3` (scaled) followed by the centre.
fn octahedron<T: Real>(radius: T) -> (Vec<Vector3<T>>, Vec<[usize; 4]>) {
    let r = radius;
    let z = T::zero();
    let vertices = vec![
        Vector3::new(r, z, z),
        Vector3::new(-r, z, z),
        Vector3::new(z, r, z),
        Vector3::new(z, -r, z),
        Vector3::new(z, z, r),
        Vector3::new(z, z, -r),
        Vector3::new(z, z, z),
    ];
    let mut tets = Vec::with_capacity(8);
    for sx in 0..2 {
        for sy in 0..2 {
            for sz in 0..2 {
                let t = [6, sx, 2 + sy, 4 + sz];
                // odd number of negative axes flips orientation
                if (sx + sy + sz) % 2 == 1 {
                    tets.push([t[0], t[1], t[3], t[2]]);
                } else {
                    tets.push(t);
                }
            }
        }
    }
    (vertices, tets)
}

/// Splits every tetrahedron into eight.
///
/// The inner octahedron is cut along its shortest diagonal. Ties go to the
/// lexicographically largest absolute endpoint coordinates.
pub(crate) fn red_refine<T: Real>(
    vertices: &[Vector3<T>],
    tets: &[[usize; 4]],
    boundary_edges: &BTreeSet<(usize, usize)>,
    surface: Option<&AnalyticSurface<T>>,
) -> Result<(Vec<Vector3<T>>, Vec<[usize; 4]>)> {
    let mut out_vertices = vertices.to_vec();
    let mut midpoints: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let half = T::lit(0.5);
    let mut mid = |a: usize, b: usize, out: &mut Vec<Vector3<T>>| -> Result<usize> {
        let key = (a.min(b), a.max(b));
        if let Some(&m) = midpoints.get(&key) {
            return Ok(m);
        }
        let mut p = (vertices[a] + vertices[b]) * half;
        if boundary_edges.contains(&key) {
            if let Some(s) = surface {
                p = s.closest_point(&p)?;
            }
        }
        out.push(p);
        let id = out.len() - 1;
        midpoints.insert(key, id);
        Ok(id)
    };

    let mut out_tets = Vec::with_capacity(tets.len() * 8);
    for t in tets {
        let mut m = [[usize::MAX; 4]; 4];
        for i in 0..4 {
            for j in i + 1..4 {
                let id = mid(t[i], t[j], &mut out_vertices)?;
                m[i][j] = id;
                m[j][i] = id;
            }
        }
        out_tets.push([t[0], m[0][1], m[0][2], m[0][3]]);
        out_tets.push([m[0][1], t[1], m[1][2], m[1][3]]);
        out_tets.push([m[0][2], m[1][2], t[2], m[2][3]]);
        out_tets.push([m[0][3], m[1][3], m[2][3], t[3]]);

        // diagonal (m_ij, m_kl) with cycle m_ik, m_il, m_jl, m_jk around it
        let candidates = [(0, 1, 2, 3), (0, 2, 1, 3), (0, 3, 1, 2)];
        let chosen = choose_diagonal(&out_vertices, &m, &candidates);
        let (i, j, k, l) = candidates[chosen];
        let p = m[i][j];
        let q = m[k][l];
        let ring = [m[i][k], m[i][l], m[j][l], m[j][k]];
        for s in 0..4 {
            out_tets.push([p, q, ring[s], ring[(s + 1) % 4]]);
        }
    }
    let n = out_tets.len();
    for t in out_tets.iter_mut().skip(n - tets.len() * 8) {
        let a = out_vertices[t[1]] - out_vertices[t[0]];
        let b = out_vertices[t[2]] - out_vertices[t[0]];
        let c = out_vertices[t[3]] - out_vertices[t[0]];
        if a.cross(&b).dot(&c) < T::zero() {
            t.swap(2, 3);
        }
    }
    Ok((out_vertices, out_tets))
}

fn choose_diagonal<T: Real>(
    vertices: &[Vector3<T>],
    m: &[[usize; 4]; 4],
    candidates: &[(usize, usize, usize, usize)],
) -> usize {
    let lengths: Vec<T> = candidates
        .iter()
        .map(|&(i, j, k, l)| (vertices[m[i][j]] - vertices[m[k][l]]).norm())
        .collect();
    let shortest = lengths.iter().copied().fold(lengths[0], |a, b| a.min(b));
    let tol = shortest * T::lit(1e-10);
    let abs_key = |v: &Vector3<T>| [v.x.abs(), v.y.abs(), v.z.abs()];
    let lex_gt = |a: &[T; 3], b: &[T; 3]| {
        for c in 0..3 {
            if a[c] > b[c] {
                return true;
            }
            if a[c] < b[c] {
                return false;
            }
        }
        false
    };
    let mut best: Option<(usize, [T; 3])> = None;
    for (idx, &(i, j, k, l)) in candidates.iter().enumerate() {
        if lengths[idx] - shortest > tol {
            continue;
        }
        let a = abs_key(&vertices[m[i][j]]);
        let b = abs_key(&vertices[m[k][l]]);
        let key = if lex_gt(&a, &b) { a } else { b };
        match &best {
            Some((_, bk)) if !lex_gt(&key, bk) => {}
            _ => best = Some((idx, key)),
        }
    }
    best.map(|b| b.0).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_octahedron_counts() {
        let m = build_ball_mesh(1.0f64, 0, 1).unwrap();
        assert_eq!(m.n_nodes(), 7);
        assert_eq!(m.n_boundary(), 6);
        assert_eq!(m.n_tets(), 8);
        assert_eq!(m.n_faces(), 8);
        for x in &m.nodes()[..6] {
            assert_eq!(x.norm(), 1.0);
        }
        assert_eq!(m.nodes()[6], Vector3::zeros());
    }

    #[test]
    fn first_refinement_counts() {
        let m = build_ball_mesh(1.0f64, 1, 1).unwrap();
        assert_eq!(m.n_tets(), 64);
        assert_eq!(m.n_faces(), 32);
        assert_eq!(m.n_boundary(), 18);
        assert_eq!(m.n_nodes(), 25);
        for x in &m.nodes()[..18] {
            assert!((x.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn refine_matches_direct_construction() {
        for k in 1..=2 {
            let a = build_ball_mesh(1.0f64, 0, k).unwrap().refine().unwrap();
            let b = build_ball_mesh(1.0f64, 1, k).unwrap();
            assert_eq!(a.n_nodes(), b.n_nodes());
            assert_eq!(a.skeleton_tets(), b.skeleton_tets());
            for (x, y) in a.nodes().iter().zip(b.nodes()) {
                assert!((x - y).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn higher_order_boundary_nodes_on_sphere() {
        for k in 2..=3 {
            let m = build_ball_mesh(2.0f64, 1, k).unwrap();
            for x in &m.nodes()[..m.n_boundary()] {
                assert!((x.norm() - 2.0).abs() < 1e-14);
            }
            m.check_watertight().unwrap();
        }
    }

    #[test]
    fn rejects_invalid_input() {
        assert_eq!(build_ball_mesh(1.0f64, 0, 0).unwrap_err(), Error::InvalidDegree(0));
        assert!(matches!(build_ball_mesh(-1.0, 0, 1), Err(Error::InvalidArgument(_))));
        assert!(matches!(
            build_ball_mesh_with_budget(1.0f64, 3, 1, 100),
            Err(Error::NodeBudgetExceeded { .. })
        ));
    }
}
