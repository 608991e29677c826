use nalgebra::Vector3;

use super::BulkSurfaceMesh;
use crate::error::Result;
use crate::num::Real;

/// Shape-regularity summary of a mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshQualityReport<T> {
    pub min_det: T,
    pub max_det: T,
    /// Minimum of `3 r_in / R_circ` over the straight skeleton tetrahedra
    /// (1 for the regular tetrahedron).
    pub min_radius_ratio: T,
    /// Maximum element diameter.
    pub h: T,
    /// Edge length of the regular tetrahedron with the mean element volume,
    /// `(6√2 |Ω_h| / #tets)^{1/3}`.
    pub h_mean: T,
}

/// Normalised radius ratio `3 r / R` of a tetrahedron.
pub(crate) fn radius_ratio<T: Real>(p: [Vector3<T>; 4]) -> T {
    let a = p[1] - p[0];
    let b = p[2] - p[0];
    let c = p[3] - p[0];
    let six_vol = a.cross(&b).dot(&c).abs();
    if six_vol <= T::zero() {
        return T::zero();
    }
    let face_area = |x: &Vector3<T>, y: &Vector3<T>, z: &Vector3<T>| (y - x).cross(&(z - x)).norm() * T::lit(0.5);
    let area = face_area(&p[1], &p[2], &p[3])
        + face_area(&p[0], &p[2], &p[3])
        + face_area(&p[0], &p[1], &p[3])
        + face_area(&p[0], &p[1], &p[2]);
    let r_in = six_vol * T::lit(0.5) / area;
    let num = b.cross(&c) * a.norm_squared() + c.cross(&a) * b.norm_squared() + a.cross(&b) * c.norm_squared();
    let r_circ = num.norm() / (T::lit(2.0) * six_vol);
    T::lit(3.0) * r_in / r_circ
}

impl<T: Real> BulkSurfaceMesh<T> {
    pub fn quality_report(&self) -> Result<MeshQualityReport<T>> {
        let verts = self.skeleton_vertices();
        let mut min_det = T::max_value().unwrap_or_else(|| T::lit(f64::MAX));
        let mut max_det = T::zero();
        let mut min_ratio = T::one();
        let mut h = T::zero();
        let mut volume = T::zero();
        for (e, t) in self.skeleton_tets().iter().enumerate() {
            for p in self.element_geometry(e, self.tet_reference())? {
                min_det = min_det.min(p.det);
                max_det = max_det.max(p.det);
                volume += p.dx();
            }
            let p = [verts[t[0]], verts[t[1]], verts[t[2]], verts[t[3]]];
            min_ratio = min_ratio.min(radius_ratio(p));
            for i in 0..4 {
                for j in i + 1..4 {
                    h = h.max((p[i] - p[j]).norm());
                }
            }
        }
        let n = T::from_usize_lossy(self.n_tets().max(1));
        let h_mean = (T::lit(6.0 * std::f64::consts::SQRT_2) * volume / n).powf(T::lit(1.0 / 3.0));
        Ok(MeshQualityReport { min_det, max_det, min_radius_ratio: min_ratio, h, h_mean })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_ball_mesh;

    #[test]
    fn regular_tetrahedron_has_unit_ratio() {
        let s = 1.0 / 8f64.sqrt();
        let p = [
            Vector3::new(s, s, s),
            Vector3::new(s, -s, -s),
            Vector3::new(-s, s, -s),
            Vector3::new(-s, -s, s),
        ];
        assert!((radius_ratio(p) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn base_ball_diameter() {
        let q = build_ball_mesh(1.0f64, 0, 1).unwrap().quality_report().unwrap();
        assert!((q.h - 2f64.sqrt()).abs() < 1e-15);
        assert!(q.min_det > 0.0);
        assert!(q.min_radius_ratio > 0.0 && q.min_radius_ratio <= 1.0);
    }

    #[test]
    fn diameter_halves_under_refinement() {
        // the first snap stretches the inner diagonals, so start at level 1
        let mut m = build_ball_mesh(1.0f64, 1, 1).unwrap();
        let mut h = m.quality_report().unwrap().h;
        for _ in 0..3 {
            m = m.refine().unwrap();
            let q = m.quality_report().unwrap();
            let ratio = q.h / h;
            assert!((0.45..=0.6).contains(&ratio), "ratio {ratio}");
            assert!(q.min_radius_ratio > 0.5);
            assert!(q.min_det > 0.0);
            h = q.h;
        }
    }

    #[test]
    fn mean_size_halves_on_curved_meshes() {
        let sizes: Vec<f64> = (1..=3).map(|l| build_ball_mesh(1.0f64, l, 2).unwrap().quality_report().unwrap().h_mean).collect();
        for w in sizes.windows(2) {
            let ratio = w[1] / w[0];
            assert!((0.49..=0.51).contains(&ratio), "ratio {ratio}");
        }
    }
}
