use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::Result;
use crate::geometry::check_len;
use crate::mesh::BulkSurfaceMesh;
use crate::num::Real;
use crate::solver::NodalState;

use super::errors::ErrorReport;
use super::fracnorm::FracnormReport;

pub const VTK_HEADER: &str = "# vtk DataFile Version 3.0";
const VTK_TETRA: u8 = 10;

fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Splits the degree-`k` lattice of the reference tetrahedron into `k³`
/// positively oriented linear tetrahedra, returned as local lattice indices.
pub fn lattice_subcells(lattice: &[Vec<usize>], degree: usize) -> Vec<[usize; 4]> {
    let k = degree as isize;
    let find = |p: [isize; 3]| -> usize {
        let a0 = (k - p[0] - p[1] - p[2]) as usize;
        let alpha = [a0, p[0] as usize, p[1] as usize, p[2] as usize];
        lattice.iter().position(|a| a[..] == alpha[..]).expect("lattice point")
    };
    let add = |p: [isize; 3], d: [isize; 3]| [p[0] + d[0], p[1] + d[1], p[2] + d[2]];
    let (e1, e2, e3) = ([1, 0, 0], [0, 1, 0], [0, 0, 1]);
    let (e12, e13, e23, e123) = ([1, 1, 0], [1, 0, 1], [0, 1, 1], [1, 1, 1]);
    let mut cells: Vec<[[isize; 3]; 4]> = Vec::new();
    for i in 0..k {
        for j in 0..k - i {
            for l in 0..k - i - j {
                let p = [i, j, l];
                let s = i + j + l;
                cells.push([p, add(p, e1), add(p, e2), add(p, e3)]);
                if s <= k - 2 {
                    let ring = [e2, e3, e13, e12];
                    for r in 0..4 {
                        cells.push([add(p, e1), add(p, e23), add(p, ring[r]), add(p, ring[(r + 1) % 4])]);
                    }
                }
                if s <= k - 3 {
                    cells.push([add(p, e12), add(p, e13), add(p, e23), add(p, e123)]);
                }
            }
        }
    }
    cells
        .into_iter()
        .map(|mut c| {
            let v = |a: [isize; 3], b: [isize; 3]| Vector3::new((b[0] - a[0]) as f64, (b[1] - a[1]) as f64, (b[2] - a[2]) as f64);
            if v(c[0], c[1]).cross(&v(c[0], c[2])).dot(&v(c[0], c[3])) < 0.0 {
                c.swap(2, 3);
            }
            c.map(find)
        })
        .collect()
}

/// Writes the mesh and nodal fields as a legacy ASCII VTK unstructured grid.
///
/// Surface fields (`H`, `V`, `n`) are padded with zeros at interior nodes.
pub fn write_vtk<T: Real>(mesh: &BulkSurfaceMesh<T>, state: &NodalState<T>, path: &Path) -> Result<()> {
    let n = mesh.n_nodes();
    let nb = mesh.n_boundary();
    check_len("node positions", n, state.x.len())?;
    check_len("bulk field u", n, state.u.len())?;
    check_len("mean curvature", nb, state.h.len())?;
    check_len("normal velocity", nb, state.v_normal.len())?;
    check_len("normal field", 3 * nb, state.n.len())?;
    check_len("velocity", n, state.v.len())?;

    let tet = mesh.tet_reference();
    let sub = lattice_subcells(tet.lattice(), mesh.degree());
    let n_cells = mesh.n_tets() * sub.len();
    let f = |x: T| fmt_real(x.to_f64_lossy());

    let mut s = String::new();
    let _ = writeln!(s, "{VTK_HEADER}\nbulk-surface state t = {}\nASCII\nDATASET UNSTRUCTURED_GRID", f(state.t));
    let _ = writeln!(s, "POINTS {n} double");
    for x in &state.x {
        let _ = writeln!(s, "{} {} {}", f(x.x), f(x.y), f(x.z));
    }
    let _ = writeln!(s, "CELLS {n_cells} {}", 5 * n_cells);
    for e in 0..mesh.n_tets() {
        let nodes = mesh.tet_nodes(e);
        for c in &sub {
            let _ = writeln!(s, "4 {} {} {} {}", nodes[c[0]], nodes[c[1]], nodes[c[2]], nodes[c[3]]);
        }
    }
    let _ = writeln!(s, "CELL_TYPES {n_cells}");
    for _ in 0..n_cells {
        let _ = writeln!(s, "{VTK_TETRA}");
    }
    let _ = writeln!(s, "POINT_DATA {n}");
    let scalar = |s: &mut String, name: &str, value: &dyn Fn(usize) -> T| {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for i in 0..n {
            let _ = writeln!(s, "{}", f(value(i)));
        }
    };
    let surface = |v: &nalgebra::DVector<T>, i: usize| if i < nb { v[i] } else { T::zero() };
    scalar(&mut s, "u", &|i| state.u[i]);
    scalar(&mut s, "H", &|i| surface(&state.h, i));
    scalar(&mut s, "V", &|i| surface(&state.v_normal, i));
    let _ = writeln!(s, "VECTORS n double");
    for i in 0..n {
        let v = if i < nb { state.normal(i) } else { Vector3::zeros() };
        let _ = writeln!(s, "{} {} {}", f(v.x), f(v.y), f(v.z));
    }
    let _ = writeln!(s, "VECTORS v double");
    for v in &state.v {
        let _ = writeln!(s, "{} {} {}", f(v.x), f(v.y), f(v.z));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(s.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Column names of [`write_csv`].
pub fn csv_header(report: &ErrorReport) -> Vec<String> {
    let mut h = vec!["level".to_string(), "h".into(), "h_max".into(), "tau".into()];
    for n in &report.norms {
        h.push(n.name().to_string());
        h.push(format!("eoc_{}", n.name()));
    }
    h
}

/// One row per level; EOC cells are blank where undefined.
pub fn write_csv(report: &ErrorReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(csv_header(report))?;
    for (r, row) in report.rows.iter().enumerate() {
        let mut rec = vec![
            row.level.to_string(),
            fmt_real(row.h),
            fmt_real(row.h_max),
            row.tau.map(fmt_real).unwrap_or_default(),
        ];
        for (c, &norm) in report.norms.iter().enumerate() {
            rec.push(fmt_real(row.errors[c]));
            rec.push(report.eoc(r, norm).map(fmt_real).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Battery results followed by the measured tables, one line each.
pub fn write_fracnorm_csv(report: &FracnormReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["kind", "name", "level", "value", "bound", "passed"])?;
    let level = |l: Option<usize>| l.map(|l| l.to_string()).unwrap_or_default();
    for c in &report.checks {
        let bound = format!("{}{}", if c.lower { ">=" } else { "<=" }, fmt_real(c.bound));
        w.write_record(["check", &c.name, &level(c.level), &fmt_real(c.value), &bound, &c.passed().to_string()])?;
    }
    for r in &report.inverse_constants {
        let name = format!("inverse_constant_{}_{}", r.s1, r.s2);
        w.write_record(["measure", &name, &r.level.to_string(), &fmt_real(r.constant), "", ""])?;
    }
    for r in &report.equivalence {
        let l = r.level.to_string();
        w.write_record(["measure", "equivalence_min_ratio", &l, &fmt_real(r.min_ratio), "", ""])?;
        w.write_record(["measure", "equivalence_max_ratio", &l, &fmt_real(r.max_ratio), "", ""])?;
    }
    if let Some(d) = &report.derivative {
        for (h, e) in &d.fd_errors {
            w.write_record(["measure", &format!("fd_error_step_{h}"), "", &fmt_real(*e), "", ""])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::lattice;

    #[test]
    fn subcells_tile_the_reference_tet() {
        for k in 1..=3 {
            let lat = lattice(3, k);
            let cells = lattice_subcells(&lat, k);
            assert_eq!(cells.len(), k * k * k);
            let pos = |i: usize| Vector3::new(lat[i][1] as f64, lat[i][2] as f64, lat[i][3] as f64) / k as f64;
            let vol: f64 = cells
                .iter()
                .map(|c| {
                    let (a, b, cc, d) = (pos(c[0]), pos(c[1]), pos(c[2]), pos(c[3]));
                    let v = (b - a).cross(&(cc - a)).dot(&(d - a)) / 6.0;
                    assert!(v > 0.0);
                    v
                })
                .sum();
            assert!((vol - 1.0 / 6.0).abs() < 1e-14);
        }
    }
}
