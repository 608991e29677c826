use bulksurf::geometry::AnalyticSurface;
use bulksurf::harness::{
    convergence_study, integrate_scalar, measure_errors, radial_oracle, write_csv, write_vtk, ErrorReport, ErrorRow,
    ExactField, Norm, RadialOracle, RunConfig, StudyConfig, VTK_HEADER,
};
use bulksurf::mesh::build_ball_mesh;
use bulksurf::solver::{NodalState, TimeScheme};
use nalgebra::{DVector, Vector3};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn oracle_solves_its_ode(q in 0.05f64..1.0, r0 in 0.3f64..3.0, t in 0.0f64..4.0) {
        let o = RadialOracle::new(q, r0);
        let y = integrate_scalar(|_, r| o.rate(r), r0, 0.0, t, 1e-13).unwrap();
        prop_assert!((y - radial_oracle(q, r0, t)).abs() <= 1e-10 * (1.0 + y.abs()));
    }
}

#[test]
fn oracle_reference_value() {
    let r = radial_oracle(0.2f64, 1.0, 1.0);
    assert!((r - (0.6 + 0.4 * (-1.0f64 / 3.0).exp())).abs() < 1e-15);
    assert!((r - 0.886_61).abs() < 1e-5);
    assert!((radial_oracle(0.2f64, 0.6, 3.0) - 0.6).abs() < 1e-15);
}

fn sample_report() -> ErrorReport {
    let mut r = ErrorReport::new(vec![Norm::H1Bulk, Norm::L2Surface]);
    for (level, (e1, e2)) in [(1.0 / 3.0, 0.1), (0.17, 0.026), (0.084_1, 6.3e-3)].into_iter().enumerate() {
        let h = 0.5f64.powi(level as i32) / 7.0;
        r.rows.push(ErrorRow { level: level + 1, h, h_max: 1.7 * h, tau: None, errors: vec![e1, e2] });
    }
    r
}

fn parse(cell: &str) -> Option<f64> {
    (!cell.is_empty()).then(|| cell.parse().unwrap())
}

#[test]
fn csv_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table.csv");
    let report = sample_report();
    write_csv(&report, &path).unwrap();
    let mut rd = csv::Reader::from_path(&path).unwrap();
    let header: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["level", "h", "h_max", "tau", "h1_bulk", "eoc_h1_bulk", "l2_surface", "eoc_l2_surface"]);
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    for (i, (rec, row)) in rows.iter().zip(&report.rows).enumerate() {
        assert_eq!(rec[0].parse::<usize>().unwrap(), row.level);
        assert_eq!(parse(&rec[1]).unwrap().to_bits(), row.h.to_bits());
        assert_eq!(parse(&rec[2]).unwrap().to_bits(), row.h_max.to_bits());
        assert_eq!(parse(&rec[3]), None);
        assert_eq!(parse(&rec[4]).unwrap().to_bits(), row.errors[0].to_bits());
        assert_eq!(parse(&rec[6]).unwrap().to_bits(), row.errors[1].to_bits());
        let eoc = report.eoc(i, Norm::H1Bulk);
        assert_eq!(parse(&rec[5]).map(f64::to_bits), eoc.map(f64::to_bits));
    }
    assert!(rows[0][5].is_empty() && rows[0][7].is_empty());
}

#[test]
fn empty_report_writes_the_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    write_csv(&ErrorReport::new(vec![Norm::L2Bulk]), &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), "level,h,h_max,tau,l2_bulk,eoc_l2_bulk\n");
}

#[test]
fn vtk_file_layout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.vtk");
    let k = 2;
    let m = build_ball_mesh(1.0f64, 1, k).unwrap();
    let s = NodalState::initial(&m, &AnalyticSurface::sphere(1.0), 0.0).unwrap();
    write_vtk(&m, &s, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], VTK_HEADER);
    assert!(lines.contains(&"ASCII") && lines.contains(&"DATASET UNSTRUCTURED_GRID"));
    let find = |prefix: &str| lines.iter().position(|l| l.starts_with(prefix)).unwrap();
    assert_eq!(lines[find("POINTS")], format!("POINTS {} double", m.n_nodes()));
    let cells = m.n_tets() * k * k * k;
    assert_eq!(lines[find("CELLS")], format!("CELLS {cells} {}", 5 * cells));
    assert_eq!(lines[find("CELL_TYPES")], format!("CELL_TYPES {cells}"));
    assert_eq!(lines[find("POINT_DATA")], format!("POINT_DATA {}", m.n_nodes()));
    for name in ["SCALARS u double 1", "SCALARS H double 1", "SCALARS V double 1", "VECTORS n double", "VECTORS v double"] {
        assert!(lines.contains(&name), "missing {name}");
    }
    // every node of the mesh is referenced by some subcell
    let start = find("CELLS") + 1;
    let mut used = vec![false; m.n_nodes()];
    for l in &lines[start..start + cells] {
        let ids: Vec<usize> = l.split_whitespace().map(|x| x.parse().unwrap()).collect();
        assert_eq!(ids[0], 4);
        ids[1..].iter().for_each(|&i| used[i] = true);
    }
    assert!(used.iter().all(|&u| u));
}

#[test]
fn errors_of_the_interpolant() {
    let sphere = AnalyticSurface::sphere(1.0);
    let value = |x: &Vector3<f64>| x.x.sin() * x.y.cos() + x.z * x.z;
    let gradient = |x: &Vector3<f64>| Vector3::new(x.x.cos() * x.y.cos(), -x.x.sin() * x.y.sin(), 2.0 * x.z);
    let exact = ExactField { value: &value, gradient: &gradient };
    for k in [1usize, 2] {
        let mut rows = Vec::new();
        for level in 1..=3 {
            let m = build_ball_mesh(1.0f64, level, k).unwrap();
            let u = DVector::from_iterator(m.n_nodes(), m.nodes().iter().map(value));
            let e = measure_errors(&m, &sphere, &u, &exact, None).unwrap();
            let h = m.quality_report().unwrap().h_mean;
            rows.push(ErrorRow { level, h, h_max: h, tau: None, errors: e.iter().map(|p| p.1).collect() });
        }
        let report = ErrorReport { norms: vec![Norm::H1Bulk, Norm::L2Bulk, Norm::L2Surface], rows };
        let eoc_l2 = report.eoc(2, Norm::L2Bulk).unwrap();
        let eoc_h1 = report.eoc(2, Norm::H1Bulk).unwrap();
        assert!((eoc_l2 - (k + 1) as f64).abs() < 0.3, "k={k}: L2 {eoc_l2}");
        assert!((eoc_h1 - k as f64).abs() < 0.3, "k={k}: H1 {eoc_h1}");
    }

    // isoparametric elements reproduce affine fields
    let m = build_ball_mesh(1.0f64, 1, 2).unwrap();
    let quad = |x: &Vector3<f64>| 0.5 + x.x - 2.0 * x.y + 0.3 * x.z;
    let grad = |_: &Vector3<f64>| Vector3::new(1.0, -2.0, 0.3);
    let u = DVector::from_iterator(m.n_nodes(), m.nodes().iter().map(quad));
    let e = measure_errors(&m, &sphere, &u, &ExactField { value: &quad, gradient: &grad }, None).unwrap();
    assert!(e[0].1 < 1e-12 && e[1].1 < 1e-12, "{e:?}");
}

#[test]
fn robin_study_converges_at_the_expected_rate() {
    let (report, failure) = convergence_study(&StudyConfig::robin(1, 3));
    assert!(failure.is_none());
    assert_eq!(report.rows.len(), 3);
    assert_eq!(report.rows.iter().map(|r| r.level).collect::<Vec<_>>(), [1, 2, 3]);
    for row in 1..3 {
        let e = report.eoc(row, Norm::H1Bulk).unwrap();
        assert!((0.8..=1.4).contains(&e), "row {row}: {e}");
    }
    let boosted = convergence_study(&StudyConfig { quadrature_boost: 2, ..StudyConfig::robin(1, 3) }).0;
    for &norm in &report.norms {
        let (a, b) = (report.eoc(2, norm).unwrap(), boosted.eoc(2, norm).unwrap());
        assert!((a - b).abs() < 0.1, "{}: {a} vs {b}", norm.name());
    }
}

#[test]
fn config_files_and_overrides() {
    let file = RunConfig::from_json(r#"{"alpha": 2.0, "tau": 0.01, "scheme": "explicit-rk4", "level": 3}"#).unwrap();
    let flags = RunConfig { tau: Some(0.005), level: None, ..Default::default() };
    let merged = file.overridden_by(flags);
    assert_eq!((merged.alpha, merged.tau, merged.level), (Some(2.0), Some(0.005), Some(3)));
    let stepper = merged.stepper().unwrap();
    assert_eq!(stepper.scheme, TimeScheme::ExplicitRk4);
    assert_eq!((stepper.alpha, stepper.beta), (2.0, 1.0));
    assert!(RunConfig::from_json(r#"{"alpah": 2.0}"#).is_err());
    let err = RunConfig::default().stepper().unwrap_err().to_string();
    assert!(err.contains("--tau"), "{err}");
}

#[test]
fn published_schema_matches_the_config() {
    use bulksurf::harness::ExperimentKind;
    use bulksurf::solver::VelocityNormal;
    let schema: serde_json::Value = serde_json::from_str(include_str!("../../../docs/config.schema.json")).unwrap();
    let props = schema["properties"].as_object().unwrap();
    let full = RunConfig {
        alpha: Some(1.0),
        beta: Some(1.0),
        tau: Some(0.1),
        t_end: Some(1.0),
        scheme: Some(TimeScheme::ExplicitRk4),
        velocity_normal: Some(VelocityNormal::Current),
        solver_tolerance: Some(1e-12),
        quality_threshold: Some(0.1),
        normal_drift_budget: Some(0.05),
        q_const: Some(0.2),
        degree: Some(2),
        level: Some(1),
        levels: Some(3),
        experiment: Some(ExperimentKind::Flow),
        out_dir: Some("out".into()),
        vtk_every: Some(1),
    };
    let json = serde_json::to_value(&full).unwrap();
    let mut fields: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
    let mut listed: Vec<_> = props.keys().cloned().collect();
    fields.sort();
    listed.sort();
    assert_eq!(fields, listed);
    for (name, p) in props {
        for v in p.get("enum").and_then(|e| e.as_array()).into_iter().flatten() {
            let text = format!("{{\"{name}\": {v}}}");
            assert!(RunConfig::from_json(&text).is_ok(), "{text}");
        }
    }
}
