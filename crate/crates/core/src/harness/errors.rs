use nalgebra::{DVector, Vector3};

use crate::assembly::{assemble_surface_with, load_f_u, OperatorSet};
use crate::error::Result;
use crate::fracops::{spectral_factorization, SpectralFactorization, SurfacePencil};
use crate::geometry::{check_len, init_surface_fields, AnalyticSurface};
use crate::mesh::{build_ball_mesh, BulkSurfaceMesh};
use crate::num::Real;
use crate::solver::{run, solve_robin, NodalState, StepperConfig};

use super::oracle::RadialOracle;

/// Error quantities reported by the studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Norm {
    H1Bulk,
    L2Bulk,
    L2Surface,
    HalfSurface,
    MinusHalfSurface,
    /// `|mean radius − R(t)|`.
    MeanRadius,
    /// `max_j ||x_j| − R(t)|` over boundary nodes.
    NodalRadius,
}

impl Norm {
    pub fn name(self) -> &'static str {
        match self {
            Norm::H1Bulk => "h1_bulk",
            Norm::L2Bulk => "l2_bulk",
            Norm::L2Surface => "l2_surface",
            Norm::HalfSurface => "h_half_surface",
            Norm::MinusHalfSurface => "h_minus_half_surface",
            Norm::MeanRadius => "mean_radius",
            Norm::NodalRadius => "nodal_radius",
        }
    }
}

/// One mesh level of a convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub level: usize,
    /// Mean mesh size used for EOCs (see [`crate::mesh::MeshQualityReport::h_mean`]).
    pub h: f64,
    /// Maximum element diameter.
    pub h_max: f64,
    pub tau: Option<f64>,
    /// Values in the order of [`ErrorReport::norms`].
    pub errors: Vec<f64>,
}

/// Convergence table with experimental orders of convergence.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub norms: Vec<Norm>,
    pub rows: Vec<ErrorRow>,
}

impl ErrorReport {
    pub fn new(norms: Vec<Norm>) -> Self {
        Self { norms, rows: Vec::new() }
    }

    pub fn error(&self, row: usize, norm: Norm) -> Option<f64> {
        let c = self.norms.iter().position(|&n| n == norm)?;
        self.rows.get(row).map(|r| r.errors[c])
    }

    /// `log(e_{L−1}/e_L) / log(h_{L−1}/h_L)`; `None` on the first row.
    pub fn eoc(&self, row: usize, norm: Norm) -> Option<f64> {
        if row == 0 || row >= self.rows.len() {
            return None;
        }
        let e0 = self.error(row - 1, norm)?;
        let e1 = self.error(row, norm)?;
        Some((e0 / e1).ln() / (self.rows[row - 1].h / self.rows[row].h).ln())
    }

    /// EOC against the maximum element diameter instead of the mean size.
    pub fn eoc_max_diameter(&self, row: usize, norm: Norm) -> Option<f64> {
        if row == 0 || row >= self.rows.len() {
            return None;
        }
        let e = self.error(row - 1, norm)? / self.error(row, norm)?;
        Some(e.ln() / (self.rows[row - 1].h_max / self.rows[row].h_max).ln())
    }

    /// EOC with respect to the time step, for tables whose rows vary `τ`.
    pub fn eoc_tau(&self, row: usize, norm: Norm) -> Option<f64> {
        if row == 0 || row >= self.rows.len() {
            return None;
        }
        let t0 = self.rows[row - 1].tau?;
        let t1 = self.rows[row].tau?;
        Some((self.error(row - 1, norm)? / self.error(row, norm)?).ln() / (t0 / t1).ln())
    }
}

/// Exact scalar field with its gradient, defined on a neighbourhood of the domain.
pub struct ExactField<'a, T> {
    pub value: &'a (dyn Fn(&Vector3<T>) -> T + Sync),
    pub gradient: &'a (dyn Fn(&Vector3<T>) -> Vector3<T> + Sync),
}

/// Surface pencil of the lifted basis on the analytic surface.
pub fn lifted_surface_pencil<T: Real>(
    mesh: &BulkSurfaceMesh<T>,
    surface: &AnalyticSurface<T>,
) -> Result<SurfacePencil<T>> {
    let (m, a) = assemble_surface_with(mesh, mesh.tri_reference(), Some(surface))?;
    SurfacePencil::new(m, a)
}

/// Errors of a bulk finite element function `u_h` against `exact`.
///
/// Bulk norms integrate over `Ω_h` with the exact field evaluated at the
/// discrete quadrature points. The surface `L²` error evaluates the exact
/// field at the lifted points. The `H_h^{±1/2}` errors are taken of the nodal
/// difference between the exact values at the lifted boundary nodes and `u_h`.
pub fn measure_errors<T: Real>(
    mesh: &BulkSurfaceMesh<T>,
    surface: &AnalyticSurface<T>,
    u_h: &DVector<T>,
    exact: &ExactField<'_, T>,
    factorization: Option<&SpectralFactorization<T>>,
) -> Result<Vec<(Norm, T)>> {
    check_len("bulk coefficients", mesh.n_nodes(), u_h.len())?;
    let tet = mesh.tet_reference();
    let (mut l2, mut h1) = (T::zero(), T::zero());
    for e in 0..mesh.n_tets() {
        let nodes = mesh.tet_nodes(e);
        for (q, p) in mesh.element_geometry(e, tet)?.iter().enumerate() {
            let mut val = T::zero();
            let mut grad = Vector3::zeros();
            for (a, &i) in nodes.iter().enumerate() {
                val += u_h[i] * tet.values(q)[a];
                grad += p.gradient(&tet.gradients(q)[a]) * u_h[i];
            }
            let dv = val - (exact.value)(&p.point);
            let dg = grad - (exact.gradient)(&p.point);
            l2 += dv * dv * p.dx();
            h1 += dg.norm_squared() * p.dx();
        }
    }
    let tri = mesh.tri_reference();
    let mut l2s = T::zero();
    for f in 0..mesh.n_faces() {
        let nodes = mesh.face_nodes(f);
        for (q, p) in mesh.surface_element_geometry(f, tri)?.iter().enumerate() {
            let val = nodes.iter().enumerate().fold(T::zero(), |s, (a, &i)| s + u_h[i] * tri.values(q)[a]);
            let d = val - (exact.value)(&surface.closest_point(&p.point)?);
            l2s += d * d * p.da();
        }
    }
    let mut out = vec![
        (Norm::H1Bulk, (l2 + h1).sqrt()),
        (Norm::L2Bulk, l2.sqrt()),
        (Norm::L2Surface, l2s.sqrt()),
    ];
    if let Some(fact) = factorization {
        let nb = mesh.n_boundary();
        let mut diff = DVector::zeros(nb);
        for (j, x) in mesh.nodes()[..nb].iter().enumerate() {
            diff[j] = (exact.value)(&surface.closest_point(x)?) - u_h[j];
        }
        out.push((Norm::HalfSurface, fact.frac_norm(T::lit(0.5), &diff)?));
        out.push((Norm::MinusHalfSurface, fact.frac_norm(T::lit(-0.5), &diff)?));
    }
    Ok(out)
}

/// Experiment driven by a convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    /// Stationary Robin problem with the manufactured solution `|x|²/6` on the unit ball.
    Robin,
    /// Full coupled flow of the unit sphere under a constant source.
    Flow,
}

/// Time-step scaling with the mesh size in flow studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauScaling {
    Linear,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyConfig {
    pub experiment: Experiment,
    pub degree: usize,
    pub min_level: usize,
    pub levels: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Flow source `Q`.
    pub q_const: f64,
    pub t_end: f64,
    /// Time step on the coarsest level.
    pub tau: f64,
    pub tau_scaling: TauScaling,
    /// Include the `H_h^{±1/2}` surface errors (dense eigen-decomposition).
    pub fractional_norms: bool,
    /// Added to the default quadrature order `2k + 2`.
    pub quadrature_boost: usize,
}

impl StudyConfig {
    pub fn robin(degree: usize, levels: usize) -> Self {
        Self {
            experiment: Experiment::Robin,
            degree,
            min_level: 1,
            levels,
            alpha: 1.0,
            beta: 1.0,
            q_const: 0.2,
            t_end: 0.5,
            tau: 1e-2,
            tau_scaling: TauScaling::Linear,
            fractional_norms: true,
            quadrature_boost: 0,
        }
    }

    pub fn flow(degree: usize, levels: usize) -> Self {
        Self { experiment: Experiment::Flow, fractional_norms: false, ..Self::robin(degree, levels) }
    }
}

/// Source that makes `|x|²/6` solve the Robin problem on the unit ball with `H = 2`.
pub fn manufactured_source(alpha: f64, beta: f64) -> f64 {
    1.0 / 3.0 + alpha / 6.0 - 2.0 * beta
}

/// Discrete Robin solution on `mesh` with `H`, `Q` interpolated from the unit sphere.
pub fn solve_manufactured_robin<T: Real>(mesh: &BulkSurfaceMesh<T>, alpha: T, beta: T, tolerance: T) -> Result<DVector<T>> {
    let q = T::lit(manufactured_source(alpha.to_f64_lossy(), beta.to_f64_lossy()));
    solve_robin_on_sphere(mesh, alpha, beta, &|_| q, tolerance)
}

/// Discrete Robin solution on the unit-ball mesh with a spatially varying source
/// `Q` and `H` taken from the unit sphere.
pub fn solve_robin_on_sphere<T: Real>(
    mesh: &BulkSurfaceMesh<T>,
    alpha: T,
    beta: T,
    q: &dyn Fn(&Vector3<T>) -> T,
    tolerance: T,
) -> Result<DVector<T>> {
    let fields = init_surface_fields(mesh, &AnalyticSurface::sphere(T::one()), &|x, _| q(x), T::zero())?;
    let ops = OperatorSet::assemble(mesh, alpha)?;
    let f = load_f_u(mesh, &fields.mean_curvature, &fields.source, beta)?;
    solve_robin(&ops, &f, tolerance)
}

/// Runs the configured experiment on levels `min_level .. min_level + levels`.
/// On failure the rows computed so far are returned together with the error.
pub fn convergence_study(config: &StudyConfig) -> (ErrorReport, Option<crate::error::Error>) {
    let norms = match config.experiment {
        Experiment::Robin if config.fractional_norms => vec![
            Norm::H1Bulk,
            Norm::L2Bulk,
            Norm::L2Surface,
            Norm::HalfSurface,
            Norm::MinusHalfSurface,
        ],
        Experiment::Robin => vec![Norm::H1Bulk, Norm::L2Bulk, Norm::L2Surface],
        Experiment::Flow => vec![Norm::MeanRadius, Norm::NodalRadius],
    };
    let mut report = ErrorReport::new(norms);
    let mut h0 = None;
    for level in config.min_level..config.min_level + config.levels {
        let row = match config.experiment {
            Experiment::Robin => robin_row(config, level),
            Experiment::Flow => flow_row(config, level, &mut h0),
        };
        match row {
            Ok(r) => report.rows.push(r),
            Err(e) => return (report, Some(e)),
        }
    }
    (report, None)
}

fn study_mesh(config: &StudyConfig, level: usize) -> Result<BulkSurfaceMesh<f64>> {
    let mesh = build_ball_mesh(1.0, level, config.degree)?;
    if config.quadrature_boost == 0 {
        return Ok(mesh);
    }
    let order = 2 * config.degree + 2 + config.quadrature_boost;
    mesh.with_quadrature_orders(order, order)
}

fn robin_row(config: &StudyConfig, level: usize) -> Result<ErrorRow> {
    let mesh = study_mesh(config, level)?;
    let u = solve_manufactured_robin(&mesh, config.alpha, config.beta, 1e-12)?;
    let sphere = AnalyticSurface::sphere(1.0);
    let value = |x: &Vector3<f64>| x.norm_squared() / 6.0;
    let gradient = |x: &Vector3<f64>| x / 3.0;
    let exact = ExactField { value: &value, gradient: &gradient };
    let fact = if config.fractional_norms {
        Some(spectral_factorization(&SurfacePencil::from_mesh(&mesh)?)?)
    } else {
        None
    };
    let errors = measure_errors(&mesh, &sphere, &u, &exact, fact.as_ref())?;
    let q = mesh.quality_report()?;
    Ok(ErrorRow {
        level,
        h: q.h_mean,
        h_max: q.h,
        tau: None,
        errors: errors.into_iter().map(|(_, e)| e).collect(),
    })
}

fn flow_row(config: &StudyConfig, level: usize, h0: &mut Option<f64>) -> Result<ErrorRow> {
    let mut mesh = study_mesh(config, level)?;
    let quality = mesh.quality_report()?;
    let h = quality.h_mean;
    let coarse = *h0.get_or_insert(h);
    let ratio = h / coarse;
    let tau = match config.tau_scaling {
        TauScaling::Linear => config.tau * ratio,
        TauScaling::Quadratic => config.tau * ratio * ratio,
    };
    // land exactly on t_end
    let steps = (config.t_end / tau).ceil().max(1.0);
    let tau = config.t_end / steps;
    let (state, r) = run_sphere_flow(&mut mesh, config.alpha, config.beta, config.q_const, tau, config.t_end)?;
    let exact = RadialOracle::new(config.q_const, 1.0).radius(config.t_end);
    let nodal = state.x[..mesh.n_boundary()].iter().fold(0.0f64, |m, x| m.max((x.norm() - exact).abs()));
    Ok(ErrorRow { level, h, h_max: quality.h, tau: Some(tau), errors: vec![(r - exact).abs(), nodal] })
}

/// Runs the coupled flow from the unit sphere and returns the final state and
/// mean boundary radius.
pub fn run_sphere_flow(
    mesh: &mut BulkSurfaceMesh<f64>,
    alpha: f64,
    beta: f64,
    q: f64,
    tau: f64,
    t_end: f64,
) -> Result<(NodalState<f64>, f64)> {
    let initial = NodalState::initial(mesh, &AnalyticSurface::sphere(1.0), 0.0)?;
    let config = StepperConfig::new(alpha, beta, tau, t_end);
    let traj = run(&initial, &config, mesh, &|_, _| q, false)?;
    if let Some(e) = traj.failure {
        return Err(e);
    }
    let r = traj.diagnostics.last().map(|d| d.mean_radius).unwrap_or(f64::NAN);
    Ok((traj.last().clone(), r))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eoc_of_halving_errors() {
        let mut r = ErrorReport::new(vec![Norm::L2Bulk]);
        for (l, e) in [(0, 1.0), (1, 0.25), (2, 0.0625)] {
            let h = 0.5f64.powi(l as i32);
            r.rows.push(ErrorRow { level: l, h, h_max: h, tau: None, errors: vec![e] });
        }
        assert_eq!(r.eoc(0, Norm::L2Bulk), None);
        assert!((r.eoc(1, Norm::L2Bulk).unwrap() - 2.0).abs() < 1e-12);
        assert!((r.eoc(2, Norm::L2Bulk).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(r.eoc(1, Norm::H1Bulk), None);
    }

    #[test]
    fn manufactured_source_value() {
        assert!((manufactured_source(1.0, 1.0) + 1.5).abs() < 1e-15);
    }

    #[test]
    fn field_against_itself_is_zero() {
        let mesh = build_ball_mesh(1.0f64, 1, 1).unwrap();
        let value = |x: &Vector3<f64>| 2.0 * x.x - x.z + 0.5;
        let gradient = |_: &Vector3<f64>| Vector3::new(2.0, 0.0, -1.0);
        let u = DVector::from_iterator(mesh.n_nodes(), mesh.nodes().iter().map(value));
        let sphere = AnalyticSurface::sphere(1.0);
        let exact = ExactField { value: &value, gradient: &gradient };
        let errors = measure_errors(&mesh, &sphere, &u, &exact, None).unwrap();
        assert!(errors[0].1 < 1e-13 && errors[1].1 < 1e-13);
    }
}
