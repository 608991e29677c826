//! Time integration of the coupled bulk–surface system.
//!
//! One step of the linearly implicit Euler scheme, with all matrices frozen at
//! the current nodes `x`:
//!
//! 1. `L u = f_u`
//! 2. `V = −βH + α γu`
//! 3. `(M + τβA) n⁺ = M n + τ (f_n − α D γu)` and
//!    `(M + τβA) H⁺ = M H + τ (f_H + α A γu)`
//! 4. `v_Γ = V ∘ n⁺`, `A_ΩΩ v_Ω = −A_ΩΓ v_Γ`
//! 5. `x⁺ = x + τ v`

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::assembly::{load_f_h, load_f_n, load_f_u, BulkMatrix, OperatorSet, Part};
use crate::error::{Error, Result};
use crate::geometry::{check_len, init_surface_fields, AnalyticSurface};
use crate::mesh::BulkSurfaceMesh;
use crate::num::Real;
use crate::sparse::{default_tolerance, SpdSolver};

/// Surface source `Q(x, t)`.
pub type Source<'a, T> = dyn Fn(&Vector3<T>, T) -> T + Sync + 'a;

/// Callback of [`run_observed`], called after every accepted step.
pub type StepObserver<'a, T> = dyn FnMut(&NodalState<T>, &BulkSurfaceMesh<T>, &StepDiagnostics<T>) -> Result<()> + 'a;

/// Nodal state of the coupled system.
///
/// `u`, `v_normal` and `v` are the quantities that drove the step ending at `t`
/// (zero in the initial state). `n` is stacked by component.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalState<T: Real> {
    pub t: T,
    pub x: Vec<Vector3<T>>,
    pub u: DVector<T>,
    pub n: DVector<T>,
    pub h: DVector<T>,
    pub v_normal: DVector<T>,
    pub v: Vec<Vector3<T>>,
}

impl<T: Real> NodalState<T> {
    /// Initial state on `mesh` with `n`, `H` interpolated from `surface`.
    pub fn initial(mesh: &BulkSurfaceMesh<T>, surface: &AnalyticSurface<T>, t0: T) -> Result<Self> {
        let fields = init_surface_fields(mesh, surface, &|_, _| T::zero(), t0)?;
        Ok(Self {
            t: t0,
            x: mesh.nodes().to_vec(),
            u: DVector::zeros(mesh.n_nodes()),
            n: fields.normal,
            h: fields.mean_curvature,
            v_normal: DVector::zeros(mesh.n_boundary()),
            v: vec![Vector3::zeros(); mesh.n_nodes()],
        })
    }

    pub fn n_boundary(&self) -> usize {
        self.h.len()
    }

    /// Normal at boundary node `j`.
    pub fn normal(&self, j: usize) -> Vector3<T> {
        let nb = self.n_boundary();
        Vector3::new(self.n[j], self.n[j + nb], self.n[j + 2 * nb])
    }

    /// `max_j ||n_j| − 1|`.
    pub fn normal_drift(&self) -> T {
        (0..self.n_boundary()).fold(T::zero(), |m, j| m.max((self.normal(j).norm() - T::one()).abs()))
    }

    fn check(&self, mesh: &BulkSurfaceMesh<T>) -> Result<()> {
        check_len("node positions", mesh.n_nodes(), self.x.len())?;
        check_len("mean curvature", mesh.n_boundary(), self.h.len())?;
        check_len("normal field", 3 * mesh.n_boundary(), self.n.len())
    }
}

/// Time discretisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeScheme {
    LinearlyImplicitEuler,
    ExplicitRk4,
}

/// Which normal enters the boundary velocity `v_Γ = V n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VelocityNormal {
    /// The normal computed in the same step.
    Updated,
    /// The normal at the start of the step.
    Current,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig<T: Real> {
    pub alpha: T,
    pub beta: T,
    pub tau: T,
    pub t_end: T,
    pub scheme: TimeScheme,
    pub velocity_normal: VelocityNormal,
    /// Relative residual required from every linear solve.
    pub solver_tolerance: T,
    /// Abort once the minimum radius ratio of the mesh drops below this.
    pub quality_threshold: T,
    /// Abort once `max_j ||n_j| − 1|` exceeds this.
    pub normal_drift_budget: T,
}

impl<T: Real> StepperConfig<T> {
    pub fn new(alpha: T, beta: T, tau: T, t_end: T) -> Self {
        Self {
            alpha,
            beta,
            tau,
            t_end,
            scheme: TimeScheme::LinearlyImplicitEuler,
            velocity_normal: VelocityNormal::Updated,
            solver_tolerance: default_tolerance(),
            quality_threshold: T::lit(0.05),
            normal_drift_budget: T::lit(0.05),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: T| {
            if v > T::zero() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive, got {}", v.to_f64_lossy())))
            }
        };
        positive("alpha", self.alpha)?;
        positive("beta", self.beta)?;
        positive("tau", self.tau)?;
        positive("solver tolerance", self.solver_tolerance)?;
        if !(self.t_end.is_finite()) {
            return Err(Error::InvalidArgument("t_end must be finite".into()));
        }
        Ok(())
    }
}

/// Solves `L u = f_u`.
pub fn solve_robin<T: Real>(ops: &OperatorSet<T>, f_u: &DVector<T>, tolerance: T) -> Result<DVector<T>> {
    check_len("robin load", ops.n_nodes(), f_u.len())?;
    SpdSolver::new(&ops.l, tolerance)?.solve(f_u)
}

/// `V = −βH + α u_Γ`.
pub fn compute_normal_velocity<T: Real>(u_gamma: &DVector<T>, h: &DVector<T>, alpha: T, beta: T) -> Result<DVector<T>> {
    check_len("boundary pressure", h.len(), u_gamma.len())?;
    Ok(u_gamma * alpha - h * beta)
}

/// Nodal boundary velocity `v_Γ,j = V_j n_j`.
pub fn assemble_boundary_velocity<T: Real>(v_normal: &DVector<T>, n: &DVector<T>) -> Result<Vec<Vector3<T>>> {
    let nb = v_normal.len();
    check_len("normal field", 3 * nb, n.len())?;
    Ok((0..nb).map(|j| Vector3::new(n[j], n[j + nb], n[j + 2 * nb]) * v_normal[j]).collect())
}

/// Discrete harmonic extension `A_ΩΩ v_Ω = −A_ΩΓ v_Γ`, component-wise.
pub fn harmonic_extension<T: Real>(
    ops: &OperatorSet<T>,
    v_gamma: &[Vector3<T>],
    tolerance: T,
) -> Result<Vec<Vector3<T>>> {
    check_len("boundary velocity", ops.n_boundary(), v_gamma.len())?;
    let n_int = ops.n_nodes() - ops.n_boundary();
    if n_int == 0 {
        return Ok(Vec::new());
    }
    let a_oo = ops.block(BulkMatrix::Stiffness, Part::Omega, Part::Omega);
    let a_og = ops.block(BulkMatrix::Stiffness, Part::Omega, Part::Gamma);
    let solver = SpdSolver::new(&a_oo, tolerance)?;
    let mut out = vec![Vector3::zeros(); n_int];
    for l in 0..3 {
        let g = DVector::from_iterator(v_gamma.len(), v_gamma.iter().map(|v| v[l]));
        let x = solver.solve(&(-a_og.matvec(&g)))?;
        for (o, xi) in out.iter_mut().zip(x.iter()) {
            o[l] = *xi;
        }
    }
    Ok(out)
}

/// One linearly implicit Euler update of `(n, H)` with matrices frozen at `ops`.
#[allow(clippy::too_many_arguments)]
pub fn advance_surface_fields<T: Real>(
    ops: &OperatorSet<T>,
    mesh: &BulkSurfaceMesh<T>,
    n: &DVector<T>,
    h: &DVector<T>,
    v_normal: &DVector<T>,
    u: &DVector<T>,
    tau: T,
    beta: T,
    tolerance: T,
) -> Result<(DVector<T>, DVector<T>)> {
    let nb = ops.n_boundary();
    check_len("normal field", 3 * nb, n.len())?;
    check_len("mean curvature", nb, h.len())?;
    check_len("pressure", ops.n_nodes(), u.len())?;
    let alpha = ops.alpha();
    let u_gamma = u.rows(0, nb).into_owned();
    let system = ops.m_surf.linear_combination(T::one(), &ops.a_surf, tau * beta);
    let solver = SpdSolver::new(&system, tolerance)?;

    let f_n = load_f_n(mesh, n, beta)?;
    let du = ops.d.matvec(&u_gamma);
    let mut n_next = DVector::zeros(3 * nb);
    for l in 0..3 {
        let nl = n.rows(l * nb, nb).into_owned();
        let rhs = ops.m_surf.matvec(&nl) + (f_n.rows(l * nb, nb) - du.rows(l * nb, nb) * alpha) * tau;
        n_next.rows_mut(l * nb, nb).copy_from(&solver.solve(&rhs)?);
    }

    let f_h = load_f_h(mesh, n, v_normal)?;
    let rhs = ops.m_surf.matvec(h) + (f_h + ops.a_surf.matvec(&u_gamma) * alpha) * tau;
    let h_next = solver.solve(&rhs)?;
    Ok((n_next, h_next))
}

/// Time derivatives of `(x, n, H)` at a configuration, used by the RK4 mode.
struct Rates<T: Real> {
    x: Vec<Vector3<T>>,
    n: DVector<T>,
    h: DVector<T>,
    u: DVector<T>,
    v_normal: DVector<T>,
}

fn rates<T: Real>(
    mesh: &mut BulkSurfaceMesh<T>,
    x: &[Vector3<T>],
    n: &DVector<T>,
    h: &DVector<T>,
    t: T,
    config: &StepperConfig<T>,
    source: &Source<'_, T>,
) -> Result<Rates<T>> {
    mesh.set_nodes(x)?;
    let nb = mesh.n_boundary();
    let tol = config.solver_tolerance;
    let ops = OperatorSet::assemble(mesh, config.alpha)?;
    let q = DVector::from_iterator(nb, x[..nb].iter().map(|p| source(p, t)));
    let u = solve_robin(&ops, &load_f_u(mesh, h, &q, config.beta)?, tol)?;
    let u_gamma = u.rows(0, nb).into_owned();
    let v_normal = compute_normal_velocity(&u_gamma, h, config.alpha, config.beta)?;

    let mass = SpdSolver::new(&ops.m_surf, tol)?;
    let f_n = load_f_n(mesh, n, config.beta)?;
    let du = ops.d.matvec(&u_gamma);
    let mut n_dot = DVector::zeros(3 * nb);
    for l in 0..3 {
        let nl = n.rows(l * nb, nb).into_owned();
        let rhs = f_n.rows(l * nb, nb) - du.rows(l * nb, nb) * config.alpha - ops.a_surf.matvec(&nl) * config.beta;
        n_dot.rows_mut(l * nb, nb).copy_from(&mass.solve(&rhs)?);
    }
    let rhs = load_f_h(mesh, n, &v_normal)? + ops.a_surf.matvec(&u_gamma) * config.alpha
        - ops.a_surf.matvec(h) * config.beta;
    let h_dot = mass.solve(&rhs)?;

    let v_gamma = assemble_boundary_velocity(&v_normal, n)?;
    let v_omega = harmonic_extension(&ops, &v_gamma, tol)?;
    let mut v = v_gamma;
    v.extend(v_omega);
    Ok(Rates { x: v, n: n_dot, h: h_dot, u, v_normal })
}

/// Advances `state` by one step of length `config.tau`. On success the mesh
/// nodes equal the new positions.
pub fn step<T: Real>(
    state: &NodalState<T>,
    config: &StepperConfig<T>,
    mesh: &mut BulkSurfaceMesh<T>,
    source: &Source<'_, T>,
) -> Result<NodalState<T>> {
    state.check(mesh)?;
    let next = match config.scheme {
        TimeScheme::LinearlyImplicitEuler => euler_step(state, config, mesh, source)?,
        TimeScheme::ExplicitRk4 => rk4_step(state, config, mesh, source)?,
    };
    mesh.set_nodes(&next.x)?;
    let quality = mesh.quality_report()?;
    if quality.min_radius_ratio < config.quality_threshold {
        return Err(Error::QualityAbort {
            quality: quality.min_radius_ratio.to_f64_lossy(),
            threshold: config.quality_threshold.to_f64_lossy(),
            time: next.t.to_f64_lossy(),
        });
    }
    let drift = next.normal_drift();
    if drift > config.normal_drift_budget {
        return Err(Error::NormalDrift {
            drift: drift.to_f64_lossy(),
            budget: config.normal_drift_budget.to_f64_lossy(),
            time: next.t.to_f64_lossy(),
        });
    }
    Ok(next)
}

fn euler_step<T: Real>(
    state: &NodalState<T>,
    config: &StepperConfig<T>,
    mesh: &mut BulkSurfaceMesh<T>,
    source: &Source<'_, T>,
) -> Result<NodalState<T>> {
    let tol = config.solver_tolerance;
    let tau = config.tau;
    let nb = mesh.n_boundary();
    mesh.set_nodes(&state.x)?;
    let ops = OperatorSet::assemble(mesh, config.alpha)?;

    let q = DVector::from_iterator(nb, state.x[..nb].iter().map(|p| source(p, state.t)));
    let f_u = load_f_u(mesh, &state.h, &q, config.beta)?;
    let u = solve_robin(&ops, &f_u, tol)?;
    let u_gamma = u.rows(0, nb).into_owned();
    let v_normal = compute_normal_velocity(&u_gamma, &state.h, config.alpha, config.beta)?;
    let (n, h) = advance_surface_fields(&ops, mesh, &state.n, &state.h, &v_normal, &u, tau, config.beta, tol)?;

    let normal_for_velocity = match config.velocity_normal {
        VelocityNormal::Updated => &n,
        VelocityNormal::Current => &state.n,
    };
    let v_gamma = assemble_boundary_velocity(&v_normal, normal_for_velocity)?;
    let v_omega = harmonic_extension(&ops, &v_gamma, tol)?;
    let mut v = v_gamma;
    v.extend(v_omega);
    let x = state.x.iter().zip(&v).map(|(x, v)| x + v * tau).collect();
    Ok(NodalState { t: state.t + tau, x, u, n, h, v_normal, v })
}

fn rk4_step<T: Real>(
    state: &NodalState<T>,
    config: &StepperConfig<T>,
    mesh: &mut BulkSurfaceMesh<T>,
    source: &Source<'_, T>,
) -> Result<NodalState<T>> {
    let tau = config.tau;
    let half = tau * T::lit(0.5);
    let shift = |x: &[Vector3<T>], k: &[Vector3<T>], s: T| -> Vec<Vector3<T>> {
        x.iter().zip(k).map(|(a, b)| a + b * s).collect()
    };
    let k1 = rates(mesh, &state.x, &state.n, &state.h, state.t, config, source)?;
    let k2 = rates(
        mesh,
        &shift(&state.x, &k1.x, half),
        &(&state.n + &k1.n * half),
        &(&state.h + &k1.h * half),
        state.t + half,
        config,
        source,
    )?;
    let k3 = rates(
        mesh,
        &shift(&state.x, &k2.x, half),
        &(&state.n + &k2.n * half),
        &(&state.h + &k2.h * half),
        state.t + half,
        config,
        source,
    )?;
    let k4 = rates(
        mesh,
        &shift(&state.x, &k3.x, tau),
        &(&state.n + &k3.n * tau),
        &(&state.h + &k3.h * tau),
        state.t + tau,
        config,
        source,
    )?;
    let sixth = tau / T::lit(6.0);
    let two = T::lit(2.0);
    let v: Vec<Vector3<T>> = (0..state.x.len())
        .map(|i| (k1.x[i] + k2.x[i] * two + k3.x[i] * two + k4.x[i]) / T::lit(6.0))
        .collect();
    let x = state.x.iter().zip(&v).map(|(x, v)| x + v * tau).collect();
    let n = &state.n + (&k1.n + &k2.n * two + &k3.n * two + &k4.n) * sixth;
    let h = &state.h + (&k1.h + &k2.h * two + &k3.h * two + &k4.h) * sixth;
    Ok(NodalState { t: state.t + tau, x, u: k1.u, n, h, v_normal: k1.v_normal, v })
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics<T> {
    pub t: T,
    /// Area-weighted mean of `|x|` over `Γ_h`.
    pub mean_radius: T,
    pub min_radius_ratio: T,
    pub normal_drift: T,
    pub u_max: T,
    pub h_mean: T,
}

/// States and diagnostics of a run; `failure` holds the error that stopped it early.
#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    pub states: Vec<NodalState<T>>,
    pub diagnostics: Vec<StepDiagnostics<T>>,
    pub failure: Option<Error>,
}

impl<T: Real> Trajectory<T> {
    pub fn last(&self) -> &NodalState<T> {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }
}

/// Diagnostics of `state` on the mesh placed at its nodes.
pub fn diagnostics<T: Real>(state: &NodalState<T>, mesh: &BulkSurfaceMesh<T>) -> Result<StepDiagnostics<T>> {
    let h_mean = if state.h.is_empty() {
        T::zero()
    } else {
        state.h.sum() / T::from_usize_lossy(state.h.len())
    };
    Ok(StepDiagnostics {
        t: state.t,
        mean_radius: mesh.mean_boundary_radius(&Vector3::zeros())?,
        min_radius_ratio: mesh.quality_report()?.min_radius_ratio,
        normal_drift: state.normal_drift(),
        u_max: state.u.amax(),
        h_mean,
    })
}

/// Steps from `initial` until `t_end`; the final step is shortened to land on it.
/// Every visited state is kept when `keep_states` is set, otherwise only the
/// initial and last one.
pub fn run<T: Real>(
    initial: &NodalState<T>,
    config: &StepperConfig<T>,
    mesh: &mut BulkSurfaceMesh<T>,
    source: &Source<'_, T>,
    keep_states: bool,
) -> Result<Trajectory<T>> {
    let mut kept = Vec::new();
    let mut traj = run_observed(initial, config, mesh, source, &mut |state, _, _| {
        if keep_states {
            kept.push(state.clone());
        }
        Ok(())
    })?;
    if keep_states {
        traj.states.splice(1.., kept);
    }
    Ok(traj)
}

/// Like [`run`], keeping only the initial and last state and calling
/// `observer` after every accepted step with the new state, the moved mesh and
/// its diagnostics. An observer error stops the run and is returned.
pub fn run_observed<T: Real>(
    initial: &NodalState<T>,
    config: &StepperConfig<T>,
    mesh: &mut BulkSurfaceMesh<T>,
    source: &Source<'_, T>,
    observer: &mut StepObserver<'_, T>,
) -> Result<Trajectory<T>> {
    config.validate()?;
    if !(config.t_end > initial.t) {
        return Err(Error::InvalidArgument("t_end must exceed the initial time".into()));
    }
    mesh.set_nodes(&initial.x)?;
    let mut traj = Trajectory {
        states: vec![initial.clone()],
        diagnostics: vec![diagnostics(initial, mesh)?],
        failure: None,
    };
    let mut current = initial.clone();
    let slack = config.tau * T::lit(1e-9);
    while current.t < config.t_end - slack {
        let mut cfg = *config;
        cfg.tau = config.tau.min(config.t_end - current.t);
        match step(&current, &cfg, mesh, source) {
            Ok(next) => {
                let d = diagnostics(&next, mesh)?;
                observer(&next, mesh, &d)?;
                traj.diagnostics.push(d);
                current = next;
            }
            Err(e) => {
                traj.failure = Some(e);
                break;
            }
        }
    }
    if current.t > initial.t {
        traj.states.push(current);
    }
    Ok(traj)
}
