//! Discrete fractional Sobolev norms on `Γ_h`.
//!
//! With `M`, `A` the surface mass and stiffness matrices, the operator `I − Δ_h`
//! acts on coefficient vectors as `P = M⁻¹(M + A)`. Its powers are taken through
//! the generalised eigenpairs `(M + A) z = λ M z`, and independently through the
//! integral `√λ = (2/π) ∫₀^{π/2} λ / (λ cos²θ + sin²θ) dθ`.

use nalgebra::{DMatrix, DVector, SymmetricEigen, Vector3};

use crate::assembly::{assemble_surface, OperatorSet};
use crate::error::{Error, Result};
use crate::geometry::check_len;
use crate::mesh::{gauss_legendre, BulkSurfaceMesh};
use crate::num::Real;
use crate::sparse::{default_tolerance, SparseOperator, SpdSolver};

/// Default number of Gauss–Legendre nodes for the square-root integral.
pub const DEFAULT_SQRT_NODES: usize = 64;

/// Surface mass and stiffness matrices of one configuration.
#[derive(Debug, Clone)]
pub struct SurfacePencil<T: Real> {
    pub m: SparseOperator<T>,
    pub a: SparseOperator<T>,
}

impl<T: Real> SurfacePencil<T> {
    pub fn new(m: SparseOperator<T>, a: SparseOperator<T>) -> Result<Self> {
        if m.nrows() != a.nrows() || m.ncols() != a.ncols() || m.nrows() != m.ncols() {
            return Err(Error::SizeMismatch { what: "pencil matrices", expected: m.nrows(), got: a.nrows() });
        }
        Ok(Self { m, a })
    }

    pub fn from_mesh(mesh: &BulkSurfaceMesh<T>) -> Result<Self> {
        let (m, a) = assemble_surface(mesh)?;
        Self::new(m, a)
    }

    pub fn from_operators(ops: &OperatorSet<T>) -> Self {
        Self { m: ops.m_surf.clone(), a: ops.a_surf.clone() }
    }

    pub fn len(&self) -> usize {
        self.m.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `M + A`.
    pub fn shifted(&self) -> SparseOperator<T> {
        self.m.linear_combination(T::one(), &self.a, T::one())
    }

    /// Coefficients of `(I − Δ_h) u`, i.e. `M⁻¹(M + A) c`.
    pub fn apply_operator(&self, c: &DVector<T>) -> Result<DVector<T>> {
        check_len("coefficient vector", self.len(), c.len())?;
        let solver = SpdSolver::new(&self.m, default_tolerance())?;
        solver.solve(&self.shifted().matvec(c))
    }

    /// Dense `M⁻¹(M + A)`.
    pub fn dense_operator(&self) -> Result<DMatrix<T>> {
        let m = self.m.to_dense();
        let chol = m.cholesky().ok_or_else(|| Error::NotPositiveDefinite("surface mass matrix".into()))?;
        Ok(chol.solve(&self.shifted().to_dense()))
    }
}

/// M-orthonormal eigenpairs of the pencil `(M + A, M)`, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SpectralFactorization<T: Real> {
    eigenvalues: DVector<T>,
    vectors: DMatrix<T>,
    mass: SparseOperator<T>,
}

/// Dense generalised eigen-decomposition of the pencil.
pub fn spectral_factorization<T: Real>(pencil: &SurfacePencil<T>) -> Result<SpectralFactorization<T>> {
    let n = pencil.len();
    let m = pencil.m.to_dense();
    let k = pencil.shifted().to_dense();
    let chol = m.cholesky().ok_or_else(|| Error::NotPositiveDefinite("surface mass matrix".into()))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or(Error::EigenSolve)?;
    let mut c = &l_inv * k * l_inv.transpose();
    c = (&c + c.transpose()) * T::lit(0.5);
    let eig = SymmetricEigen::try_new(c, T::eps(), 0).ok_or(Error::EigenSolve)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let z_raw = l_inv.transpose() * &eig.eigenvectors;
    let mut vectors = DMatrix::zeros(n, n);
    let mut eigenvalues = DVector::zeros(n);
    for (new, &old) in order.iter().enumerate() {
        let mut col = z_raw.column(old).into_owned();
        let scale = col.amax();
        if let Some(first) = col.iter().find(|v| v.abs() > scale * T::lit(1e-8)) {
            if *first < T::zero() {
                col = -col;
            }
        }
        vectors.set_column(new, &col);
        eigenvalues[new] = eig.eigenvalues[old];
    }
    Ok(SpectralFactorization { eigenvalues, vectors, mass: pencil.m.clone() })
}

impl<T: Real> SpectralFactorization<T> {
    pub fn eigenvalues(&self) -> &DVector<T> {
        &self.eigenvalues
    }

    /// Columns are the eigenvectors `z_j` with `ZᵀMZ = I`.
    pub fn vectors(&self) -> &DMatrix<T> {
        &self.vectors
    }

    pub fn lambda_min(&self) -> T {
        self.eigenvalues[0]
    }

    pub fn lambda_max(&self) -> T {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Spectral coordinates `ZᵀMc`.
    pub fn coordinates(&self, c: &DVector<T>) -> DVector<T> {
        self.vectors.tr_mul(&self.mass.matvec(c))
    }

    /// Coefficients of `(I − Δ_h)^{s/2} u`.
    pub fn frac_apply(&self, s: T, c: &DVector<T>) -> Result<DVector<T>> {
        check_len("coefficient vector", self.len(), c.len())?;
        let mut w = self.coordinates(c);
        let half = s * T::lit(0.5);
        for (wi, l) in w.iter_mut().zip(self.eigenvalues.iter()) {
            *wi *= l.powf(half);
        }
        Ok(&self.vectors * w)
    }

    /// `‖u‖_{H_h^s}`.
    pub fn frac_norm(&self, s: T, c: &DVector<T>) -> Result<T> {
        check_len("coefficient vector", self.len(), c.len())?;
        let w = self.coordinates(c);
        let sum = w
            .iter()
            .zip(self.eigenvalues.iter())
            .fold(T::zero(), |acc, (wi, l)| acc + l.powf(s) * *wi * *wi);
        Ok(sum.sqrt())
    }

    /// Dense matrix of `(I − Δ_h)^{s/2}` acting on coefficients.
    pub fn power_matrix(&self, s: T) -> DMatrix<T> {
        let half = s * T::lit(0.5);
        let mut scaled = self.vectors.clone();
        for (j, l) in self.eigenvalues.iter().enumerate() {
            let f = l.powf(half);
            scaled.column_mut(j).scale_mut(f);
        }
        scaled * self.vectors.transpose() * self.mass.to_dense()
    }

    /// `‖(M + A)Z − MZΛ‖_F / ‖M + A‖_F`.
    pub fn residual(&self, pencil: &SurfacePencil<T>) -> T {
        let k = pencil.shifted().to_dense();
        let m = pencil.m.to_dense();
        let lambda = DMatrix::from_diagonal(&self.eigenvalues);
        (&k * &self.vectors - m * &self.vectors * lambda).norm() / k.norm()
    }

    /// `‖ZᵀMZ − I‖_max`.
    pub fn orthonormality_defect(&self) -> T {
        let n = self.len();
        let g = self.vectors.transpose() * self.mass.to_dense() * &self.vectors;
        (g - DMatrix::identity(n, n)).amax()
    }
}

/// Measured inverse-estimate constant `sup_u ‖u‖_{s₂} / (h^{s₁−s₂} ‖u‖_{s₁})`,
/// attained by the top eigenvector: `(h² λ_max)^{(s₂−s₁)/2}`.
pub fn inverse_estimate_constant<T: Real>(fact: &SpectralFactorization<T>, h: T, s1: T, s2: T) -> T {
    (h * h * fact.lambda_max()).powf((s2 - s1) * T::lit(0.5))
}

/// `‖u‖_{H_h^{-s}}` as the dual norm `sup_w uᵀMw / ‖w‖_{H_h^s}`, evaluated by
/// dense maximisation over the Gram matrix of the `H_h^s` inner product.
pub fn dual_norm_dense<T: Real>(fact: &SpectralFactorization<T>, s: T, c: &DVector<T>) -> Result<T> {
    let m = fact.mass.to_dense();
    let g = &m * c;
    let mz = &m * &fact.vectors;
    let mut scaled = mz.clone();
    for (j, l) in fact.eigenvalues.iter().enumerate() {
        scaled.column_mut(j).scale_mut(l.powf(s));
    }
    let gram = scaled * mz.transpose();
    let chol = gram.cholesky().ok_or_else(|| Error::NotPositiveDefinite("H^s Gram matrix".into()))?;
    Ok(g.dot(&chol.solve(&g)).sqrt())
}

/// `(I − Δ_h)^{1/2} u` through the integral representation with `n_quad`
/// Gauss–Legendre nodes in `θ`.
///
/// Each node solves `(M + cos²θ A) x = (M + A) c`.
pub fn sylvester_sqrt_apply<T: Real>(pencil: &SurfacePencil<T>, c: &DVector<T>, n_quad: usize) -> Result<DVector<T>> {
    check_len("coefficient vector", pencil.len(), c.len())?;
    if n_quad == 0 {
        return Err(Error::InvalidArgument("square-root quadrature needs at least one node".into()));
    }
    let rhs = pencil.shifted().matvec(c);
    let (theta, w) = gauss_legendre(n_quad, T::zero(), T::frac_pi_2());
    let tol = default_tolerance();
    let mut out = DVector::zeros(pencil.len());
    for (t, wt) in theta.iter().zip(&w) {
        let c2 = t.cos() * t.cos();
        let op = pencil.m.linear_combination(T::one(), &pencil.a, c2);
        let x = SpdSolver::new(&op, tol)?.solve(&rhs)?;
        out.axpy(*wt, &x, T::one());
    }
    Ok(out * (T::lit(2.0) / T::pi()))
}

/// Doubles the node count from `n_start` until the relative change drops below
/// `tolerance`, failing once more than `budget` nodes would be needed.
pub fn sylvester_sqrt_apply_adaptive<T: Real>(
    pencil: &SurfacePencil<T>,
    c: &DVector<T>,
    n_start: usize,
    tolerance: T,
    budget: usize,
) -> Result<(DVector<T>, usize)> {
    let mut n = n_start.max(1);
    let mut prev = sylvester_sqrt_apply(pencil, c, n)?;
    let mut change = T::zero();
    while 2 * n <= budget {
        n *= 2;
        let next = sylvester_sqrt_apply(pencil, c, n)?;
        let scale = next.norm().max(T::eps());
        change = (&next - &prev).norm() / scale;
        if change <= tolerance {
            return Ok((next, n));
        }
        prev = next;
    }
    Err(Error::QuadratureBudget { nodes: n, change: change.to_f64_lossy(), tolerance: tolerance.to_f64_lossy() })
}

/// Straight-line family of node configurations `x(θ) = (1 − θ) x₀ + θ x₁` on a
/// fixed mesh topology.
#[derive(Debug, Clone)]
pub struct LinearBlendPath<T: Real> {
    mesh: BulkSurfaceMesh<T>,
    start: Vec<Vector3<T>>,
    end: Vec<Vector3<T>>,
}

impl<T: Real> LinearBlendPath<T> {
    pub fn new(mesh: &BulkSurfaceMesh<T>, end: Vec<Vector3<T>>) -> Result<Self> {
        check_len("end configuration", mesh.n_nodes(), end.len())?;
        Ok(Self { mesh: mesh.clone(), start: mesh.nodes().to_vec(), end })
    }

    pub fn mesh_at(&self, theta: T) -> Result<BulkSurfaceMesh<T>> {
        let nodes: Vec<_> = self
            .start
            .iter()
            .zip(&self.end)
            .map(|(a, b)| a * (T::one() - theta) + b * theta)
            .collect();
        let mut m = self.mesh.clone();
        m.set_nodes(&nodes)?;
        Ok(m)
    }

    pub fn pencil_at(&self, theta: T) -> Result<SurfacePencil<T>> {
        SurfacePencil::from_mesh(&self.mesh_at(theta)?)
    }
}

/// Outcome of the operator-derivative consistency check.
#[derive(Debug, Clone)]
pub struct DerivativeReport<T> {
    /// `‖Ṗ‖_F`.
    pub p_dot_norm: T,
    /// `‖Ṡ‖_F`.
    pub s_dot_norm: T,
    /// `‖ṠS + SṠ − Ṗ‖_F`.
    pub sylvester_residual: T,
    /// `(step, ‖Ṡ − δ_step S‖_F)` for each finite-difference step.
    pub fd_errors: Vec<(T, T)>,
}

impl<T: Real> DerivativeReport<T> {
    /// Sylvester residual relative to `‖Ṗ‖` (zero for a static family).
    pub fn relative_residual(&self) -> T {
        if self.p_dot_norm > T::zero() {
            self.sylvester_residual / self.p_dot_norm
        } else {
            self.sylvester_residual
        }
    }

    /// Observed orders between consecutive finite-difference steps.
    pub fn orders(&self) -> Vec<T> {
        self.fd_errors
            .windows(2)
            .map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln())
            .collect()
    }
}

fn dense_sqrt<T: Real>(pencil: &SurfacePencil<T>) -> Result<DMatrix<T>> {
    Ok(spectral_factorization(pencil)?.power_matrix(T::one()))
}

/// Differentiates `P(θ) = M⁻¹(M + A)` along `path` at `theta0` by a
/// fourth-order central difference with step `p_step`, solves `ṠS + SṠ = Ṗ` in
/// spectral coordinates and compares `Ṡ` with central differences of
/// `S = P^{1/2}` at each of `fd_steps`.
pub fn operator_time_derivative_check<T: Real>(
    path: &LinearBlendPath<T>,
    theta0: T,
    p_step: T,
    fd_steps: &[T],
) -> Result<DerivativeReport<T>> {
    let p_at = |t: T| path.pencil_at(t)?.dense_operator();
    let d = p_step;
    let two = T::lit(2.0);
    let p_dot = ((p_at(theta0 - two * d)? - p_at(theta0 + two * d)?)
        + (p_at(theta0 + d)? - p_at(theta0 - d)?) * T::lit(8.0))
        / (T::lit(12.0) * d);

    let pencil = path.pencil_at(theta0)?;
    let fact = spectral_factorization(&pencil)?;
    let z = fact.vectors();
    let zt_m = z.transpose() * pencil.m.to_dense();
    let p_dot_spec = &zt_m * &p_dot * z;
    let roots: Vec<T> = fact.eigenvalues().iter().map(|l| l.sqrt()).collect();
    let n = fact.len();
    let s_dot_spec = DMatrix::from_fn(n, n, |i, j| p_dot_spec[(i, j)] / (roots[i] + roots[j]));
    let s_dot = z * s_dot_spec * &zt_m;
    let s = fact.power_matrix(T::one());
    let residual = (&s_dot * &s + &s * &s_dot - &p_dot).norm();

    let mut fd_errors = Vec::with_capacity(fd_steps.len());
    for &h in fd_steps {
        let fd = (dense_sqrt(&path.pencil_at(theta0 + h)?)? - dense_sqrt(&path.pencil_at(theta0 - h)?)?) / (two * h);
        fd_errors.push((h, (&s_dot - fd).norm()));
    }
    Ok(DerivativeReport {
        p_dot_norm: p_dot.norm(),
        s_dot_norm: s_dot.norm(),
        sylvester_residual: residual,
        fd_errors,
    })
}
