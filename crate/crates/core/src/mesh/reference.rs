//! Lagrange reference elements on the triangle and tetrahedron.

use super::quadrature::QuadratureRule;
use crate::error::{Error, Result};
use crate::num::Real;

/// Multi-indices `α ∈ ℕ^{dim+1}`, `|α| = degree`, of the Lagrange lattice.
///
/// Vertices come first (`α = k e_i` in vertex order), then edge, face and
/// interior nodes, each group in descending lexicographic order.
pub fn lattice(dim: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut all = Vec::new();
    let mut current = vec![0; dim + 1];
    fill_lattice(&mut all, &mut current, 0, degree);
    all.sort_by(|a, b| {
        let na = a.iter().filter(|&&x| x > 0).count();
        let nb = b.iter().filter(|&&x| x > 0).count();
        na.cmp(&nb).then_with(|| b.cmp(a))
    });
    all
}

fn fill_lattice(out: &mut Vec<Vec<usize>>, current: &mut Vec<usize>, pos: usize, remaining: usize) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    for v in 0..=remaining {
        current[pos] = v;
        fill_lattice(out, current, pos + 1, remaining - v);
    }
}

/// Degree-`k` Lagrange element on the reference simplex, tabulated at a
/// quadrature rule.
///
/// Reference gradients are taken with respect to `ξ_1..ξ_d`, where the
/// barycentric coordinates are `(1 - Σξ, ξ_1, .., ξ_d)`.
#[derive(Debug, Clone)]
pub struct ReferenceElement<T> {
    dim: usize,
    degree: usize,
    lattice: Vec<Vec<usize>>,
    quadrature: QuadratureRule<T>,
    values: Vec<Vec<T>>,
    gradients: Vec<Vec<[T; 3]>>,
}

impl<T: Real> ReferenceElement<T> {
    pub fn new(dim: usize, degree: usize, quadrature: QuadratureRule<T>) -> Result<Self> {
        if !(1..=3).contains(&degree) {
            return Err(Error::InvalidDegree(degree));
        }
        if dim != quadrature.dim() {
            return Err(Error::InvalidArgument(format!(
                "quadrature of dimension {} for a {dim}-simplex",
                quadrature.dim()
            )));
        }
        let lattice = lattice(dim, degree);
        let mut values = Vec::with_capacity(quadrature.len());
        let mut gradients = Vec::with_capacity(quadrature.len());
        for p in quadrature.points() {
            let (v, g) = evaluate(&lattice, degree, p);
            values.push(v);
            gradients.push(g);
        }
        Ok(Self { dim, degree, lattice, quadrature, values, gradients })
    }

    /// Element with the default quadrature order `2k + 2`.
    pub fn with_default_quadrature(dim: usize, degree: usize) -> Result<Self> {
        Self::new(dim, degree, QuadratureRule::default_for_degree(dim, degree))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_basis(&self) -> usize {
        self.lattice.len()
    }

    pub fn lattice(&self) -> &[Vec<usize>] {
        &self.lattice
    }

    pub fn quadrature(&self) -> &QuadratureRule<T> {
        &self.quadrature
    }

    /// Basis values at quadrature point `q`.
    pub fn values(&self, q: usize) -> &[T] {
        &self.values[q]
    }

    /// Reference gradients at quadrature point `q`; components beyond `dim` are zero.
    pub fn gradients(&self, q: usize) -> &[[T; 3]] {
        &self.gradients[q]
    }

    /// Evaluates values and reference gradients at an arbitrary barycentric point.
    pub fn evaluate(&self, barycentric: &[T]) -> (Vec<T>, Vec<[T; 3]>) {
        evaluate(&self.lattice, self.degree, barycentric)
    }

    /// Barycentric coordinates of lattice node `i`.
    pub fn node_barycentric(&self, i: usize) -> Vec<T> {
        let k = T::from_usize_lossy(self.degree);
        self.lattice[i].iter().map(|&a| T::from_usize_lossy(a) / k).collect()
    }
}

/// `P_m(s) = Π_{j<m} (k s - j) / (j + 1)` and its derivative.
fn silvester<T: Real>(m: usize, degree: usize, s: T) -> (T, T) {
    let k = T::from_usize_lossy(degree);
    let factor = |j: usize| (k * s - T::from_usize_lossy(j)) / T::from_usize_lossy(j + 1);
    let mut value = T::one();
    for j in 0..m {
        value *= factor(j);
    }
    let mut deriv = T::zero();
    for l in 0..m {
        let mut term = k / T::from_usize_lossy(l + 1);
        for j in (0..m).filter(|&j| j != l) {
            term *= factor(j);
        }
        deriv += term;
    }
    (value, deriv)
}

fn evaluate<T: Real>(lattice: &[Vec<usize>], degree: usize, bary: &[T]) -> (Vec<T>, Vec<[T; 3]>) {
    let nb = bary.len();
    let mut values = Vec::with_capacity(lattice.len());
    let mut gradients = Vec::with_capacity(lattice.len());
    let mut p = [T::zero(); 4];
    let mut dp = [T::zero(); 4];
    for alpha in lattice {
        for i in 0..nb {
            let (v, d) = silvester(alpha[i], degree, bary[i]);
            p[i] = v;
            dp[i] = d;
        }
        let value = (0..nb).fold(T::one(), |acc, i| acc * p[i]);
        // ∂φ/∂λ_i
        let mut dl = [T::zero(); 4];
        for i in 0..nb {
            let mut t = dp[i];
            for (m, pm) in p.iter().enumerate().take(nb) {
                if m != i {
                    t *= *pm;
                }
            }
            dl[i] = t;
        }
        let mut g = [T::zero(); 3];
        for a in 1..nb {
            g[a - 1] = dl[a] - dl[0];
        }
        values.push(value);
        gradients.push(g);
    }
    (values, gradients)
}
