//! Gauss rules on intervals and collapsed-coordinate rules on simplices.

use crate::num::Real;

/// Gauss–Legendre nodes and weights on `[a, b]`.
///
/// Nodes are found by Newton iteration on the three-term Legendre recurrence
/// and returned in ascending order.
pub fn gauss_legendre<T: Real>(n: usize, a: T, b: T) -> (Vec<T>, Vec<T>) {
    assert!(n > 0, "Gauss-Legendre rule needs at least one node");
    let one = T::one();
    let two = T::lit(2.0);
    let half_len = (b - a) / two;
    let mid = (a + b) / two;

    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    let nf = T::from_usize_lossy(n);
    for i in 0..n.div_ceil(2) {
        let mut x =
            (T::pi() * (T::from_usize_lossy(i) + T::lit(0.75)) / (nf + T::lit(0.5))).cos();
        let mut dp = T::one();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= T::eps() * T::lit(4.0) {
                let (_, d) = legendre_with_derivative(n, x);
                dp = d;
                break;
            }
        }
        let w = two / ((one - x * x) * dp * dp);
        // x is the i-th largest root
        nodes[n - 1 - i] = mid + half_len * x;
        nodes[i] = mid - half_len * x;
        weights[n - 1 - i] = w * half_len;
        weights[i] = w * half_len;
    }
    (nodes, weights)
}

fn legendre_with_derivative<T: Real>(n: usize, x: T) -> (T, T) {
    let mut p0 = T::one();
    let mut p1 = x;
    for k in 2..=n {
        let kf = T::from_usize_lossy(k);
        let p2 = ((T::lit(2.0) * kf - T::one()) * x * p1 - (kf - T::one()) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (T::one(), T::zero());
    }
    let nf = T::from_usize_lossy(n);
    let dp = nf * (x * p1 - p0) / (x * x - T::one());
    (p1, dp)
}

/// Quadrature rule on the reference simplex of dimension 2 or 3.
///
/// Points are stored in barycentric coordinates `(1 - Σξ, ξ_1, .., ξ_d)` and
/// the weights sum to the reference measure (1/2 for the triangle, 1/6 for
/// the tetrahedron).
#[derive(Debug, Clone)]
pub struct QuadratureRule<T> {
    dim: usize,
    order: usize,
    points: Vec<Vec<T>>,
    weights: Vec<T>,
}

impl<T: Real> QuadratureRule<T> {
    /// Collapsed Gauss–Legendre product rule exact for polynomials of total
    /// degree `order`.
    pub fn simplex(dim: usize, order: usize) -> Self {
        assert!(dim == 2 || dim == 3, "simplex rules exist for dim 2 and 3");
        let one = T::one();
        let mut points = Vec::new();
        let mut weights = Vec::new();
        if dim == 2 {
            // Jacobian (1 - a) adds one degree in the collapsed direction.
            let n = (order + 3) / 2;
            let (g, w) = gauss_legendre::<T>(n, T::zero(), one);
            for (a, wa) in g.iter().zip(&w) {
                for (b, wb) in g.iter().zip(&w) {
                    let x1 = *a;
                    let x2 = *b * (one - *a);
                    points.push(vec![one - x1 - x2, x1, x2]);
                    weights.push(*wa * *wb * (one - *a));
                }
            }
        } else {
            // Jacobian (1 - a)^2 (1 - b).
            let n = (order + 4) / 2;
            let (g, w) = gauss_legendre::<T>(n, T::zero(), one);
            for (a, wa) in g.iter().zip(&w) {
                for (b, wb) in g.iter().zip(&w) {
                    for (c, wc) in g.iter().zip(&w) {
                        let x1 = *a;
                        let x2 = *b * (one - *a);
                        let x3 = *c * (one - *a) * (one - *b);
                        points.push(vec![one - x1 - x2 - x3, x1, x2, x3]);
                        weights.push(*wa * *wb * *wc * (one - *a) * (one - *a) * (one - *b));
                    }
                }
            }
        }
        Self { dim, order, points, weights }
    }

    /// Default rule for degree-`k` elements: order `2k + 2`.
    pub fn default_for_degree(dim: usize, degree: usize) -> Self {
        Self::simplex(dim, 2 * degree + 2)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Total polynomial degree integrated exactly.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Barycentric coordinates of each point.
    pub fn points(&self) -> &[Vec<T>] {
        &self.points
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|i| i as f64).product()
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..12 {
            let (x, w) = gauss_legendre::<f64>(n, -1.0, 1.0);
            for p in 0..2 * n {
                let num: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
                let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                assert!((num - exact).abs() < 1e-14, "n={n} p={p}: {num} vs {exact}");
            }
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn gauss_legendre_on_shifted_interval() {
        let (x, w) = gauss_legendre::<f64>(64, 0.0, std::f64::consts::FRAC_PI_2);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.cos()).sum();
        assert!((s - 1.0).abs() < 1e-14);
    }

    #[test]
    fn weights_sum_to_reference_measure() {
        for order in 1..=10 {
            let tri = QuadratureRule::<f64>::simplex(2, order);
            let tet = QuadratureRule::<f64>::simplex(3, order);
            assert!(tri.weights().iter().all(|w| *w > 0.0));
            assert!(tet.weights().iter().all(|w| *w > 0.0));
            assert!((tri.weights().iter().sum::<f64>() - 0.5).abs() < 1e-15);
            assert!((tet.weights().iter().sum::<f64>() - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn simplex_rules_are_exact_for_monomials_up_to_order() {
        // ∫_T ξ^a η^b ζ^c = a! b! c! / (a + b + c + d)!
        for order in [2, 4, 6, 8] {
            let tri = QuadratureRule::<f64>::simplex(2, order);
            for a in 0..=order {
                for b in 0..=order - a {
                    let num: f64 = tri
                        .points()
                        .iter()
                        .zip(tri.weights())
                        .map(|(p, w)| w * p[1].powi(a as i32) * p[2].powi(b as i32))
                        .sum();
                    let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                    assert!(((num - exact) / exact).abs() < 1e-13, "tri {a} {b}");
                }
            }
            let tet = QuadratureRule::<f64>::simplex(3, order);
            for a in 0..=order {
                for b in 0..=order - a {
                    for c in 0..=order - a - b {
                        let num: f64 = tet
                            .points()
                            .iter()
                            .zip(tet.weights())
                            .map(|(p, w)| {
                                w * p[1].powi(a as i32) * p[2].powi(b as i32) * p[3].powi(c as i32)
                            })
                            .sum();
                        let exact = factorial(a) * factorial(b) * factorial(c)
                            / factorial(a + b + c + 3);
                        assert!(((num - exact) / exact).abs() < 1e-13, "tet {a} {b} {c}");
                    }
                }
            }
        }
    }

    #[test]
    fn barycentric_points_sum_to_one() {
        let tet = QuadratureRule::<f32>::simplex(3, 4);
        for p in tet.points() {
            assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
    }
}
