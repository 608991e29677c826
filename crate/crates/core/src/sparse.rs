//! Sparse operators and SPD linear solves.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CscMatrix, CsrMatrix};

use crate::error::{Error, Result};
use crate::num::Real;

/// Compressed sparse row matrix with a declared symmetry flag.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator<T: Real> {
    csr: CsrMatrix<T>,
    symmetric: bool,
}

impl<T: Real> SparseOperator<T> {
    /// Builds from `(row, col, value)` triplets. Duplicates are summed in the
    /// order they appear, so the result does not depend on anything but the
    /// triplet sequence.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, T)], symmetric: bool) -> Self {
        let mut sorted: Vec<(usize, usize, T)> = triplets.to_vec();
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        let mut offsets = vec![0usize; nrows + 1];
        let mut cols = Vec::with_capacity(sorted.len());
        let mut vals: Vec<T> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) outside {nrows}x{ncols}");
            if last == Some((r, c)) {
                *vals.last_mut().expect("previous entry") += v;
            } else {
                cols.push(c);
                vals.push(v);
                offsets[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            offsets[i + 1] += offsets[i];
        }
        let csr = CsrMatrix::try_from_csr_data(nrows, ncols, offsets, cols, vals).expect("valid CSR structure");
        Self { csr, symmetric }
    }

    pub fn identity(n: usize) -> Self {
        Self { csr: CsrMatrix::identity(n), symmetric: true }
    }

    pub fn nrows(&self) -> usize {
        self.csr.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.csr.ncols()
    }

    pub fn nnz(&self) -> usize {
        self.csr.nnz()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn csr(&self) -> &CsrMatrix<T> {
        &self.csr
    }

    pub fn triplets(&self) -> Vec<(usize, usize, T)> {
        self.csr.triplet_iter().map(|(r, c, v)| (r, c, *v)).collect()
    }

    pub fn entry(&self, i: usize, j: usize) -> T {
        let row = self.csr.row(i);
        match row.col_indices().binary_search(&j) {
            Ok(p) => row.values()[p],
            Err(_) => T::zero(),
        }
    }

    pub fn matvec(&self, x: &DVector<T>) -> DVector<T> {
        assert_eq!(x.len(), self.ncols(), "matvec dimension");
        let mut y = DVector::zeros(self.nrows());
        for (i, row) in self.csr.row_iter().enumerate() {
            let mut s = T::zero();
            for (c, v) in row.col_indices().iter().zip(row.values()) {
                s += *v * x[*c];
            }
            y[i] = s;
        }
        y
    }

    /// `Aᵀ x`.
    pub fn matvec_transpose(&self, x: &DVector<T>) -> DVector<T> {
        assert_eq!(x.len(), self.nrows(), "transpose matvec dimension");
        let mut y = DVector::zeros(self.ncols());
        for (i, row) in self.csr.row_iter().enumerate() {
            for (c, v) in row.col_indices().iter().zip(row.values()) {
                y[*c] += *v * x[i];
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut d = DMatrix::zeros(self.nrows(), self.ncols());
        for (r, c, v) in self.csr.triplet_iter() {
            d[(r, c)] += *v;
        }
        d
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> T {
        self.csr.values().iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// `max |a_ij - a_ji|` over the stored pattern.
    pub fn symmetry_defect(&self) -> T {
        if self.nrows() != self.ncols() {
            return T::max_value().unwrap_or_else(T::one);
        }
        self.csr
            .triplet_iter()
            .fold(T::zero(), |m, (r, c, v)| m.max((*v - self.entry(c, r)).abs()))
    }

    /// Sub-matrix on the given row and column ranges.
    pub fn block(&self, rows: Range<usize>, cols: Range<usize>) -> Self {
        let symmetric = self.symmetric && rows == cols;
        let triplets: Vec<_> = rows
            .clone()
            .flat_map(|r| {
                let row = self.csr.row(r);
                row.col_indices()
                    .iter()
                    .zip(row.values())
                    .filter(|(c, _)| cols.contains(c))
                    .map(|(c, v)| (r - rows.start, c - cols.start, *v))
                    .collect::<Vec<_>>()
            })
            .collect();
        Self::from_triplets(rows.len(), cols.len(), &triplets, symmetric)
    }

    /// `a·self + b·other`, where `other` is embedded with its top-left corner at
    /// `(offset, offset)`.
    pub fn add_embedded(&self, a: T, other: &Self, b: T, offset: usize) -> Self {
        assert!(offset + other.nrows() <= self.nrows() && offset + other.ncols() <= self.ncols());
        let mut triplets: Vec<_> = self.csr.triplet_iter().map(|(r, c, v)| (r, c, a * *v)).collect();
        triplets.extend(other.csr.triplet_iter().map(|(r, c, v)| (r + offset, c + offset, b * *v)));
        Self::from_triplets(self.nrows(), self.ncols(), &triplets, self.symmetric && other.symmetric)
    }

    /// `a·self + b·other` for equally sized operators.
    pub fn linear_combination(&self, a: T, other: &Self, b: T) -> Self {
        assert_eq!((self.nrows(), self.ncols()), (other.nrows(), other.ncols()));
        self.add_embedded(a, other, b, 0)
    }

    /// `I_d ⊗ self`: acts component-wise on vectors stacked as `[c_1; ..; c_d]`.
    pub fn kron_identity(&self, d: usize) -> Self {
        let (n, m) = (self.nrows(), self.ncols());
        let mut triplets = Vec::with_capacity(d * self.nnz());
        for l in 0..d {
            triplets.extend(self.csr.triplet_iter().map(|(r, c, v)| (r + l * n, c + l * m, *v)));
        }
        Self::from_triplets(d * n, d * m, &triplets, self.symmetric)
    }
}

/// Reverse Cuthill–McKee ordering of a structurally symmetric matrix.
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee<T: Real>(op: &SparseOperator<T>) -> Vec<usize> {
    let n = op.nrows();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| op.csr.row(i).col_indices().iter().copied().filter(|&j| j != i).collect())
        .collect();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut head = order.len();
        order.push(start);
        while head < order.len() {
            let v = order[head];
            head += 1;
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                order.push(w);
            }
        }
    }
    order.reverse();
    order
}

/// Default relative-residual tolerance for a scalar type.
pub fn default_tolerance<T: Real>() -> T {
    T::lit(1e-11).max(T::eps() * T::lit(100.0))
}

/// Direct solver for a symmetric positive definite operator with a residual
/// check and a preconditioned conjugate gradient fallback.
#[derive(Debug, Clone)]
pub struct SpdSolver<T: Real> {
    op: SparseOperator<T>,
    perm: Vec<usize>,
    factor: Option<CscCholesky<T>>,
    tolerance: T,
    max_iterations: usize,
}

impl<T: Real> SpdSolver<T> {
    pub fn new(op: &SparseOperator<T>, tolerance: T) -> Result<Self> {
        if op.nrows() != op.ncols() {
            return Err(Error::SizeMismatch { what: "square operator", expected: op.nrows(), got: op.ncols() });
        }
        let perm = reverse_cuthill_mckee(op);
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let permuted: Vec<_> = op
            .csr
            .triplet_iter()
            .map(|(r, c, v)| (inverse[r], inverse[c], *v))
            .collect();
        let permuted = SparseOperator::from_triplets(op.nrows(), op.ncols(), &permuted, true);
        let csc = CscMatrix::from(&permuted.csr);
        let factor = CscCholesky::factor(&csc).ok();
        Ok(Self { op: op.clone(), perm, factor, tolerance, max_iterations: 20 * op.nrows().max(50) })
    }

    pub fn operator(&self) -> &SparseOperator<T> {
        &self.op
    }

    pub fn tolerance(&self) -> T {
        self.tolerance
    }

    /// Whether the sparse Cholesky factorisation succeeded.
    pub fn is_factored(&self) -> bool {
        self.factor.is_some()
    }

    pub fn solve(&self, b: &DVector<T>) -> Result<DVector<T>> {
        let n = self.op.nrows();
        if b.len() != n {
            return Err(Error::SizeMismatch { what: "right-hand side", expected: n, got: b.len() });
        }
        let b_norm = b.norm();
        if b_norm == T::zero() {
            return Ok(DVector::zeros(n));
        }
        let mut x = match &self.factor {
            Some(f) => {
                let mut x = self.direct(f, b);
                // two rounds of iterative refinement are enough when the factor is sound
                for _ in 0..2 {
                    let r = b - self.op.matvec(&x);
                    if r.norm() <= self.tolerance * b_norm {
                        return Ok(x);
                    }
                    x += self.direct(f, &r);
                }
                x
            }
            None => DVector::zeros(n),
        };
        let rel = (b - self.op.matvec(&x)).norm() / b_norm;
        if rel <= self.tolerance {
            return Ok(x);
        }
        self.pcg(b, &mut x)?;
        Ok(x)
    }

    fn direct(&self, f: &CscCholesky<T>, b: &DVector<T>) -> DVector<T> {
        let pb = DMatrix::from_fn(b.len(), 1, |i, _| b[self.perm[i]]);
        let px = f.solve(&pb);
        let mut x = DVector::zeros(b.len());
        for (i, &old) in self.perm.iter().enumerate() {
            x[old] = px[(i, 0)];
        }
        x
    }

    fn pcg(&self, b: &DVector<T>, x: &mut DVector<T>) -> Result<()> {
        let n = b.len();
        let diag: Vec<T> = (0..n)
            .map(|i| {
                let d = self.op.entry(i, i);
                if d > T::zero() {
                    T::one() / d
                } else {
                    T::one()
                }
            })
            .collect();
        let precondition = |r: &DVector<T>| DVector::from_fn(n, |i, _| r[i] * diag[i]);
        let b_norm = b.norm();
        let mut r = b - self.op.matvec(x);
        let mut z = precondition(&r);
        let mut p = z.clone();
        let mut rz = r.dot(&z);
        for _ in 0..self.max_iterations {
            if r.norm() <= self.tolerance * b_norm {
                return Ok(());
            }
            let ap = self.op.matvec(&p);
            let pap = p.dot(&ap);
            if pap <= T::zero() {
                break;
            }
            let alpha = rz / pap;
            x.axpy(alpha, &p, T::one());
            r.axpy(-alpha, &ap, T::one());
            z = precondition(&r);
            let rz_new = r.dot(&z);
            p = &z + &p * (rz_new / rz);
            rz = rz_new;
        }
        let residual = (b - self.op.matvec(x)).norm() / b_norm;
        if residual <= self.tolerance {
            Ok(())
        } else {
            Err(Error::LinearSolve {
                residual: residual.to_f64_lossy(),
                iterations: self.max_iterations,
                tolerance: self.tolerance.to_f64_lossy(),
            })
        }
    }
}
