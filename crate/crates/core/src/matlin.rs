//! Dense real linear algebra for small matrices.
//!
//! Everything the certificates need fits in a handful of primitives: the
//! symmetric part, Kronecker products, the spectrum of a symmetric matrix
//! (cyclic Jacobi), left null vectors of zero-row-sum Metzler matrices, and
//! strong connectivity of their off-diagonal support.
//!
//! `‖A‖∞` in this crate always means the max-abs entry `max |a_ij|`, not the
//! induced row-sum norm. See [`Matrix::max_abs`].

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Relative/absolute tolerances used by residual and semidefiniteness checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
}

impl Tolerances {
    /// `max(abs, rel * max(1, scale))`
    pub fn bound(&self, scale: f64) -> f64 {
        (self.rel * scale.abs().max(1.0)).max(self.abs)
    }
}

pub const TOL: Tolerances = Tolerances { rel: 1e-9, abs: 1e-12 };

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.as_ref().len());
        let mut data = Vec::with_capacity(r * c);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != c {
                return Err(Error::Dimension(format!("row {i} has {} entries, expected {c}", row.len())));
            }
            data.extend_from_slice(row);
        }
        Self::new(r, c, data)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let rrow = rhs.row(k);
                let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in orow.iter_mut().zip(rrow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::Dimension(format!(
                "{}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows).map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum()).collect())
    }

    fn zip_with(&self, rhs: &Matrix, op: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(Error::Dimension(format!("shape {}x{} vs {}x{}", self.rows, self.cols, rhs.rows, rhs.cols)));
        }
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| op(a, b)).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn add(&self, rhs: &Matrix) -> Result<Self> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Matrix) -> Result<Self> {
        self.zip_with(rhs, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    /// `self += s * rhs`
    pub fn axpy(&mut self, s: f64, rhs: &Matrix) -> Result<()> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(Error::Dimension("axpy shape mismatch".into()));
        }
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += s * b;
        }
        Ok(())
    }

    /// Max-abs entry, written `‖A‖∞` throughout the crate.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square() && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    pub fn is_diagonal(&self) -> bool {
        self.is_square() && (0..self.rows).all(|i| (0..self.cols).all(|j| i == j || self[(i, j)] == 0.0))
    }
}

/// `(A + Aᵀ)/2`
pub fn symmetric_part(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::Dimension(format!("symmetric part of non-square {}x{} matrix", a.rows, a.cols)));
    }
    let n = a.rows;
    let mut s = Matrix::zeros(n, n);
    for i in 0..n {
        s[(i, i)] = a[(i, i)];
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(s)
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ra, ca, rb, cb) = (a.rows, a.cols, b.rows, b.cols);
    let mut out = Matrix::zeros(ra * rb, ca * cb);
    for i in 0..ra {
        for j in 0..ca {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            for k in 0..rb {
                for l in 0..cb {
                    out[(i * rb + k, j * cb + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// All eigenvalues of a symmetric matrix, ascending (cyclic Jacobi).
///
/// The input must be symmetric within `1e-9·max(1, ‖S‖∞)`; it is symmetrized
/// before the sweep.
pub fn sym_eigenvalues(s: &Matrix) -> Result<Vec<f64>> {
    if !s.is_square() {
        return Err(Error::Dimension(format!("eigenvalues of {}x{} matrix", s.rows, s.cols)));
    }
    if s.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigenvalue input"));
    }
    let scale = s.max_abs();
    if !s.is_symmetric(TOL.bound(scale)) {
        return Err(Error::Validation("eigenvalue input is not symmetric".into()));
    }
    let mut a = symmetric_part(s)?;
    let n = a.rows;
    if n == 0 {
        return Ok(Vec::new());
    }

    let frob: f64 = a.data.iter().map(|v| v * v).sum::<f64>().sqrt();
    let target = f64::EPSILON * frob.max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= target {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
            }
        }
    }
    let mut eig = a.diagonal();
    eig.sort_by(|x, y| x.total_cmp(y));
    Ok(eig)
}

/// `(λ_min, λ_max)` of a symmetric matrix.
pub fn sym_eig_extremes(s: &Matrix) -> Result<(f64, f64)> {
    let eig = sym_eigenvalues(s)?;
    match (eig.first(), eig.last()) {
        (Some(&lo), Some(&hi)) => Ok((lo, hi)),
        _ => Err(Error::Dimension("empty matrix has no eigenvalues".into())),
    }
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn sym_spectral_radius(s: &Matrix) -> Result<f64> {
    let (lo, hi) = sym_eig_extremes(s)?;
    Ok(lo.abs().max(hi.abs()))
}

/// Induced 2-norm, `sqrt(λ_max(AᵀA))`.
pub fn spectral_norm(a: &Matrix) -> Result<f64> {
    let ata = a.transpose().matmul(a)?;
    let (_, hi) = sym_eig_extremes(&ata)?;
    Ok(hi.max(0.0).sqrt())
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if !a.is_square() || a.rows != b.len() {
        return Err(Error::Dimension("solve needs square A and matching b".into()));
    }
    let n = a.rows;
    let mut m = a.clone();
    let mut x = b.to_vec();
    let scale = m.max_abs().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot = (col..n).max_by(|&r1, &r2| m[(r1, col)].abs().total_cmp(&m[(r2, col)].abs())).unwrap_or(col);
        if m[(pivot, col)].abs() <= 1e-14 * scale {
            return Err(Error::Numeric(format!("singular system at column {col}")));
        }
        if pivot != col {
            for j in 0..n {
                m.data.swap(pivot * n + j, col * n + j);
            }
            x.swap(pivot, col);
        }
        let d = m[(col, col)];
        for r in (col + 1)..n {
            let f = m[(r, col)] / d;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                m[(r, j)] -= f * m[(col, j)];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let tail: f64 = ((col + 1)..n).map(|j| m[(col, j)] * x[j]).sum();
        x[col] = (x[col] - tail) / m[(col, col)];
    }
    Ok(x)
}

/// Square matrix with nonnegative off-diagonal entries and zero row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct MetzlerZeroRowSum(Matrix);

impl MetzlerZeroRowSum {
    /// Validates the Metzler and zero-row-sum invariants (row sums within
    /// `1e-12·max(1, ‖L‖∞)`).
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!("coupling matrix is {}x{}", m.rows, m.cols)));
        }
        let tol = 1e-12 * m.max_abs().max(1.0);
        for i in 0..m.rows {
            for j in 0..m.cols {
                if i != j && m[(i, j)] < 0.0 {
                    return Err(Error::Validation(format!(
                        "negative off-diagonal entry {} at ({}, {})",
                        m[(i, j)],
                        i + 1,
                        j + 1
                    )));
                }
            }
            let sum: f64 = m.row(i).iter().sum();
            if sum.abs() > tol {
                return Err(Error::Validation(format!("row {} sums to {sum}", i + 1)));
            }
        }
        Ok(Self(m))
    }

    /// Keeps the off-diagonal entries and resets each diagonal entry to minus
    /// its off-diagonal row sum, so rows sum to zero exactly.
    pub fn rebalanced(mut m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!("coupling matrix is {}x{}", m.rows, m.cols)));
        }
        for i in 0..m.rows {
            let off: f64 = (0..m.cols).filter(|&j| j != i).map(|j| m[(i, j)]).sum();
            m[(i, i)] = -off;
        }
        Self::new(m)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.rows
    }
}

/// True iff every node reaches every other along edges `j → i` with `l_ij > 0`.
pub fn is_strongly_connected(l: &MetzlerZeroRowSum) -> bool {
    let m = l.matrix();
    support_strongly_connected(m.rows(), |from, to| from != to && m[(to, from)] > 0.0)
}

/// Strong connectivity of the digraph on `n` nodes with edge predicate
/// `edge(from, to)`: forward and backward reachability from node 0.
#[allow(clippy::needless_range_loop)]
pub fn support_strongly_connected(n: usize, edge: impl Fn(usize, usize) -> bool) -> bool {
    if n <= 1 {
        return true;
    }
    let reach_all = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                let e = if forward { edge(u, v) } else { edge(v, u) };
                if e && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach_all(true) && reach_all(false)
}

/// Nonnegative left null vector `p` with `pᵀL = 0`, `Σp = 1`.
///
/// Does not require strong connectivity; the null space must be
/// one-dimensional. Reducible matrices may yield zero entries.
pub fn left_null_vector(l: &MetzlerZeroRowSum) -> Result<Vec<f64>> {
    let m = l.matrix();
    let n = m.rows();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    // Lᵀp = 0 has one redundant equation (rows of Lᵀ sum to zero); swap it
    // for the normalization.
    let mut a = m.transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = vec![0.0; n];
    rhs[n - 1] = 1.0;
    let mut p = solve(&a, &rhs)?;
    for v in &mut p {
        if v.abs() <= 1e-15 {
            *v = 0.0;
        }
    }
    Ok(p)
}

/// `‖pᵀL‖∞` for a candidate left null vector.
pub fn left_residual(l: &MetzlerZeroRowSum, p: &[f64]) -> f64 {
    let m = l.matrix();
    (0..m.cols()).map(|j| (0..m.rows()).map(|i| p[i] * m[(i, j)]).sum::<f64>().abs()).fold(0.0, f64::max)
}

/// Positive left eigenvector for eigenvalue 0 of an irreducible Metzler
/// zero-row-sum matrix, normalized to sum 1.
pub fn perron_left_vector(l: &MetzlerZeroRowSum) -> Result<Vec<f64>> {
    if !is_strongly_connected(l) {
        return Err(Error::Connectivity(format!("{0}x{0} coupling matrix is reducible", l.dim())));
    }
    let tol = TOL.bound(l.matrix().max_abs());
    let p = match left_null_vector(l) {
        Ok(p) if p.iter().all(|&v| v > 0.0) && left_residual(l, &p) <= tol => p,
        _ => perron_power_iteration(l)?,
    };
    if p.iter().any(|&v| v <= 0.0) {
        return Err(Error::Numeric("Perron vector has nonpositive entries".into()));
    }
    Ok(p)
}

/// Fallback: power iteration on `I + Lᵀ/s`, `s > max |l_ii|`, which is
/// nonnegative and primitive when `L` is irreducible.
fn perron_power_iteration(l: &MetzlerZeroRowSum) -> Result<Vec<f64>> {
    let m = l.matrix();
    let n = m.rows();
    let s = 2.0 * (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut iter = Matrix::identity(n);
    iter.axpy(1.0 / s, &m.transpose())?;
    let mut p = vec![1.0 / n as f64; n];
    let tol = TOL.bound(m.max_abs());
    for _ in 0..1_000_000 {
        let mut next = iter.mul_vec(&p)?;
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        p = next;
        if left_residual(l, &p) <= tol {
            return Ok(p);
        }
    }
    Err(Error::Numeric("Perron power iteration did not converge".into()))
}
