//! Small dense linear algebra: row-major matrices, a cyclic Jacobi
//! eigensolver for symmetric matrices and a one-sided Jacobi SVD.
//!
//! The problems solved here are at most a few hundred dimensions wide
//! (embedding dimensionality or language count), where Jacobi methods are
//! accurate to working precision and fast enough.

use crate::scalar::Real;

const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix { rows: rows.len(), cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Matrix<T>) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == T::zero() {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o = *o + a * b;
                }
            }
        }
        out
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Matrix<T>) -> Self {
        assert_eq!(self.rows, other.rows, "t_matmul shape mismatch");
        let mut out = Self::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let a_row = self.row(r);
            let b_row = other.row(r);
            for (i, &a) in a_row.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o = *o + a * b;
                }
            }
        }
        out
    }

    /// Returns `(centered copy, column means)`.
    pub fn center_columns(&self) -> (Self, Vec<T>) {
        let n = T::of_usize(self.rows);
        let mut means = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            for (m, &x) in means.iter_mut().zip(self.row(i)) {
                *m = *m + x;
            }
        }
        for m in &mut means {
            *m = *m / n;
        }
        let mut out = self.clone();
        for i in 0..self.rows {
            for (x, &m) in out.row_mut(i).iter_mut().zip(&means) {
                *x = *x - m;
            }
        }
        (out, means)
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Matrix<T>) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }
}

/// Eigendecomposition of a symmetric matrix, eigenvalues in descending order.
/// `vectors` holds the matching unit eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
}

/// Cyclic Jacobi eigensolver. Only the symmetric part of `a` is meaningful.
pub fn symmetric_eigen<T: Real>(a: &Matrix<T>) -> SymmetricEigen<T> {
    assert_eq!(a.rows, a.cols, "eigen of non-square matrix");
    let n = a.rows;
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let scale = m.frobenius();
    let tol = T::epsilon() * scale;

    for _ in 0..MAX_SWEEPS {
        let mut off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off = off + m.get(p, q) * m.get(p, q);
            }
        }
        if off.sqrt() <= tol || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == T::zero() {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (T::of(2.0) * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(T::one()));
                let c = T::one() / t.hypot(T::one());
                let s = t * c;
                rotate_cols(&mut m, p, q, c, s);
                rotate_rows(&mut m, p, q, c, s);
                m.set(p, q, T::zero());
                m.set(q, p, T::zero());
                rotate_cols(&mut v, p, q, c, s);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).partial_cmp(&m.get(i, i)).expect("finite eigenvalues"));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v.get(r, order[c]));
    SymmetricEigen { values, vectors }
}

#[inline]
fn rotate_cols<T: Real>(m: &mut Matrix<T>, p: usize, q: usize, c: T, s: T) {
    for k in 0..m.rows {
        let mkp = m.get(k, p);
        let mkq = m.get(k, q);
        m.set(k, p, c * mkp - s * mkq);
        m.set(k, q, s * mkp + c * mkq);
    }
}

#[inline]
fn rotate_rows<T: Real>(m: &mut Matrix<T>, p: usize, q: usize, c: T, s: T) {
    for k in 0..m.cols {
        let mpk = m.get(p, k);
        let mqk = m.get(q, k);
        m.set(p, k, c * mpk - s * mqk);
        m.set(q, k, s * mpk + c * mqk);
    }
}

/// Thin singular value decomposition `a = u · diag(s) · vᵀ`, with
/// `k = min(rows, cols)` singular values in descending order.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub u: Matrix<T>,
    pub singular: Vec<T>,
    pub v: Matrix<T>,
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd<T: Real>(a: &Matrix<T>) -> Svd<T> {
    if a.rows < a.cols {
        let t = svd(&a.transpose());
        return Svd { u: t.v, singular: t.singular, v: t.u };
    }
    let (m, n) = (a.rows, a.cols);
    // Column-major working copies.
    let mut cols: Vec<Vec<T>> = (0..n).map(|j| a.col(j)).collect();
    let mut vcols: Vec<Vec<T>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { T::one() } else { T::zero() }).collect())
        .collect();
    let eps = T::epsilon();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = column_gram(&cols[p], &cols[q]);
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::of(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + zeta.hypot(T::one()));
                let c = T::one() / t.hypot(T::one());
                let s = c * t;
                rotate_pair(&mut cols, p, q, c, s);
                rotate_pair(&mut vcols, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<T> = cols.iter().map(|c| crate::scalar::norm(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite singular values"));
    let largest = order.first().map_or(T::zero(), |&i| norms[i]);

    let mut ucols: Vec<Vec<T>> = Vec::with_capacity(n);
    let mut singular = Vec::with_capacity(n);
    for &j in &order {
        let s = norms[j];
        singular.push(s);
        if s > largest * eps * T::of_usize(m.max(n)) && s > T::min_positive_value() {
            ucols.push(cols[j].iter().map(|&x| x / s).collect());
        } else {
            ucols.push(orthonormal_complement(&ucols, m));
        }
    }
    let u = Matrix::from_fn(m, n, |i, j| ucols[j][i]);
    let v = Matrix::from_fn(n, n, |i, j| vcols[order[j]][i]);
    Svd { u, singular, v }
}

fn column_gram<T: Real>(a: &[T], b: &[T]) -> (T, T, T) {
    let mut alpha = T::zero();
    let mut beta = T::zero();
    let mut gamma = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        alpha = alpha + x * x;
        beta = beta + y * y;
        gamma = gamma + x * y;
    }
    (alpha, beta, gamma)
}

fn rotate_pair<T: Real>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (left, right) = cols.split_at_mut(q);
    let cp = &mut left[p];
    let cq = &mut right[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// A unit vector orthogonal to every vector in `basis` (Gram-Schmidt over
/// the standard basis).
fn orthonormal_complement<T: Real>(basis: &[Vec<T>], dim: usize) -> Vec<T> {
    let mut best: Option<(T, Vec<T>)> = None;
    for e in 0..dim {
        let mut v = vec![T::zero(); dim];
        v[e] = T::one();
        for b in basis {
            let proj = crate::scalar::dot(&v, b);
            crate::scalar::axpy(-proj, b, &mut v);
        }
        let nv = crate::scalar::norm(&v);
        if best.as_ref().is_none_or(|(bn, _)| nv > *bn) {
            best = Some((nv, v));
        }
    }
    let (nv, v) = best.expect("dimension is positive");
    v.into_iter().map(|x| x / nv).collect()
}

/// `a^{-1/2}` for a symmetric positive definite matrix, along with its
/// eigenvalues. Returns `None` when the smallest eigenvalue is not positive
/// relative to the largest.
pub fn inverse_sqrt<T: Real>(a: &Matrix<T>) -> Option<(Matrix<T>, Vec<T>)> {
    let eig = symmetric_eigen(a);
    let n = a.rows;
    let top = eig.values.first().copied().unwrap_or(T::zero());
    let floor = top.abs() * T::epsilon() * T::of_usize(n.max(1)) * T::of(10.0);
    if eig.values.iter().any(|&l| l <= floor) {
        return None;
    }
    let scales: Vec<T> = eig.values.iter().map(|&l| T::one() / l.sqrt()).collect();
    let out = Matrix::from_fn(n, n, |i, j| {
        (0..n)
            .map(|k| eig.vectors.get(i, k) * scales[k] * eig.vectors.get(j, k))
            .sum()
    });
    Some((out, eig.values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
        let mut rng = crate::seed::rng_from(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn eigen_reconstructs_symmetric_matrix() {
        let x = random_matrix(12, 7, 3);
        let a = x.t_matmul(&x);
        let eig = symmetric_eigen(&a);
        for w in eig.values.windows(2) {
            assert!(w[0] >= w[1]);
        }
        let n = a.rows();
        let rebuilt = Matrix::from_fn(n, n, |i, j| {
            (0..n).map(|k| eig.vectors.get(i, k) * eig.values[k] * eig.vectors.get(j, k)).sum()
        });
        assert!(rebuilt.max_abs_diff(&a) < 1e-12);
        let vtv = eig.vectors.t_matmul(&eig.vectors);
        assert!(vtv.max_abs_diff(&Matrix::identity(n)) < 1e-12);
    }

    #[test]
    fn svd_reconstructs_rectangular_matrices() {
        for &(r, c) in &[(8, 5), (5, 8), (6, 6), (1, 4)] {
            let a = random_matrix(r, c, (r * 31 + c) as u64);
            let d = svd(&a);
            let k = r.min(c);
            assert_eq!(d.singular.len(), k);
            for w in d.singular.windows(2) {
                assert!(w[0] >= w[1]);
            }
            let rebuilt = Matrix::from_fn(r, c, |i, j| {
                (0..k).map(|l| d.u.get(i, l) * d.singular[l] * d.v.get(j, l)).sum()
            });
            assert!(rebuilt.max_abs_diff(&a) < 1e-12, "{r}x{c}");
        }
    }

    #[test]
    fn svd_of_rank_deficient_matrix_keeps_orthonormal_u() {
        // Two identical columns: one zero singular value.
        let a: Matrix<f64> = Matrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![0.0, 0.0]]);
        let d = svd(&a);
        assert!(d.singular[1].abs() < 1e-12);
        let utu = d.u.t_matmul(&d.u);
        assert!(utu.max_abs_diff(&Matrix::identity(2)) < 1e-12);
    }

    #[test]
    fn inverse_sqrt_whitens() {
        let x = random_matrix(30, 4, 11);
        let a = x.t_matmul(&x);
        let (w, _) = inverse_sqrt(&a).unwrap();
        let whitened = w.matmul(&a).matmul(&w);
        assert!(whitened.max_abs_diff(&Matrix::identity(4)) < 1e-10);
    }

    #[test]
    fn inverse_sqrt_rejects_singular() {
        let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!(inverse_sqrt(&a).is_none());
    }

    #[test]
    fn works_in_single_precision() {
        let a: Matrix<f32> = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let eig = symmetric_eigen(&a);
        assert!((eig.values[0] - 3.0).abs() < 1e-5);
        assert!((eig.values[1] - 1.0).abs() < 1e-5);
    }
}
