//! Small dense linear algebra kernels: symmetric pseudo-inverse (cyclic
//! Jacobi), LU solves with partial pivoting, and row-rank reduction.

use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| crate::scalar::dot(self.row(i), v)).collect()
    }

    /// Adds `scale * u u^T` to a square matrix.
    pub fn add_outer(&mut self, scale: T, u: &[T]) {
        debug_assert_eq!(self.rows, self.cols);
        for i in 0..self.rows {
            let si = scale * u[i];
            for j in 0..self.cols {
                self.data[i * self.cols + j] += si * u[j];
            }
        }
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and the matrix whose columns are eigenvectors.
pub fn sym_eigen<T: Real>(a: &Matrix<T>) -> (Vec<T>, Matrix<T>) {
    let n = a.rows();
    assert_eq!(n, a.cols());
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let scale = m.data.iter().fold(T::zero(), |s, &x| s.max(x.abs()));
    if scale == T::zero() || n < 2 {
        return ((0..n).map(|i| m[(i, i)]).collect(), v);
    }
    let eps = T::epsilon() * scale;
    for _sweep in 0..64 {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(m[(i, j)].abs());
            }
        }
        if off <= eps {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= eps * T::of(1e-3) {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (T::two() * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = c * akp - s * akq;
                    m[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[(p, k)];
                    let aqk = m[(q, k)];
                    m[(p, k)] = c * apk - s * aqk;
                    m[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| m[(i, i)]).collect(), v)
}

/// Moore-Penrose pseudo-inverse of a symmetric positive semidefinite matrix.
/// Eigenvalues below `rel_tol * max_eigenvalue` are treated as zero.
pub fn sym_pinv<T: Real>(a: &Matrix<T>, rel_tol: T) -> Matrix<T> {
    let n = a.rows();
    let (vals, vecs) = sym_eigen(a);
    let top = vals.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    let mut out = Matrix::zeros(n, n);
    if top == T::zero() {
        return out;
    }
    let cut = rel_tol * top;
    for (k, &lam) in vals.iter().enumerate() {
        if lam.abs() <= cut {
            continue;
        }
        let inv = T::one() / lam;
        for i in 0..n {
            let vik = vecs[(i, k)] * inv;
            for j in 0..n {
                out[(i, j)] += vik * vecs[(j, k)];
            }
        }
    }
    out
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` on an exactly vanishing or non-finite pivot.
pub fn lu_solve<T: Real>(mut a: Matrix<T>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = a.rows();
    assert_eq!(n, a.cols());
    assert_eq!(n, b.len());
    if n == 0 {
        return Some(b);
    }
    for k in 0..n {
        let mut piv = k;
        let mut best = a[(k, k)].abs();
        for i in (k + 1)..n {
            let v = a[(i, k)].abs();
            if v > best {
                best = v;
                piv = i;
            }
        }
        if !(best > T::min_positive_value()) || !best.is_finite() {
            return None;
        }
        if piv != k {
            for j in 0..n {
                a.data.swap(k * n + j, piv * n + j);
            }
            b.swap(k, piv);
        }
        let d = a[(k, k)];
        for i in (k + 1)..n {
            let f = a[(i, k)] / d;
            if f == T::zero() {
                continue;
            }
            for j in k..n {
                let akj = a[(k, j)];
                a[(i, j)] -= f * akj;
            }
            let bk = b[k];
            b[i] -= f * bk;
        }
    }
    let mut x = vec![T::zero(); n];
    for k in (0..n).rev() {
        let mut s = b[k];
        for j in (k + 1)..n {
            s -= a[(k, j)] * x[j];
        }
        x[k] = s / a[(k, k)];
    }
    Some(x)
}

/// Indices of a maximal linearly independent subset of the rows, found by
/// modified Gram-Schmidt with a relative tolerance.
pub fn independent_rows<T: Real>(a: &Matrix<T>, rel_tol: T) -> Vec<usize> {
    let mut basis: Vec<Vec<T>> = Vec::new();
    let mut keep = Vec::new();
    for i in 0..a.rows() {
        let mut r = a.row(i).to_vec();
        let norm0 = crate::scalar::dot(&r, &r).sqrt();
        if norm0 == T::zero() {
            continue;
        }
        for q in &basis {
            let proj = crate::scalar::dot(&r, q);
            for (x, &y) in r.iter_mut().zip(q) {
                *x -= proj * y;
            }
        }
        let norm = crate::scalar::dot(&r, &r).sqrt();
        if norm > rel_tol * norm0 {
            for x in r.iter_mut() {
                *x /= norm;
            }
            basis.push(r);
            keep.push(i);
        }
    }
    keep
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_rank_one() {
        let mut m = Matrix::<f64>::zeros(2, 2);
        m.add_outer(2.0, &[1.0, 1.0]);
        let p = sym_pinv(&m, 1e-12);
        // pinv(2 u u^T) with |u|^2 = 2 is u u^T / 8
        for i in 0..2 {
            for j in 0..2 {
                assert!((p[(i, j)] - 0.125).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn eigen_reconstructs() {
        let m = Matrix::from_rows(&[vec![4.0, 1.0, 0.5], vec![1.0, 3.0, 0.2], vec![0.5, 0.2, 1.0]]);
        let (vals, vecs) = sym_eigen(&m);
        for i in 0..3 {
            for j in 0..3 {
                let r: f64 = (0..3).map(|k| vecs[(i, k)] * vals[k] * vecs[(j, k)]).sum();
                assert!((r - m[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lu_solves_and_detects_singular() {
        let a = Matrix::<f64>::from_rows(&[vec![0.0, 2.0], vec![1.0, 1.0]]);
        let x = lu_solve(a, vec![2.0, 3.0]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
        let s = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0 + 0.0]]);
        assert!(lu_solve(s, vec![1.0, 2.0]).is_none());
    }

    #[test]
    fn drops_dependent_rows() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0, 1.0], vec![2.0, 0.0, 2.0], vec![0.0, 1.0, 0.0]]);
        assert_eq!(independent_rows(&a, 1e-10), vec![0, 2]);
    }
}
