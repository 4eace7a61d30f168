//! Small dense matrices (column-major) and the factorizations the steppers
//! need at rank scale: LU with partial pivoting, Cholesky, and a one-sided
//! Jacobi SVD.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::{Error, Result};

/// Column-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds a matrix from column vectors of equal length.
    pub fn from_columns(columns: &[Vec<f64>]) -> Self {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows * cols);
        for c in columns {
            assert_eq!(c.len(), rows, "ragged columns");
            data.extend_from_slice(c);
        }
        Mat { rows, cols, data }
    }

    /// Row-major literal, handy in tests.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        Mat::from_fn(r, c, |i, j| rows[i][j])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self[(i, j)]).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.cols).map(|j| self.col(j).to_vec()).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &Mat) -> Mat {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for j in 0..rhs.cols {
            for k in 0..self.cols {
                let b = rhs[(k, j)];
                if b == 0.0 {
                    continue;
                }
                let a = self.col(k);
                let o = out.col_mut(j);
                for i in 0..a.len() {
                    o[i] += a[i] * b;
                }
            }
        }
        out
    }

    /// `selfᵀ · rhs` without forming the transpose.
    pub fn tr_matmul(&self, rhs: &Mat) -> Mat {
        assert_eq!(self.rows, rhs.rows, "tr_matmul shape mismatch");
        Mat::from_fn(self.cols, rhs.cols, |i, j| dot(self.col(i), rhs.col(j)))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec shape mismatch");
        let mut y = vec![0.0; self.rows];
        for (k, &xk) in x.iter().enumerate() {
            if xk == 0.0 {
                continue;
            }
            for (yi, a) in y.iter_mut().zip(self.col(k)) {
                *yi += a * xk;
            }
        }
        y
    }

    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, x.len(), "tr_matvec shape mismatch");
        (0..self.cols).map(|j| dot(self.col(j), x)).collect()
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn add_scaled(&mut self, s: f64, other: &Mat) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        let mut out = self.clone();
        out.add_scaled(-1.0, other);
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| f64::max(m, v.abs()))
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        (0..self.cols)
            .map(|j| self.col(j).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Keeps the first `k` columns.
    pub fn truncate_cols(&self, k: usize) -> Mat {
        assert!(k <= self.cols);
        Mat {
            rows: self.rows,
            cols: k,
            data: self.data[..k * self.rows].to_vec(),
        }
    }

    /// Copies rows selected by `idx`, in that order.
    pub fn select_rows(&self, idx: &[usize]) -> Mat {
        Mat::from_fn(idx.len(), self.cols, |i, j| self[(idx[i], j)])
    }

    /// Horizontal concatenation.
    pub fn hcat(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows);
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Mat {
            rows: self.rows,
            cols: self.cols + other.cols,
            data,
        }
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[j * self.rows + i]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[j * self.rows + i]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// `y += s * x`
#[inline]
pub fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

/// LU factorization with partial pivoting.
#[derive(Clone, Debug)]
pub struct Lu {
    lu: Mat,
    perm: Vec<usize>,
}

impl Lu {
    pub fn new(a: &Mat) -> Result<Lu> {
        let n = a.rows();
        if n != a.cols() {
            return Err(Error::Contract("LU of a non-square matrix".into()));
        }
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].abs();
            for i in k + 1..n {
                let v = lu[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= 1e-14 * scale || !best.is_finite() {
                return Err(Error::solver("LU factorization (singular pivot)", k, best));
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let tmp = lu[(p, j)];
                    lu[(p, j)] = lu[(k, j)];
                    lu[(k, j)] = tmp;
                }
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                lu[(i, k)] /= pivot;
            }
            for j in k + 1..n {
                let ukj = lu[(k, j)];
                if ukj == 0.0 {
                    continue;
                }
                for i in k + 1..n {
                    let lik = lu[(i, k)];
                    lu[(i, j)] -= lik * ukj;
                }
            }
        }
        Ok(Lu { lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for j in 0..n {
            let xj = x[j];
            for i in j + 1..n {
                x[i] -= self.lu[(i, j)] * xj;
            }
        }
        for j in (0..n).rev() {
            x[j] /= self.lu[(j, j)];
            let xj = x[j];
            for i in 0..j {
                x[i] -= self.lu[(i, j)] * xj;
            }
        }
        x
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        // Aᵀ = Uᵀ Lᵀ P, so solve Uᵀ z = b, Lᵀ y = z, x = Pᵀ y.
        let mut z = b.to_vec();
        for j in 0..n {
            let mut s = z[j];
            for i in 0..j {
                s -= self.lu[(i, j)] * z[i];
            }
            z[j] = s / self.lu[(j, j)];
        }
        for j in (0..n).rev() {
            let mut s = z[j];
            for i in j + 1..n {
                s -= self.lu[(i, j)] * z[i];
            }
            z[j] = s;
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = z[k];
        }
        x
    }

    pub fn solve_mat(&self, b: &Mat) -> Mat {
        let cols: Vec<Vec<f64>> = (0..b.cols()).map(|j| self.solve(b.col(j))).collect();
        Mat::from_columns(&cols)
    }

    pub fn inverse(&self) -> Mat {
        self.solve_mat(&Mat::identity(self.dim()))
    }
}

/// 1-norm condition number, computed through an explicit inverse (rank-sized
/// matrices only).
pub fn condition_number_1(a: &Mat) -> Result<f64> {
    let lu = Lu::new(a)?;
    Ok(a.norm1() * lu.inverse().norm1())
}

/// Cholesky factor `L` with `A = L Lᵀ`.
pub fn cholesky(a: &Mat) -> Result<Mat> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::Contract("Cholesky of a non-square matrix".into()));
    }
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::solver("Cholesky factorization (not positive definite)", j, d));
        }
        let d = libm::sqrt(d);
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Thin SVD `A = U diag(s) Vᵀ` with singular values in nonincreasing order.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Mat,
    pub singular_values: Vec<f64>,
    pub v: Mat,
}

/// One-sided Jacobi SVD. Requires `rows >= cols`; intended for the
/// `2r × 2r` rounding cores, where it is accurate to working precision.
pub fn jacobi_svd(a: &Mat) -> Svd {
    let (m, n) = (a.rows(), a.cols());
    assert!(m >= n, "jacobi_svd needs rows >= cols");
    let mut w = a.clone();
    let mut v = Mat::identity(n);
    let eps = f64::EPSILON;
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(w.col(p), w.col(p));
                let beta = dot(w.col(q), w.col(q));
                let gamma = dot(w.col(p), w.col(q));
                if gamma == 0.0 || gamma.abs() <= eps * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                rotate_cols(&mut w, p, q, c, s);
                rotate_cols(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| norm2(w.col(j))).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let singular_values: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let tiny = singular_values.first().copied().unwrap_or(0.0) * 1e-15;
    for &j in &order {
        if norms[j] > tiny && norms[j] > 0.0 {
            u_cols.push(w.col(j).iter().map(|x| x / norms[j]).collect());
        } else {
            u_cols.push(vec![0.0; m]);
        }
    }
    // Null singular values leave zero columns; complete them to an
    // orthonormal set.
    complete_orthonormal(&mut u_cols, m);
    let v_cols: Vec<Vec<f64>> = order.iter().map(|&j| v.col(j).to_vec()).collect();
    Svd {
        u: Mat::from_columns(&u_cols),
        singular_values,
        v: Mat::from_columns(&v_cols),
    }
}

fn rotate_cols(a: &mut Mat, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..a.rows() {
        let ap = a[(i, p)];
        let aq = a[(i, q)];
        a[(i, p)] = c * ap - s * aq;
        a[(i, q)] = s * ap + c * aq;
    }
}

/// Replaces zero columns by Euclidean-orthonormal completions, trying
/// coordinate directions in index order.
fn complete_orthonormal(cols: &mut [Vec<f64>], m: usize) {
    let mut next = 0usize;
    for k in 0..cols.len() {
        if norm2(&cols[k]) > 0.5 {
            continue;
        }
        while next < m {
            let mut e = vec![0.0; m];
            e[next] = 1.0;
            next += 1;
            for _ in 0..2 {
                for j in 0..cols.len() {
                    if j == k || norm2(&cols[j]) < 0.5 {
                        continue;
                    }
                    let c = dot(&cols[j], &e);
                    axpy(-c, &cols[j].clone(), &mut e);
                }
            }
            let nrm = norm2(&e);
            if nrm > 1e-8 {
                e.iter_mut().for_each(|x| *x /= nrm);
                cols[k] = e;
                break;
            }
        }
    }
}

/// Output of [`gram_schmidt`]: `input = q · r` with `r` upper triangular.
#[derive(Clone, Debug)]
pub struct GramSchmidt {
    pub q: Mat,
    pub r: Mat,
    /// Columns whose projected norm fell below `1e-12 ×` their original norm;
    /// they were replaced by completion vectors.
    pub deficient: Vec<usize>,
}

/// Modified Gram–Schmidt with one re-orthogonalization pass, in the inner
/// product `inner`. Deficient columns are completed with the next unused
/// coordinate direction (orthogonalized against what came before).
pub fn gram_schmidt(a: &Mat, inner: impl Fn(&[f64], &[f64]) -> f64) -> GramSchmidt {
    let (m, k) = (a.rows(), a.cols());
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut r = Mat::zeros(k, k);
    let mut deficient = Vec::new();
    let mut next_coord = 0usize;
    for j in 0..k {
        let mut v = a.col(j).to_vec();
        let orig = libm::sqrt(inner(&v, &v).max(0.0));
        for _pass in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let c = inner(qi, &v);
                axpy(-c, qi, &mut v);
                r[(i, j)] += c;
            }
        }
        let nrm = libm::sqrt(inner(&v, &v).max(0.0));
        if orig > 0.0 && nrm >= 1e-12 * orig {
            v.iter_mut().for_each(|x| *x /= nrm);
            r[(j, j)] = nrm;
            q.push(v);
            continue;
        }
        deficient.push(j);
        let mut filled = false;
        while next_coord < m {
            let mut e = vec![0.0; m];
            e[next_coord] = 1.0;
            next_coord += 1;
            let e_norm = libm::sqrt(inner(&e, &e).max(0.0));
            for _pass in 0..2 {
                for qi in &q {
                    let c = inner(qi, &e);
                    axpy(-c, qi, &mut e);
                }
            }
            let en = libm::sqrt(inner(&e, &e).max(0.0));
            if en > 1e-8 * e_norm {
                e.iter_mut().for_each(|x| *x /= en);
                q.push(e);
                filled = true;
                break;
            }
        }
        assert!(filled, "gram_schmidt: more columns than the space dimension");
    }
    let q = if k == 0 { Mat::zeros(m, 0) } else { Mat::from_columns(&q) };
    GramSchmidt { q, r, deficient }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    #[test]
    fn lu_solves_and_transposed_solves() {
        let a = Mat::from_rows(&[&[0.0, 2.0, 1.0], &[1.0, 1.0, 0.0], &[3.0, 0.0, 1.0]]);
        let lu = Lu::new(&a).unwrap();
        let b = [1.0, 2.0, 3.0];
        let x = lu.solve(&b);
        let r = a.matvec(&x);
        for i in 0..3 {
            assert!((r[i] - b[i]).abs() < 1e-14);
        }
        let xt = lu.solve_transpose(&b);
        let rt = a.tr_matvec(&xt);
        for i in 0..3 {
            assert!((rt[i] - b[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn lu_rejects_singular() {
        let a = Mat::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(Lu::new(&a), Err(Error::Solver { .. })));
    }

    #[test]
    fn cholesky_roundtrip() {
        let a = Mat::from_rows(&[&[4.0, 1.0, 0.5], &[1.0, 3.0, 0.2], &[0.5, 0.2, 2.0]]);
        let l = cholesky(&a).unwrap();
        let back = l.matmul(&l.transpose());
        assert!(back.sub(&a).max_abs() < 1e-14);
    }

    #[test]
    fn jacobi_svd_reconstructs_and_orders() {
        let a = Mat::from_fn(7, 5, |i, j| pseudo_random(35, 7)[i * 5 + j]);
        let svd = jacobi_svd(&a);
        for w in svd.singular_values.windows(2) {
            assert!(w[0] >= w[1]);
        }
        let mut us = svd.u.clone();
        for j in 0..5 {
            let s = svd.singular_values[j];
            us.col_mut(j).iter_mut().for_each(|x| *x *= s);
        }
        let back = us.matmul(&svd.v.transpose());
        assert!(back.sub(&a).max_abs() < 1e-13);
        assert!(svd.u.tr_matmul(&svd.u).sub(&Mat::identity(5)).max_abs() < 1e-13);
        assert!(svd.v.tr_matmul(&svd.v).sub(&Mat::identity(5)).max_abs() < 1e-13);
    }

    #[test]
    fn jacobi_svd_rank_deficient_still_orthonormal() {
        let u = [1.0, 2.0, 3.0, 4.0];
        let v = [0.5, -1.0, 2.0, 0.0];
        let a = Mat::from_fn(4, 4, |i, j| u[i] * v[j]);
        let svd = jacobi_svd(&a);
        let expect = norm2(&u) * norm2(&v);
        assert!((svd.singular_values[0] - expect).abs() < 1e-12 * expect);
        assert!(svd.singular_values[1..].iter().all(|s| *s < 1e-12));
        assert!(svd.u.tr_matmul(&svd.u).sub(&Mat::identity(4)).max_abs() < 1e-12);
    }
}
