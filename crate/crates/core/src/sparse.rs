//! Compressed sparse row matrices.

use alloc::vec;
use alloc::vec::Vec;

use crate::dense::Mat;

#[derive(Clone, Debug)]
pub struct Csr {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// column indices are sorted within each row.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Csr {
        let mut counts = vec![0usize; rows + 1];
        for &(r, c, _) in triplets {
            assert!(r < rows && c < cols, "triplet out of bounds");
            counts[r + 1] += 1;
        }
        for i in 0..rows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut idx = vec![0usize; triplets.len()];
        let mut val = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            let k = next[r];
            idx[k] = c;
            val[k] = v;
            next[r] += 1;
        }
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        indptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for r in 0..rows {
            row.clear();
            row.extend((counts[r]..counts[r + 1]).map(|k| (idx[k], val[k])));
            row.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut s = 0.0;
                while k < row.len() && row[k].0 == c {
                    s += row[k].1;
                    k += 1;
                }
                indices.push(c);
                values.push(s);
            }
            indptr.push(indices.len());
        }
        Csr {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for r in 0..self.rows {
            let mut s = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += self.values[k] * x[self.indices[k]];
            }
            y[r] = s;
        }
    }

    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for r in 0..self.rows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            for k in self.indptr[r]..self.indptr[r + 1] {
                y[self.indices[k]] += self.values[k] * xr;
            }
        }
        y
    }

    /// `self · X` for a dense `X`.
    pub fn matmul_dense(&self, x: &Mat) -> Mat {
        let cols: Vec<Vec<f64>> = (0..x.cols()).map(|j| self.matvec(x.col(j))).collect();
        if cols.is_empty() {
            return Mat::zeros(self.rows, 0);
        }
        Mat::from_columns(&cols)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn transpose(&self) -> Csr {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                t.push((c, r, v));
            }
        }
        Csr::from_triplets(self.cols, self.rows, &t)
    }

    /// Sparse product `self · rhs`.
    pub fn matmul(&self, rhs: &Csr) -> Csr {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut acc = vec![0.0; rhs.cols];
        let mut mark = vec![usize::MAX; rhs.cols];
        let mut touched: Vec<usize> = Vec::new();
        let mut indptr = Vec::with_capacity(self.rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for r in 0..self.rows {
            touched.clear();
            for (k, a) in self.row(r) {
                for (c, b) in rhs.row(k) {
                    if mark[c] != r {
                        mark[c] = r;
                        acc[c] = 0.0;
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                indices.push(c);
                values.push(acc[c]);
            }
            indptr.push(indices.len());
        }
        Csr {
            rows: self.rows,
            cols: rhs.cols,
            indptr,
            indices,
            values,
        }
    }

    /// `a·self + b·other` for matrices of equal shape.
    pub fn add(&self, a: f64, other: &Csr, b: f64) -> Csr {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut t = Vec::with_capacity(self.nnz() + other.nnz());
        for r in 0..self.rows {
            t.extend(self.row(r).map(|(c, v)| (r, c, a * v)));
            t.extend(other.row(r).map(|(c, v)| (r, c, b * v)));
        }
        Csr::from_triplets(self.rows, self.cols, &t)
    }

    pub fn scaled(&self, s: f64) -> Csr {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn to_dense(&self) -> Mat {
        let mut m = Mat::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }

    /// `xᵀ · self · y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.rows);
        let mut s = 0.0;
        for r in 0..self.rows {
            if x[r] == 0.0 {
                continue;
            }
            let mut t = 0.0;
            for (c, v) in self.row(r) {
                t += v * y[c];
            }
            s += x[r] * t;
        }
        s
    }

    /// `Xᵀ · self · Y` for dense tall factors.
    pub fn project(&self, x: &Mat, y: &Mat) -> Mat {
        let ay = self.matmul_dense(y);
        x.tr_matmul(&ay)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates_and_multiply() {
        let a = Csr::from_triplets(2, 3, &[(0, 2, 1.0), (0, 0, 2.0), (0, 2, 0.5), (1, 1, -1.0)]);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.get(0, 2), 1.5);
        assert_eq!(a.matvec(&[1.0, 2.0, 3.0]), vec![6.5, -2.0]);
        assert_eq!(a.tr_matvec(&[1.0, 1.0]), vec![2.0, -1.0, 1.5]);
    }

    #[test]
    fn sparse_product_matches_dense() {
        let a = Csr::from_triplets(3, 3, &[(0, 0, 1.0), (0, 1, 2.0), (1, 2, 3.0), (2, 0, -1.0)]);
        let b = Csr::from_triplets(3, 2, &[(0, 1, 1.0), (1, 0, 4.0), (2, 1, 5.0)]);
        let p = a.matmul(&b).to_dense();
        let q = a.to_dense().matmul(&b.to_dense());
        assert!(p.sub(&q).max_abs() == 0.0);
        let t = a.transpose().to_dense();
        assert!(t.sub(&a.to_dense().transpose()).max_abs() == 0.0);
    }
}
