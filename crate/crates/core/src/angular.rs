//! Product quadrature on the unit sphere, weighted inner products and angular
//! bases.
//!
//! Node `d = k·n_azimuthal + m` pairs the `k`-th Gauss–Legendre cosine with
//! the `m`-th azimuth `(m + ½)·2π/n_azimuthal`. Nodes are built so that the
//! antipode of every node is bitwise its negation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::dense::{gram_schmidt, Mat};
use crate::{Error, Result};

pub const FOUR_PI: f64 = 4.0 * PI;

#[derive(Clone, Debug)]
pub struct QuadratureSet {
    pub nodes: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub antipode: Vec<usize>,
}

impl QuadratureSet {
    pub fn new(n_polar: usize, n_azimuthal: usize) -> Result<QuadratureSet> {
        if n_polar == 0 {
            return Err(Error::Config("quadrature needs n_polar >= 1".into()));
        }
        if n_azimuthal == 0 || n_azimuthal % 2 == 1 {
            return Err(Error::Config(format!(
                "n_azimuthal must be even and positive (got {n_azimuthal})"
            )));
        }
        let (mu, wmu) = gauss_legendre(n_polar);
        let half = n_azimuthal / 2;
        let mut az = Vec::with_capacity(n_azimuthal);
        for m in 0..half {
            let phi = (m as f64 + 0.5) * 2.0 * PI / n_azimuthal as f64;
            az.push([libm::cos(phi), libm::sin(phi)]);
        }
        for m in 0..half {
            az.push([-az[m][0], -az[m][1]]);
        }
        let wphi = 2.0 * PI / n_azimuthal as f64;
        let n = n_polar * n_azimuthal;
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut antipode = Vec::with_capacity(n);
        for k in 0..n_polar {
            let s = libm::sqrt((1.0 - mu[k] * mu[k]).max(0.0));
            for m in 0..n_azimuthal {
                nodes.push([s * az[m][0], s * az[m][1], mu[k]]);
                weights.push(wmu[k] * wphi);
                antipode.push((n_polar - 1 - k) * n_azimuthal + (m + half) % n_azimuthal);
            }
        }
        Ok(QuadratureSet {
            nodes,
            weights,
            antipode,
        })
    }

    /// Reorders nodes: new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> QuadratureSet {
        let mut inv = vec![0; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        QuadratureSet {
            nodes: perm.iter().map(|&p| self.nodes[p]).collect(),
            weights: perm.iter().map(|&p| self.weights[p]).collect(),
            antipode: perm.iter().map(|&p| inv[self.antipode[p]]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ_d w_d u_d v_d`.
    pub fn inner_product(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        if u.len() != self.len() || v.len() != self.len() {
            return Err(Error::Contract(format!(
                "angular inner product on lengths {} and {} with {} nodes",
                u.len(),
                v.len(),
                self.len()
            )));
        }
        Ok(self.dot(u, v))
    }

    #[inline]
    pub(crate) fn dot(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut s = 0.0;
        for d in 0..self.weights.len() {
            s += self.weights[d] * u[d] * v[d];
        }
        s
    }

    /// `Σ_d w_d f(Ω_d)`.
    pub fn integrate(&self, f: impl Fn([f64; 3]) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(o, w)| w * f(*o)).sum()
    }

    /// Weighted Gram matrix `Aᵀ D B`.
    pub fn gram(&self, a: &Mat, b: &Mat) -> Mat {
        Mat::from_fn(a.cols(), b.cols(), |i, j| self.dot(a.col(i), b.col(j)))
    }

    /// Samples `f` at every node.
    pub fn sample(&self, f: impl Fn([f64; 3]) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|o| f(*o)).collect()
    }
}

/// Gauss–Legendre nodes (ascending) and weights on [-1, 1], mirrored so that
/// `x[n-1-k] == -x[k]` exactly.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for k in 0..n.div_ceil(2) {
        // Root k counted from the top, refined by Newton.
        let mut t = libm::cos(PI * (k as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, t);
            dp = d;
            let step = p / d;
            t -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, t);
        dp = if d != 0.0 { d } else { dp };
        let wk = 2.0 / ((1.0 - t * t) * dp * dp);
        x[n - 1 - k] = t;
        x[k] = -t;
        w[n - 1 - k] = wk;
        w[k] = wk;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre(n: usize, t: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, t);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, d)
}

/// Weighted-orthonormal angular basis sampled at the quadrature nodes.
#[derive(Clone, Debug)]
pub struct AngularBasis {
    /// `N_Ω × r`.
    pub w: Mat,
    /// `β_j = Σ_d w_d W_dj`.
    pub beta: Vec<f64>,
    /// Column 0 is the constant `1/√(4π)`.
    pub constant_pinned: bool,
}

impl AngularBasis {
    pub fn new(w: Mat, q: &QuadratureSet, constant_pinned: bool) -> AngularBasis {
        let ones = vec![1.0; q.len()];
        let beta = (0..w.cols()).map(|j| q.dot(w.col(j), &ones)).collect();
        AngularBasis {
            w,
            beta,
            constant_pinned,
        }
    }

    pub fn rank(&self) -> usize {
        self.w.cols()
    }

    /// `‖WᵀDW − I‖_max`.
    pub fn orthonormality_defect(&self, q: &QuadratureSet) -> f64 {
        q.gram(&self.w, &self.w).sub(&Mat::identity(self.rank())).max_abs()
    }
}

/// Result of [`orthonormalize`].
#[derive(Clone, Debug)]
pub struct Orthonormalized {
    pub basis: AngularBasis,
    /// Upper triangular with `input = basis.w · r`.
    pub r: Mat,
    pub deficient: Vec<usize>,
}

/// Re-orthogonalized modified Gram–Schmidt in the quadrature inner product.
pub fn orthonormalize(columns: &Mat, q: &QuadratureSet) -> Result<Orthonormalized> {
    if columns.rows() != q.len() {
        return Err(Error::Contract(format!(
            "angular columns have {} rows, quadrature has {} nodes",
            columns.rows(),
            q.len()
        )));
    }
    if columns.cols() == 0 || columns.cols() > q.len() {
        return Err(Error::Contract(format!(
            "cannot orthonormalize {} columns on {} nodes",
            columns.cols(),
            q.len()
        )));
    }
    let gs = gram_schmidt(columns, |u, v| q.dot(u, v));
    let inv = 1.0 / libm::sqrt(FOUR_PI);
    let pinned = gs.q.col(0).iter().all(|v| (v - inv).abs() < 1e-12);
    Ok(Orthonormalized {
        basis: AngularBasis::new(gs.q, q, pinned),
        r: gs.r,
        deficient: gs.deficient,
    })
}

/// Even and odd parts `(W(Ω) ± W(−Ω))/2` of every column.
pub fn parity_split(w: &Mat, q: &QuadratureSet) -> (Mat, Mat) {
    let even = Mat::from_fn(w.rows(), w.cols(), |d, j| 0.5 * (w[(d, j)] + w[(q.antipode[d], j)]));
    let odd = Mat::from_fn(w.rows(), w.cols(), |d, j| 0.5 * (w[(d, j)] - w[(q.antipode[d], j)]));
    (even, odd)
}

/// Samples of monomials `Ωx^a Ωy^b Ωz^c`, by total degree then lexicographic
/// exponent order (1, Ωx, Ωy, Ωz, Ωx², Ωx Ωy, …), `count` of them.
pub fn monomial_columns(q: &QuadratureSet, count: usize) -> Mat {
    let mut cols = Vec::with_capacity(count);
    let mut deg = 0u32;
    'outer: loop {
        for a in (0..=deg).rev() {
            for b in (0..=deg - a).rev() {
                let c = deg - a - b;
                if cols.len() == count {
                    break 'outer;
                }
                cols.push(q.sample(|o| powu(o[0], a) * powu(o[1], b) * powu(o[2], c)));
            }
        }
        deg += 1;
    }
    if cols.is_empty() {
        return Mat::zeros(q.len(), 0);
    }
    Mat::from_columns(&cols)
}

fn powu(x: f64, n: u32) -> f64 {
    (0..n).fold(1.0, |acc, _| acc * x)
}

/// An `r`-column orthonormal basis whose leading column is the constant,
/// filled with orthonormalized low-degree monomials. Monomials that are
/// dependent on the node set are skipped.
pub fn smooth_basis(q: &QuadratureSet, r: usize) -> Result<AngularBasis> {
    if r == 0 || r > q.len() {
        return Err(Error::Config(format!(
            "rank {r} outside 1..={} for this quadrature",
            q.len()
        )));
    }
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(r);
    let mut pool = 4 * r + 10;
    loop {
        let mono = monomial_columns(q, pool);
        kept.clear();
        for j in 0..mono.cols() {
            let mut v = mono.col(j).to_vec();
            let orig = libm::sqrt(q.dot(&v, &v));
            for _ in 0..2 {
                for k in &kept {
                    let c = q.dot(k, &v);
                    crate::dense::axpy(-c, k, &mut v);
                }
            }
            let n = libm::sqrt(q.dot(&v, &v));
            if n > 1e-8 * orig {
                v.iter_mut().for_each(|x| *x /= n);
                kept.push(v);
                if kept.len() == r {
                    break;
                }
            }
        }
        if kept.len() == r || pool > 40 * q.len() + 100 {
            break;
        }
        pool *= 2;
    }
    let mut m = Mat::from_columns(&kept);
    if kept.len() < r {
        // zero columns are completed by orthonormalize
        m = m.hcat(&Mat::zeros(q.len(), r - kept.len()));
    }
    let mut o = orthonormalize(&m, q)?;
    let inv = 1.0 / libm::sqrt(FOUR_PI);
    o.basis.w.col_mut(0).iter_mut().for_each(|v| *v = inv);
    o.basis = AngularBasis::new(o.basis.w, q, true);
    Ok(o.basis)
}
