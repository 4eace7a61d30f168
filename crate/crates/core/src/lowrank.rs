//! Low-rank state `ψ(x, Ω) = Σ_ij X_i(x) S_ij W_j(Ω)` and the kernels shared
//! by both DLR steppers: weighted orthonormalization, SVD rounding and DEIM.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::angular::{orthonormalize, AngularBasis, QuadratureSet, FOUR_PI};
use crate::dense::{condition_number_1, gram_schmidt, jacobi_svd, GramSchmidt, Lu, Mat, Svd};
use crate::mesh::{FaceKind, Grid, Side};
use crate::sparse::Csr;
use crate::{Error, Result};

/// Factored solution. `X` is orthonormal in the spatial mass inner product,
/// `W` in the quadrature inner product.
#[derive(Clone, Debug)]
pub struct DlrState {
    pub x: Mat,
    pub s: Mat,
    pub w: AngularBasis,
}

impl DlrState {
    pub fn rank(&self) -> usize {
        self.s.rows()
    }

    /// Dense `N_x × N_Ω` reconstruction.
    pub fn reconstruct(&self) -> Mat {
        self.x.matmul(&self.s).matmul(&self.w.w.transpose())
    }

    /// `K = X S` (spatial coefficients of each angular basis function).
    pub fn k(&self) -> Mat {
        self.x.matmul(&self.s)
    }

    /// `L = W Sᵀ` (`N_Ω × r`, column `i` is `L_i` sampled at the nodes).
    pub fn l(&self) -> Mat {
        self.w.w.matmul(&self.s.transpose())
    }

    /// `φ = Σ_d w_d ψ_d = X S β`.
    pub fn scalar_flux(&self) -> Vec<f64> {
        self.x.matvec(&self.s.matvec(&self.w.beta))
    }

    /// The same field with `S = UΣVᵀ` rotated into the factors:
    /// `(XU, Σ, WV)`. Drops the constant pinning.
    pub fn principal(&self) -> DlrState {
        let svd = jacobi_svd(&self.s);
        let r = self.rank();
        let beta = svd.v.tr_matvec(&self.w.beta);
        DlrState {
            x: self.x.matmul(&svd.u),
            s: Mat::from_fn(r, r, |i, j| if i == j { svd.singular_values[i] } else { 0.0 }),
            w: AngularBasis {
                w: self.w.w.matmul(&svd.v),
                beta,
                constant_pinned: false,
            },
        }
    }

    /// Largest deviations of `XᵀMX` and `WᵀDW` from the identity.
    pub fn orthonormality_defect(&self, mass: &Csr, q: &QuadratureSet) -> (f64, f64) {
        let r = self.rank();
        let gx = mass.project(&self.x, &self.x).sub(&Mat::identity(r)).max_abs();
        (gx, self.w.orthonormality_defect(q))
    }

    /// Rank-`r` state holding the angle-independent field `f` (per spatial
    /// dof): `ψ = f`. Padding columns come from `padding` (angular) and
    /// coordinate completions (spatial) and carry zero weight in `S`.
    pub fn isotropic(f: &[f64], mass: &Csr, padding: &AngularBasis) -> Result<DlrState> {
        let r = padding.rank();
        if !padding.constant_pinned {
            return Err(Error::Contract("isotropic state needs a constant-pinned angular basis".into()));
        }
        let n = f.len();
        let mut cols = Mat::zeros(n, r);
        cols.col_mut(0).copy_from_slice(f);
        let gs = spatial_orthonormalize(&cols, mass);
        let mut s = Mat::zeros(r, r);
        s[(0, 0)] = gs.r[(0, 0)] * libm::sqrt(FOUR_PI);
        Ok(DlrState {
            x: gs.q,
            s,
            w: padding.clone(),
        })
    }
}

/// Gram–Schmidt in the `M` inner product.
pub fn spatial_orthonormalize(y: &Mat, mass: &Csr) -> GramSchmidt {
    gram_schmidt(y, |u, v| mass.bilinear(u, v))
}

/// Output of [`svd_truncate`].
#[derive(Clone, Debug)]
pub struct Truncation {
    pub state: DlrState,
    /// All singular values of the core, nonincreasing.
    pub singular_values: Vec<f64>,
    /// `‖σ_{r+1..}‖₂`.
    pub discarded: f64,
}

/// Rounds `ψ = Σ_k Y_k Z_kᵀ` to rank `r`: orthonormalize `Y = U R_Y`,
/// `Z = V R_Z`, take the SVD `R_Y R_Zᵀ = P Σ Qᵀ` and keep the leading `r`
/// triplets, `X = U P_r`, `S = Σ_r`, `W = V Q_r`.
pub fn svd_truncate(y: &Mat, z: &Mat, r: usize, mass: &Csr, q: &QuadratureSet) -> Result<Truncation> {
    let k = y.cols();
    if z.cols() != k {
        return Err(Error::Contract(format!(
            "svd_truncate: factor column counts differ ({k} vs {})",
            z.cols()
        )));
    }
    if r == 0 || r > k.min(q.len()) {
        return Err(Error::Contract(format!(
            "svd_truncate: target rank {r} outside 1..={}",
            k.min(q.len())
        )));
    }
    let gy = spatial_orthonormalize(y, mass);
    let (v, rz) = if k > q.len() {
        nodal_factor(z, q)
    } else {
        let gz = orthonormalize(z, q)?;
        (gz.basis.w, gz.r)
    };
    let core = gy.r.matmul(&rz.transpose());
    let svd = svd_any(&core);
    let x = gy.q.matmul(&svd.u.truncate_cols(r));
    let w = v.matmul(&svd.v.truncate_cols(r));
    let mut s = Mat::zeros(r, r);
    for i in 0..r {
        s[(i, i)] = svd.singular_values[i];
    }
    let discarded = libm::sqrt(svd.singular_values[r..].iter().map(|v| v * v).sum());
    Ok(Truncation {
        state: DlrState {
            x,
            s,
            w: AngularBasis::new(w, q, false),
        },
        singular_values: svd.singular_values,
        discarded,
    })
}

/// `Z = V R` with `V` the nodal orthonormal basis `e_d / √w_d`; used when
/// `Z` has more columns than there are nodes.
fn nodal_factor(z: &Mat, q: &QuadratureSet) -> (Mat, Mat) {
    let n = q.len();
    let v = Mat::from_fn(n, n, |d, j| if d == j { 1.0 / libm::sqrt(q.weights[d]) } else { 0.0 });
    let r = Mat::from_fn(n, z.cols(), |d, j| libm::sqrt(q.weights[d]) * z[(d, j)]);
    (v, r)
}

/// SVD of any shape, singular values nonincreasing; `u` and `v` keep
/// `min(rows, cols)` columns.
fn svd_any(a: &Mat) -> Svd {
    if a.rows() >= a.cols() {
        let s = jacobi_svd(a);
        let k = a.cols();
        Svd {
            u: s.u.truncate_cols(k),
            singular_values: s.singular_values,
            v: s.v,
        }
    } else {
        let s = jacobi_svd(&a.transpose());
        Svd {
            u: s.v,
            singular_values: s.singular_values,
            v: s.u.truncate_cols(a.rows()),
        }
    }
}

/// Rounds `ψ = Y Zᵀ` to rank `r` with the constant angular function kept as
/// basis column 0. The constant component `K_c = Y Zᵀ D c` (or `constant`
/// when given) is carried exactly, so the scalar flux `√(4π) K_c` is never
/// truncated; the remainder, orthogonal to `c` in angle, is rounded to rank
/// `r − 1` by SVD. `discarded` refers to that remainder.
pub fn pinned_truncate(
    y: &Mat,
    z: &Mat,
    r: usize,
    mass: &Csr,
    q: &QuadratureSet,
    constant: Option<&[f64]>,
) -> Result<Truncation> {
    let (n, k) = (y.rows(), y.cols());
    let nd = q.len();
    if z.cols() != k || z.rows() != nd {
        return Err(Error::Contract("pinned_truncate: factor shapes differ".into()));
    }
    if r == 0 || r > nd || r > n {
        return Err(Error::Contract(format!("pinned_truncate: rank {r} outside 1..={}", nd.min(n))));
    }
    let c_val = 1.0 / libm::sqrt(FOUR_PI);
    let c = vec![c_val; nd];
    let zc: Vec<f64> = (0..k).map(|j| q.dot(z.col(j), &c)).collect();
    let k_c = match constant {
        Some(f) if f.len() == n => f.to_vec(),
        Some(_) => return Err(Error::Contract("pinned_truncate: constant channel length".into())),
        None => y.matvec(&zc),
    };
    // Z' = Z − c (cᵀ D Z) lies in c⊥
    let zp = Mat::from_fn(nd, k, |d, j| z[(d, j)] - c_val * zc[j]);

    let mut singular_values = Vec::new();
    let mut discarded = 0.0;
    let (mut cols, mut diag, mut w_cols) = (vec![k_c], vec![1.0], vec![c.clone()]);
    if k > 0 {
        // orthonormal basis V of (part of) c⊥ with Z' = V R'
        let (v, rp) = if k + 1 > nd {
            let mut full = Mat::zeros(nd, nd);
            full.col_mut(0).copy_from_slice(&c);
            for j in 1..nd {
                full[(j - 1, j)] = 1.0;
            }
            let b = orthonormalize(&full, q)?.basis.w;
            let v = Mat::from_fn(nd, nd - 1, |d, j| b[(d, j + 1)]);
            let rp = q.gram(&v, &zp);
            (v, rp)
        } else {
            let mut aug = Mat::zeros(nd, k + 1);
            aug.col_mut(0).copy_from_slice(&c);
            for j in 0..k {
                aug.col_mut(j + 1).copy_from_slice(zp.col(j));
            }
            let g = orthonormalize(&aug, q)?;
            let v = Mat::from_fn(nd, k, |d, j| g.basis.w[(d, j + 1)]);
            let rp = Mat::from_fn(k, k, |i, j| g.r[(i + 1, j + 1)]);
            (v, rp)
        };
        let gy = spatial_orthonormalize(y, mass);
        let core = gy.r.matmul(&rp.transpose());
        let svd = svd_any(&core);
        let keep = (r - 1).min(svd.singular_values.len());
        let xr = gy.q.matmul(&svd.u.truncate_cols(keep));
        let wr = v.matmul(&svd.v.truncate_cols(keep));
        for i in 0..keep {
            cols.push(xr.col(i).to_vec());
            diag.push(svd.singular_values[i]);
            w_cols.push(wr.col(i).to_vec());
        }
        discarded = libm::sqrt(svd.singular_values[keep..].iter().map(|s| s * s).sum());
        singular_values = svd.singular_values;
    }
    // pad with completions if the remainder had too few directions
    let gx = spatial_orthonormalize(&Mat::from_columns(&cols), mass);
    let mut x = gx.q;
    let mut s = Mat::from_fn(cols.len(), cols.len(), |i, j| gx.r[(i, j)] * diag[j]);
    let mut w = Mat::from_columns(&w_cols);
    if cols.len() < r {
        let extra = r - cols.len();
        let mut ycols = x.columns();
        ycols.extend((0..extra).map(|_| vec![0.0; n]));
        x = spatial_orthonormalize(&Mat::from_columns(&ycols), mass).q;
        let wg = orthonormalize(&w.hcat(&Mat::zeros(nd, extra)), q)?;
        w = wg.basis.w;
        let old = s;
        s = Mat::from_fn(r, r, |i, j| if i < old.rows() && j < old.cols() { old[(i, j)] } else { 0.0 });
    }
    Ok(Truncation {
        state: DlrState {
            x,
            s,
            w: AngularBasis::new(w, q, true),
        },
        singular_values,
        discarded,
    })
}

/// Two-factor form `ψ = Y Zᵀ` of the rank-increased update
///
/// ```text
/// ψ = ψ0 + Σ_k (K_k − K0_k) V_k + Σ_i X0_i (L_i − L0_i) − Σ_ij X0_i (S_ij − S0_ij) W0_j
/// ```
///
/// where the K step was solved in an angular basis `V ⊇ span(W0)` (columns
/// of `v`) and `K0 = ψ0 D V`. With `G = W0ᵀ D V`,
/// `Y = [(K − K0) − X0 (S − S0) G, X0]` and `Z = [V, L]`. For `V = W0` this
/// is the familiar `Y_j = (K_j − K0_j) − Σ_i X0_i (S_ij − S0_ij)`.
pub fn combine_rank_2r(old: &DlrState, v: &Mat, k: &Mat, l: &Mat, s: &Mat, q: &QuadratureSet) -> Result<(Mat, Mat)> {
    let r = old.rank();
    let (n, nd) = (old.x.rows(), old.w.w.rows());
    if k.rows() != n || k.cols() != v.cols() || v.rows() != nd || l.rows() != nd || l.cols() != r
        || s.rows() != r || s.cols() != r
    {
        return Err(Error::Contract("combine_rank_2r: factor shapes differ".into()));
    }
    let g = q.gram(&old.w.w, v);
    let k0 = old.k().matmul(&g);
    let ds = s.sub(&old.s);
    let mut ypart = k.sub(&k0);
    ypart.add_scaled(-1.0, &old.x.matmul(&ds).matmul(&g));
    Ok((ypart.hcat(&old.x), v.hcat(l)))
}

/// Dense four-term sum `ψ0 + ΔK Vᵀ + X0 ΔLᵀ − X0 ΔS W0ᵀ`, the reference for
/// [`combine_rank_2r`]. With derivatives in place of differences and `ψ0 = 0`
/// it is the time derivative recombination `K̇Wᵀ + X L̇ᵀ − X Ṡ Wᵀ`.
pub fn recombine(psi0: &Mat, x: &Mat, w: &Mat, v: &Mat, dk: &Mat, dl: &Mat, ds: &Mat) -> Mat {
    let mut out = psi0.clone();
    out.add_scaled(1.0, &dk.matmul(&v.transpose()));
    out.add_scaled(1.0, &x.matmul(&dl.transpose()));
    out.add_scaled(-1.0, &x.matmul(ds).matmul(&w.transpose()));
    out
}

/// DEIM interpolation points and the collocation matrix `Ŵ_ij = W_j(Ω_{d_i})`.
#[derive(Clone, Debug)]
pub struct DeimSelection {
    pub indices: Vec<usize>,
    pub w_hat: Mat,
    lu: Lu,
    /// 1-norm condition number of `Ŵ`.
    pub condition: f64,
}

impl DeimSelection {
    /// `Ŵ⁻¹ g` for values `g` at the selected nodes.
    pub fn interpolate(&self, g: &[f64]) -> Vec<f64> {
        self.lu.solve(g)
    }

    /// Coefficients `c = Ŵ⁻ᵀβ`, so that `φ = Σ_j c_j Ψ_j`.
    pub fn closure(&self, beta: &[f64]) -> Vec<f64> {
        self.lu.solve_transpose(beta)
    }

    pub fn rank(&self) -> usize {
        self.indices.len()
    }
}

/// Greedy DEIM over the quadrature nodes. Point `j` maximizes the residual of
/// `W_j` after interpolating it through the first `j − 1` points with
/// `W_1..W_{j−1}`. Ties go to the lowest node index.
pub fn deim_select(w: &Mat) -> Result<DeimSelection> {
    let (n, r) = (w.rows(), w.cols());
    if r == 0 || r > n {
        return Err(Error::Contract(format!("deim_select: rank {r} with {n} nodes")));
    }
    let mut idx: Vec<usize> = Vec::with_capacity(r);
    for j in 0..r {
        let col = w.col(j);
        let resid: Vec<f64> = if j == 0 {
            col.to_vec()
        } else {
            let sub = Mat::from_fn(j, j, |a, b| w[(idx[a], b)]);
            let lu = Lu::new(&sub).map_err(|_| {
                Error::Selection(format!("interpolation system singular before column {j}"))
            })?;
            let rhs: Vec<f64> = idx.iter().map(|&d| col[d]).collect();
            let c = lu.solve(&rhs);
            (0..n)
                .map(|d| col[d] - (0..j).map(|b| w[(d, b)] * c[b]).sum::<f64>())
                .collect()
        };
        let scale = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut best = 0;
        for d in 1..n {
            if resid[d].abs() > resid[best].abs() {
                best = d;
            }
        }
        if !(resid[best].abs() > 1e-12 * scale.max(f64::MIN_POSITIVE)) || idx.contains(&best) {
            return Err(Error::Selection(format!(
                "residual of angular column {j} vanishes on the nodes (rank-deficient basis)"
            )));
        }
        idx.push(best);
    }
    let w_hat = w.select_rows(&idx);
    let lu = Lu::new(&w_hat).map_err(|_| Error::Selection("collocation matrix is singular".into()))?;
    let condition = condition_number_1(&w_hat).unwrap_or(f64::INFINITY);
    log::debug!("DEIM nodes {:?}, cond1(W_hat) = {condition:.3e}", idx);
    Ok(DeimSelection {
        indices: idx,
        w_hat,
        lu,
        condition,
    })
}

/// `Ψ_{:,j} = X S W[d_j, :]ᵀ`: the state at the selected directions.
pub fn evaluate_rows(state: &DlrState, sel: &DeimSelection) -> Mat {
    let rows = state.w.w.select_rows(&sel.indices);
    state.x.matmul(&state.s).matmul(&rows.transpose())
}

/// `φ = Ψ Ŵ⁻ᵀ β`.
pub fn reconstruct_scalar_flux(psi: &Mat, sel: &DeimSelection, beta: &[f64]) -> Result<Vec<f64>> {
    if psi.cols() != sel.rank() || beta.len() != sel.rank() {
        return Err(Error::Contract("collocation flux and selection differ in rank".into()));
    }
    Ok(psi.matvec(&sel.closure(beta)))
}

/// `Σ_ij A_ij` weighted Frobenius norm `‖A‖_{M,D}² = tr(AᵀMA D)`.
pub fn weighted_frobenius(a: &Mat, mass: &Csr, q: &QuadratureSet) -> f64 {
    let ma = mass.matmul_dense(a);
    let mut s = 0.0;
    for d in 0..a.cols() {
        s += q.weights[d] * crate::dense::dot(a.col(d), ma.col(d));
    }
    libm::sqrt(s.max(0.0))
}

/// `∫_side X_i` for every boundary side (in [`Side::ALL`] order) and column
/// of `x`, for the grid's own dof flavor.
pub fn boundary_moments(grid: &Grid, x: &Mat) -> [Vec<f64>; 4] {
    let mut out: [Vec<f64>; 4] = core::array::from_fn(|_| vec![0.0; x.cols()]);
    for face in &grid.faces {
        if let FaceKind::Boundary { cell, side } = face.kind {
            let s = Side::ALL.iter().position(|&v| v == side).unwrap_or(0);
            let ln = side.local_nodes();
            let (a, b) = (grid.local_dof(cell, ln[0]), grid.local_dof(cell, ln[1]));
            for (i, o) in out[s].iter_mut().enumerate() {
                let col = x.col(i);
                *o += 0.5 * face.length * (col[a] + col[b]);
            }
        }
    }
    out
}

/// Outflow `Σ_d w_d Σ_sides max(Ω_d·n, 0) ∫_side ψ_d` of `ψ_d = Σ_i X_i L_di`,
/// given the side moments of `X`.
pub fn leakage(moments: &[Vec<f64>; 4], l: &Mat, q: &QuadratureSet) -> f64 {
    let mut total = 0.0;
    for d in 0..q.len() {
        let om = q.nodes[d];
        let row = l.row(d);
        for (s, side) in Side::ALL.iter().enumerate() {
            let n = side.outward_normal();
            let on = om[0] * n[0] + om[1] * n[1];
            if on > 0.0 {
                total += q.weights[d] * on * crate::dense::dot(&moments[s], &row);
            }
        }
    }
    total
}

/// Identity-mass helper for tests and small problems.
pub fn identity_mass(n: usize) -> Csr {
    let t: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, 1.0)).collect();
    Csr::from_triplets(n, n, &t)
}
