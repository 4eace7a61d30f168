//! Dense brute-force references for trt-core.
//!
//! Everything here assembles full matrices and factors them directly with
//! nalgebra. The DG transport operator is rebuilt from scratch by Gauss
//! quadrature in the plain upwind form
//!
//! ```text
//! vᵀA(Ω)u = −∫ u Ω·∇v + ∫ σ_t u v + Σ_cells ∮ (Ω·n) u^up v
//! ```
//!
//! so it shares no code with the sparse assembly it checks. Sizes are capped;
//! the cost is cubic on purpose.

use nalgebra::{DMatrix, DVector};
use trt_core::angular::{QuadratureSet, FOUR_PI};
use trt_core::dense::Mat;
use trt_core::dlr_sn::ProjectedOperators;
use trt_core::mesh::{DofFlavor, Grid, Side};
use trt_core::physics::{Constants, LinearizedStep};
use trt_core::{Error, Result};

/// Largest coupled system the transport oracles will assemble.
pub const MAX_UNKNOWNS: usize = 20_000;
/// Largest matrix [`dense_svd`] accepts per side.
pub const MAX_SVD_DIM: usize = 2_000;

const GAUSS: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

/// A direct solve together with its relative residual `‖Ax − b‖ / ‖b‖`.
#[derive(Clone, Debug)]
pub struct DenseSolution<T> {
    pub value: T,
    pub residual: f64,
}

pub fn to_dmatrix(a: &Mat) -> DMatrix<f64> {
    DMatrix::from_column_slice(a.rows(), a.cols(), a.as_slice())
}

pub fn from_dmatrix(a: &DMatrix<f64>) -> Mat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn lu_solve(a: DMatrix<f64>, b: DVector<f64>, what: &str) -> Result<DenseSolution<DVector<f64>>> {
    let check = a.clone();
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Contract(format!("{what}: singular dense system")))?;
    let bn = b.norm();
    let residual = (&check * &x - &b).norm() / if bn > 0.0 { bn } else { 1.0 };
    Ok(DenseSolution { value: x, residual })
}

/// Q1 shape function `a` of the cell with lower-left corner `(x0, y0)`.
fn shape(g: &Grid, x0: f64, y0: f64, a: usize, x: f64, y: f64) -> (f64, [f64; 2]) {
    let (xi, eta) = ((x - x0) / g.dx, (y - y0) / g.dy);
    let (lx, dlx) = if a & 1 == 0 { (1.0 - xi, -1.0 / g.dx) } else { (xi, 1.0 / g.dx) };
    let (ly, dly) = if a >> 1 == 0 { (1.0 - eta, -1.0 / g.dy) } else { (eta, 1.0 / g.dy) };
    (lx * ly, [dlx * ly, lx * dly])
}

fn corner(g: &Grid, c: usize) -> (f64, f64) {
    let (i, j) = g.cell_ij(c);
    (g.x0 + i as f64 * g.dx, g.y0 + j as f64 * g.dy)
}

/// Gauss points on `side` of the cell at `(x0, y0)` with their weights.
fn face_points(g: &Grid, x0: f64, y0: f64, side: Side) -> [(f64, f64, f64); 2] {
    let pt = |t: f64| match side {
        Side::Left => (x0, y0 + t * g.dy, 0.5 * g.dy),
        Side::Right => (x0 + g.dx, y0 + t * g.dy, 0.5 * g.dy),
        Side::Bottom => (x0 + t * g.dx, y0, 0.5 * g.dx),
        Side::Top => (x0 + t * g.dx, y0 + g.dy, 0.5 * g.dx),
    };
    [pt(GAUSS[0]), pt(GAUSS[1])]
}

/// Dense DG matrices rebuilt by quadrature.
#[derive(Clone, Debug)]
pub struct DenseDg {
    pub grid: Grid,
    pub mass: DMatrix<f64>,
    sigma_t: Vec<f64>,
    sigma_s: Vec<f64>,
}

impl DenseDg {
    pub fn new(grid: &Grid, sigma_t: &[f64], sigma_s: &[f64]) -> Result<DenseDg> {
        if grid.flavor != DofFlavor::Discontinuous {
            return Err(Error::Contract("oracle: discontinuous grid expected".into()));
        }
        if sigma_t.len() != grid.n_cells() || sigma_s.len() != grid.n_cells() {
            return Err(Error::Contract("oracle: one opacity per cell expected".into()));
        }
        let mut dg = DenseDg {
            grid: grid.clone(),
            mass: DMatrix::zeros(grid.n_dofs(), grid.n_dofs()),
            sigma_t: sigma_t.to_vec(),
            sigma_s: sigma_s.to_vec(),
        };
        dg.mass = dg.weighted_mass(&vec![1.0; grid.n_cells()]);
        Ok(dg)
    }

    pub fn n_dofs(&self) -> usize {
        self.grid.n_dofs()
    }

    /// `∫ f u v` for a cellwise constant `f`.
    pub fn weighted_mass(&self, f: &[f64]) -> DMatrix<f64> {
        let g = &self.grid;
        let n = g.n_dofs();
        let mut m = DMatrix::zeros(n, n);
        let wq = 0.25 * g.dx * g.dy;
        for c in 0..g.n_cells() {
            let (x0, y0) = corner(g, c);
            for &gx in &GAUSS {
                for &gy in &GAUSS {
                    let (x, y) = (x0 + gx * g.dx, y0 + gy * g.dy);
                    for a in 0..4 {
                        let (va, _) = shape(g, x0, y0, a, x, y);
                        for b in 0..4 {
                            let (vb, _) = shape(g, x0, y0, b, x, y);
                            m[(4 * c + a, 4 * c + b)] += wq * f[c] * va * vb;
                        }
                    }
                }
            }
        }
        m
    }

    pub fn scattering_mass(&self) -> DMatrix<f64> {
        self.weighted_mass(&self.sigma_s)
    }

    /// Upwind transport matrix with vacuum inflow.
    pub fn transport(&self, omega: [f64; 3]) -> DMatrix<f64> {
        let g = &self.grid;
        let n = g.n_dofs();
        let mut a = self.weighted_mass(&self.sigma_t);
        let wq = 0.25 * g.dx * g.dy;
        for c in 0..g.n_cells() {
            let (x0, y0) = corner(g, c);
            for &gx in &GAUSS {
                for &gy in &GAUSS {
                    let (x, y) = (x0 + gx * g.dx, y0 + gy * g.dy);
                    for t in 0..4 {
                        let (_, grad) = shape(g, x0, y0, t, x, y);
                        let og = omega[0] * grad[0] + omega[1] * grad[1];
                        for s in 0..4 {
                            let (vs, _) = shape(g, x0, y0, s, x, y);
                            a[(4 * c + t, 4 * c + s)] -= wq * og * vs;
                        }
                    }
                }
            }
            for side in Side::ALL {
                let nrm = side.outward_normal();
                let on = omega[0] * nrm[0] + omega[1] * nrm[1];
                let up = if on > 0.0 { Some(c) } else { g.neighbor(c, side) };
                let Some(u) = up else { continue };
                let (ux0, uy0) = corner(g, u);
                for (x, y, w) in face_points(g, x0, y0, side) {
                    for t in 0..4 {
                        let (vt, _) = shape(g, x0, y0, t, x, y);
                        for s in 0..4 {
                            let (vs, _) = shape(g, ux0, uy0, s, x, y);
                            a[(4 * c + t, 4 * u + s)] += w * on * vt * vs;
                        }
                    }
                }
            }
        }
        debug_assert_eq!(a.nrows(), n);
        a
    }
}

/// Solves `A(Ω_k) ψ_k − M_s (Σ_j c_j ψ_j) / 4π = b_k` for all `k` at once.
pub fn dense_coupled_solve(
    dg: &DenseDg,
    angles: &[[f64; 3]],
    coeffs: &[f64],
    rhs: &[Vec<f64>],
) -> Result<DenseSolution<Vec<Vec<f64>>>> {
    let n = dg.n_dofs();
    let k = angles.len();
    if coeffs.len() != k || rhs.len() != k {
        return Err(Error::Contract("oracle: inconsistent angle, coefficient and source counts".into()));
    }
    let total = n * k;
    if total > MAX_UNKNOWNS {
        return Err(Error::Contract(format!(
            "oracle: {total} unknowns exceed the cap of {MAX_UNKNOWNS}"
        )));
    }
    let ms = dg.scattering_mass() / FOUR_PI;
    let mut a = DMatrix::zeros(total, total);
    let mut b = DVector::zeros(total);
    for (i, om) in angles.iter().enumerate() {
        a.view_mut((i * n, i * n), (n, n)).copy_from(&dg.transport(*om));
        for (j, &cj) in coeffs.iter().enumerate() {
            let mut blk = a.view_mut((i * n, j * n), (n, n));
            blk -= &ms * cj;
        }
        b.rows_mut(i * n, n).copy_from_slice(&rhs[i]);
    }
    let sol = lu_solve(a, b, "coupled transport")?;
    let value = (0..k).map(|i| sol.value.rows(i * n, n).iter().copied().collect()).collect();
    Ok(DenseSolution {
        value,
        residual: sol.residual,
    })
}

/// Full-tensor backward-Euler step: every quadrature direction coupled
/// through the pseudo-scattering integral, solved without iteration.
pub fn dense_transport_step(
    grid: &Grid,
    quad: &QuadratureSet,
    step: &LinearizedStep,
    constants: &Constants,
    psi0: &[Vec<f64>],
) -> Result<DenseSolution<Vec<Vec<f64>>>> {
    if psi0.len() != quad.len() {
        return Err(Error::Contract("oracle: one initial field per direction expected".into()));
    }
    let dg = DenseDg::new(grid, &step.sigma_t, &step.sigma_s)?;
    let inv_cdt = step.inv_c_dt(constants);
    let rhs: Vec<Vec<f64>> = psi0
        .iter()
        .map(|p| {
            let f: Vec<f64> = (0..grid.n_dofs())
                .map(|i| step.q[i / 4] + inv_cdt * p[i])
                .collect();
            (&dg.mass * DVector::from_vec(f)).iter().copied().collect()
        })
        .collect();
    dense_coupled_solve(&dg, &quad.nodes, &quad.weights, &rhs)
}

/// Singular value decomposition, sorted nonincreasing.
#[derive(Clone, Debug)]
pub struct DenseSvd {
    pub u: Mat,
    pub singular_values: Vec<f64>,
    pub v: Mat,
}

pub fn dense_svd(a: &Mat) -> Result<DenseSvd> {
    if a.rows() > MAX_SVD_DIM || a.cols() > MAX_SVD_DIM {
        return Err(Error::Contract(format!(
            "oracle: {}×{} exceeds the SVD cap of {MAX_SVD_DIM}",
            a.rows(),
            a.cols()
        )));
    }
    // nalgebra's SVD with vectors loses accuracy on rank-deficient input, so
    // only its values are used. V comes from the eigenvectors of AᵀA and U
    // from AV/σ, completed by QR where σ vanishes.
    let m = to_dmatrix(a);
    let tall = m.nrows() >= m.ncols();
    let m = if tall { m } else { m.transpose() };
    let (rows, k) = (m.nrows(), m.ncols());
    let values = m.clone().singular_values();
    let mut sigma: Vec<f64> = values.iter().copied().collect();
    sigma.sort_by(|x, y| y.total_cmp(x));

    let eig = (m.transpose() * &m).symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let v = DMatrix::from_fn(k, k, |i, j| eig.eigenvectors[(i, order[j])]);
    let av = &m * &v;
    let tiny = sigma.first().copied().unwrap_or(0.0) * 1e-8;
    // Nonzero σ come first; unit vectors fill the null part.
    let live = (0..k).take_while(|&j| sigma[j] > tiny).count();
    let candidates = (0..live)
        .map(|j| av.column(j).into_owned())
        .chain((0..rows).map(|i| DVector::from_fn(rows, |r, _| if r == i { 1.0 } else { 0.0 })));
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(k);
    for mut w in candidates {
        if basis.len() == k {
            break;
        }
        let n0 = w.norm();
        for _ in 0..2 {
            for b in &basis {
                w -= b * b.dot(&w);
            }
        }
        let n = w.norm();
        if n > 1e-8 * n0 {
            basis.push(w / n);
        }
    }
    let u = Mat::from_fn(rows, k, |i, c| basis[c][i]);
    let v = from_dmatrix(&v);
    let (u, v) = if tall { (u, v) } else { (v, u) };
    Ok(DenseSvd { u, singular_values: sigma, v })
}

/// Solves the Galerkin row system as one `(r·N_Ω)` block system:
/// `B(Ω_d) L_d − M_s Σ_e w_e L_e / 4π = Q_d`. Row `d` of the result is `L_d`.
pub fn dense_row_system(p: &ProjectedOperators, quad: &QuadratureSet) -> Result<DenseSolution<Mat>> {
    let r = p.rank();
    let nd = quad.len();
    let total = r * nd;
    if total > MAX_UNKNOWNS {
        return Err(Error::Contract("oracle: row system too large".into()));
    }
    let ms = to_dmatrix(&p.m_s) / FOUR_PI;
    let mut a = DMatrix::zeros(total, total);
    let mut b = DVector::zeros(total);
    for d in 0..nd {
        a.view_mut((d * r, d * r), (r, r))
            .copy_from(&to_dmatrix(&p.node_matrix(quad.nodes[d])));
        for e in 0..nd {
            let mut blk = a.view_mut((d * r, e * r), (r, r));
            blk -= &ms * quad.weights[e];
        }
        for i in 0..r {
            b[d * r + i] = p.q[(d, i)];
        }
    }
    let sol = lu_solve(a, b, "row system")?;
    Ok(DenseSolution {
        value: Mat::from_fn(nd, r, |d, i| sol.value[d * r + i]),
        residual: sol.residual,
    })
}

/// Dense continuous Q1 matrices rebuilt by quadrature.
#[derive(Clone, Debug)]
pub struct DenseCg {
    pub grid: Grid,
    pub mass: DMatrix<f64>,
    sigma_t: Vec<f64>,
    sigma_s: Vec<f64>,
}

impl DenseCg {
    pub fn new(grid: &Grid, sigma_t: &[f64], sigma_s: &[f64]) -> Result<DenseCg> {
        if grid.flavor != DofFlavor::Continuous {
            return Err(Error::Contract("oracle: continuous grid expected".into()));
        }
        if sigma_t.len() != grid.n_cells() || sigma_s.len() != grid.n_cells() {
            return Err(Error::Contract("oracle: one opacity per cell expected".into()));
        }
        let mut cg = DenseCg {
            grid: grid.clone(),
            mass: DMatrix::zeros(grid.n_nodes(), grid.n_nodes()),
            sigma_t: sigma_t.to_vec(),
            sigma_s: sigma_s.to_vec(),
        };
        cg.mass = cg.volume(|_, _, _, vu, vv, _, _| vu * vv);
        Ok(cg)
    }

    pub fn n_dofs(&self) -> usize {
        self.grid.n_nodes()
    }

    /// `Σ_cells ∫ f(c, ...)` over trial `u` (column) and test `v` (row).
    fn volume(&self, f: impl Fn(usize, f64, f64, f64, f64, [f64; 2], [f64; 2]) -> f64) -> DMatrix<f64> {
        let g = &self.grid;
        let n = g.n_nodes();
        let mut m = DMatrix::zeros(n, n);
        let wq = 0.25 * g.dx * g.dy;
        for c in 0..g.n_cells() {
            let (x0, y0) = corner(g, c);
            for &gx in &GAUSS {
                for &gy in &GAUSS {
                    let (x, y) = (x0 + gx * g.dx, y0 + gy * g.dy);
                    for t in 0..4 {
                        let (vt, dt) = shape(g, x0, y0, t, x, y);
                        for s in 0..4 {
                            let (vs, ds) = shape(g, x0, y0, s, x, y);
                            m[(g.cg_dof(c, t), g.cg_dof(c, s))] += wq * f(c, x, y, vs, vt, ds, dt);
                        }
                    }
                }
            }
        }
        m
    }

    /// `∮ f(normal) u v` over the domain boundary.
    fn boundary(&self, f: impl Fn([f64; 2]) -> f64) -> DMatrix<f64> {
        let g = &self.grid;
        let n = g.n_nodes();
        let mut m = DMatrix::zeros(n, n);
        for c in 0..g.n_cells() {
            let (x0, y0) = corner(g, c);
            for side in Side::ALL {
                if g.neighbor(c, side).is_some() {
                    continue;
                }
                let k = f(side.outward_normal());
                for (x, y, w) in face_points(g, x0, y0, side) {
                    for t in 0..4 {
                        let (vt, _) = shape(g, x0, y0, t, x, y);
                        for s in 0..4 {
                            let (vs, _) = shape(g, x0, y0, s, x, y);
                            m[(g.cg_dof(c, t), g.cg_dof(c, s))] += w * k * vt * vs;
                        }
                    }
                }
            }
        }
        m
    }

    pub fn scattering_mass(&self) -> DMatrix<f64> {
        self.volume(|c, _, _, vu, vv, _, _| self.sigma_s[c] * vu * vv)
    }

    /// `½∫(Ω·∇u)v − ½∫u Ω·∇v + ½∮|Ω·n| u v + ∫σ_t u v`.
    pub fn transport(&self, omega: [f64; 3]) -> DMatrix<f64> {
        let od = |d: [f64; 2]| omega[0] * d[0] + omega[1] * d[1];
        let vol = self.volume(|c, _, _, vu, vv, du, dv| {
            0.5 * od(du) * vv - 0.5 * vu * od(dv) + self.sigma_t[c] * vu * vv
        });
        vol + self.boundary(|n| 0.5 * (omega[0] * n[0] + omega[1] * n[1]).abs())
    }

    /// Diffusion operator `∫ (1/(3σ_t)) ∇u·∇v + ∫ (σ_t − σ_s) u v + b ∮ u v`.
    pub fn diffusion(&self, boundary_weight: f64) -> DMatrix<f64> {
        let vol = self.volume(|c, _, _, vu, vv, du, dv| {
            (du[0] * dv[0] + du[1] * dv[1]) / (3.0 * self.sigma_t[c])
                + (self.sigma_t[c] - self.sigma_s[c]) * vu * vv
        });
        vol + self.boundary(|_| boundary_weight)
    }
}

/// Galerkin projection of the full-tensor continuous system onto the
/// products `X_i W_j`, solved directly:
///
/// ```text
/// Σ_d w_d W_dj' X_i'ᵀ [A(Ω_d) ψ_d − M_s φ / 4π − b_d] = 0,   ψ_d = X S W_dᵀ
/// ```
///
/// `rhs[d]` is the already mass-weighted source `b_d`. Returns `S`.
pub fn dense_galerkin_coupling(
    cg: &DenseCg,
    quad: &QuadratureSet,
    x: &Mat,
    w: &Mat,
    rhs: &[Vec<f64>],
) -> Result<DenseSolution<Mat>> {
    let n = cg.n_dofs();
    let nd = quad.len();
    let r = x.cols();
    if x.rows() != n || w.rows() != nd || w.cols() != r || rhs.len() != nd {
        return Err(Error::Contract("oracle: Galerkin factor shapes differ".into()));
    }
    let total = n * nd;
    if total > MAX_UNKNOWNS {
        return Err(Error::Contract("oracle: Galerkin system too large".into()));
    }
    let ms = cg.scattering_mass() / FOUR_PI;
    let mut full = DMatrix::zeros(total, total);
    let mut b = DVector::zeros(total);
    for d in 0..nd {
        full.view_mut((d * n, d * n), (n, n))
            .copy_from(&cg.transport(quad.nodes[d]));
        for e in 0..nd {
            let mut blk = full.view_mut((d * n, e * n), (n, n));
            blk -= &ms * quad.weights[e];
        }
        b.rows_mut(d * n, n).copy_from_slice(&rhs[d]);
    }
    let xd = to_dmatrix(x);
    let mut v = DMatrix::zeros(total, r * r);
    let mut vw = DMatrix::zeros(total, r * r);
    for j in 0..r {
        for i in 0..r {
            for d in 0..nd {
                for k in 0..n {
                    v[(d * n + k, i + r * j)] = xd[(k, i)] * w[(d, j)];
                    vw[(d * n + k, i + r * j)] = quad.weights[d] * xd[(k, i)] * w[(d, j)];
                }
            }
        }
    }
    let a = vw.transpose() * &full * &v;
    let rb = vw.transpose() * &b;
    let sol = lu_solve(a, rb, "Galerkin coupling")?;
    Ok(DenseSolution {
        value: Mat::from_fn(r, r, |i, j| sol.value[i + r * j]),
        residual: sol.residual,
    })
}
