//! PN-like DLR stepper on the continuous Q1 grid.
//!
//! One step solves three Galerkin problems with the old factors frozen:
//!
//! 1. K step: the even-parity pair projected onto parity bases `E` (even
//!    parts of `W0`, `E_0` the constant) and `O` (odd parts). Both blocks are
//!    SPD and are solved matrix-free with Jacobi-preconditioned CG.
//! 2. L step: the first-order system projected onto `X0`, solved per node
//!    through the scattering reduction of [`row_solve`].
//! 3. S step: the same system projected onto `X0 ⊗ W0`, one dense solve.
//!
//! The three results are combined into a rank-increased two-factor form and
//! rounded back to rank `r` with the constant angular function kept as
//! column 0. Temperature, leakage and the carried constant channel all come
//! from the even block, whose constant row is a discrete conservation law.
//!
//! The first-order operator of the L and S steps is
//!
//! ```text
//! A(Ω) = Ω_x K_x + Ω_y K_y + ½|Ω_x| B_x + ½|Ω_y| B_y + M_t
//! ```
//!
//! with `vᵀK_j u = ½(∫ ∂_j u v − ∫ u ∂_j v)` and `B_j` the boundary mass on
//! sides normal to axis `j` (weak vacuum inflow).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::angular::{parity_split, AngularBasis, QuadratureSet, FOUR_PI};
use crate::dense::{axpy, Lu, Mat};
use crate::dlr_sn::{row_solve, ProjectedOperators, RowSolve};
use crate::lowrank::{combine_rank_2r, pinned_truncate, DlrState};
use crate::mesh::{DofFlavor, FaceKind, Grid};
use crate::physics::{floor_energy_density, update_temperature};
use crate::problem::{Problem, StepInfo};
use crate::solvers::{jacobi, pcg, CgOptions};
use crate::sparse::Csr;
use crate::transport_sn::LocalMatrices;
use crate::{Error, Result};

/// Parity parts below this norm (basis columns have unit norm) are dropped.
const PARITY_DROP: f64 = 1e-8;

/// Assembled continuous Q1 matrices for one set of per-cell opacities.
#[derive(Clone, Debug)]
pub struct CgOperators {
    pub grid: Grid,
    pub local: LocalMatrices,
    pub mass: Csr,
    pub kx: Csr,
    pub ky: Csr,
    /// Boundary mass on sides normal to x (left, right).
    pub bx: Csr,
    pub by: Csr,
    pub m_t: Csr,
    pub m_s: Csr,
    /// `∫ (1/σ_t) ∂_x u ∂_x v`
    pub sxx: Csr,
    /// `∫ (1/σ_t) (∂_x u ∂_y v + ∂_y u ∂_x v)`
    pub dxy: Csr,
    pub syy: Csr,
    /// `vᵀ G_j u = ∫ (1/σ_t) u ∂_j v`
    pub gx: Csr,
    pub gy: Csr,
    pub sigma_t: Vec<f64>,
    pub sigma_s: Vec<f64>,
}

impl CgOperators {
    pub fn assemble(grid: &Grid, sigma_t: &[f64], sigma_s: &[f64]) -> Result<CgOperators> {
        if grid.flavor != DofFlavor::Continuous {
            return Err(Error::Contract("PN-like DLR needs the continuous grid flavor".into()));
        }
        let nc = grid.n_cells();
        if sigma_t.len() != nc || sigma_s.len() != nc {
            return Err(Error::Contract(format!(
                "opacity fields must have one value per cell ({nc})"
            )));
        }
        if sigma_t.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Contract("total opacity must be positive".into()));
        }
        let n = grid.n_nodes();
        let lm = LocalMatrices::new(grid.dx, grid.dy);
        let m1 = |h: f64| [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]];
        let s1 = |h: f64| [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]];
        // ∫ N_i' N_j
        let d1 = [[-0.5, -0.5], [0.5, 0.5]];
        let (mx, my, sx, sy) = (m1(grid.dx), m1(grid.dy), s1(grid.dx), s1(grid.dy));
        let mut t: [Vec<(usize, usize, f64)>; 11] = Default::default();
        for c in 0..nc {
            let inv = 1.0 / sigma_t[c];
            for a in 0..4 {
                let (ax, ay) = (a & 1, a >> 1);
                let row = grid.cg_dof(c, a);
                for b in 0..4 {
                    let (bx, by) = (b & 1, b >> 1);
                    let col = grid.cg_dof(c, b);
                    let dxy = d1[bx][ax] * d1[ay][by] + d1[ax][bx] * d1[by][ay];
                    let vals = [
                        lm.mass[a][b],
                        0.5 * (lm.gx[a][b] - lm.gx[b][a]),
                        0.5 * (lm.gy[a][b] - lm.gy[b][a]),
                        sigma_t[c] * lm.mass[a][b],
                        sigma_s[c] * lm.mass[a][b],
                        inv * sx[ax][bx] * my[ay][by],
                        inv * dxy,
                        inv * mx[ax][bx] * sy[ay][by],
                        -inv * lm.gx[a][b],
                        -inv * lm.gy[a][b],
                    ];
                    for (k, v) in vals.into_iter().enumerate() {
                        t[k].push((row, col, v));
                    }
                }
            }
        }
        let mut tb = [Vec::new(), Vec::new()];
        for face in &grid.faces {
            if let FaceKind::Boundary { cell, side } = face.kind {
                let fm = lm.face(face.axis);
                let ln = side.local_nodes();
                for p in 0..2 {
                    for q in 0..2 {
                        tb[face.axis].push((grid.cg_dof(cell, ln[p]), grid.cg_dof(cell, ln[q]), fm[p][q]));
                    }
                }
            }
        }
        let csr = |tr: &[(usize, usize, f64)]| Csr::from_triplets(n, n, tr);
        Ok(CgOperators {
            grid: grid.clone(),
            mass: csr(&t[0]),
            kx: csr(&t[1]),
            ky: csr(&t[2]),
            bx: csr(&tb[0]),
            by: csr(&tb[1]),
            m_t: csr(&t[3]),
            m_s: csr(&t[4]),
            sxx: csr(&t[5]),
            dxy: csr(&t[6]),
            syy: csr(&t[7]),
            gx: csr(&t[8]),
            gy: csr(&t[9]),
            local: lm,
            sigma_t: sigma_t.to_vec(),
            sigma_s: sigma_s.to_vec(),
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.mass.rows()
    }

    /// The assembled first-order `A(Ω)`.
    pub fn transport_matrix(&self, omega: [f64; 3]) -> Csr {
        self.kx
            .add(omega[0], &self.ky, omega[1])
            .add(1.0, &self.bx, 0.5 * omega[0].abs())
            .add(1.0, &self.by, 0.5 * omega[1].abs())
            .add(1.0, &self.m_t, 1.0)
    }

    /// `∫ f φ_a` for a per-cell constant `f`.
    pub fn load_cellwise(&self, f: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let quarter = 0.25 * g.cell_area();
        let mut out = vec![0.0; self.n_dofs()];
        for c in 0..g.n_cells() {
            for a in 0..4 {
                out[g.cg_dof(c, a)] += quarter * f[c];
            }
        }
        out
    }

    /// `∫ (f/σ_t) ∂_j φ_a` for a per-cell constant `f`.
    pub fn gradient_load(&self, f: &[f64], axis: usize) -> Vec<f64> {
        let g = &self.grid;
        let loc = if axis == 0 { &self.local.gx } else { &self.local.gy };
        let mut out = vec![0.0; self.n_dofs()];
        for c in 0..g.n_cells() {
            let s = f[c] / self.sigma_t[c];
            for a in 0..4 {
                let row: f64 = loc[a].iter().sum();
                out[g.cg_dof(c, a)] -= s * row;
            }
        }
        out
    }

    /// `1ᵀ M u`.
    pub fn integrate(&self, u: &[f64]) -> f64 {
        self.mass.matvec(u).iter().sum()
    }
}

/// Cell means of a continuous Q1 field (mean of the four corners).
pub fn cg_cell_average(grid: &Grid, u: &[f64]) -> Vec<f64> {
    (0..grid.n_cells())
        .map(|c| 0.25 * (0..4).map(|a| u[grid.cg_dof(c, a)]).sum::<f64>())
        .collect()
}

/// Orthonormal bases of the even and odd parts of a pinned `W0`.
#[derive(Clone, Debug)]
pub struct ParityBasis {
    /// Column 0 is the constant.
    pub even: Mat,
    /// May have no columns.
    pub odd: Mat,
}

impl ParityBasis {
    pub fn new(w0: &AngularBasis, q: &QuadratureSet) -> Result<ParityBasis> {
        if !w0.constant_pinned {
            return Err(Error::Contract("PN-like DLR needs a constant-pinned angular basis".into()));
        }
        let (even, odd) = parity_split(&w0.w, q);
        Ok(ParityBasis {
            even: independent_columns(&even, q),
            odd: independent_columns(&odd, q),
        })
    }

    /// `[E, O]`.
    pub fn combined(&self) -> Mat {
        self.even.hcat(&self.odd)
    }
}

fn independent_columns(cols: &Mat, q: &QuadratureSet) -> Mat {
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for j in 0..cols.cols() {
        let mut v = cols.col(j).to_vec();
        for _ in 0..2 {
            for k in &kept {
                let c = q.dot(k, &v);
                axpy(-c, k, &mut v);
            }
        }
        let n = libm::sqrt(q.dot(&v, &v));
        if n > PARITY_DROP {
            v.iter_mut().for_each(|x| *x /= n);
            kept.push(v);
        }
    }
    if kept.is_empty() {
        Mat::zeros(cols.rows(), 0)
    } else {
        Mat::from_columns(&kept)
    }
}

/// Angular coupling tensors of the K step.
#[derive(Clone, Debug)]
pub struct PnCoefficients {
    /// `⟨Ω_aΩ_b E_k, E_k'⟩` for `ab = xx, xy, yy`.
    pub a_even: [Mat; 3],
    pub a_odd: [Mat; 3],
    /// `⟨|Ω_x| E_k, E_k'⟩`, `⟨|Ω_y| E_k, E_k'⟩`.
    pub beta_even: [Mat; 2],
    pub beta_odd: [Mat; 2],
    /// `κ_j[l, k] = ⟨Ω_j O_l, E_k⟩`.
    pub kappa: [Mat; 2],
}

impl PnCoefficients {
    pub fn new(p: &ParityBasis, q: &QuadratureSet) -> PnCoefficients {
        let tensor = |a: &Mat, b: &Mat, f: &dyn Fn([f64; 3]) -> f64| {
            let fa = Mat::from_fn(a.rows(), a.cols(), |d, j| f(q.nodes[d]) * a[(d, j)]);
            q.gram(&fa, b)
        };
        let moments = |m: &Mat| {
            [
                tensor(m, m, &|o| o[0] * o[0]),
                tensor(m, m, &|o| o[0] * o[1]),
                tensor(m, m, &|o| o[1] * o[1]),
            ]
        };
        let abs = |m: &Mat| [tensor(m, m, &|o| o[0].abs()), tensor(m, m, &|o| o[1].abs())];
        PnCoefficients {
            a_even: moments(&p.even),
            a_odd: moments(&p.odd),
            beta_even: abs(&p.even),
            beta_odd: abs(&p.odd),
            kappa: [
                tensor(&p.odd, &p.even, &|o| o[0]),
                tensor(&p.odd, &p.even, &|o| o[1]),
            ],
        }
    }
}

/// One parity block `Σ_k [A : S_σ + β·B + M_t] K_k`, minus `M_s K_0` on the
/// constant channel when `scatter` is set. Fields are stored column-major
/// (`n × channels`).
pub struct ParityBlock<'a> {
    ops: &'a CgOperators,
    a: &'a [Mat; 3],
    beta: &'a [Mat; 2],
    scatter: bool,
}

impl<'a> ParityBlock<'a> {
    pub fn even(ops: &'a CgOperators, c: &'a PnCoefficients) -> ParityBlock<'a> {
        ParityBlock {
            ops,
            a: &c.a_even,
            beta: &c.beta_even,
            scatter: true,
        }
    }

    pub fn odd(ops: &'a CgOperators, c: &'a PnCoefficients) -> ParityBlock<'a> {
        ParityBlock {
            ops,
            a: &c.a_odd,
            beta: &c.beta_odd,
            scatter: false,
        }
    }

    pub fn channels(&self) -> usize {
        self.a[0].rows()
    }

    pub fn apply(&self, k: &Mat) -> Mat {
        let o = self.ops;
        let mut y = o.m_t.matmul_dense(k);
        for (m, c) in [
            (&o.sxx, &self.a[0]),
            (&o.dxy, &self.a[1]),
            (&o.syy, &self.a[2]),
            (&o.bx, &self.beta[0]),
            (&o.by, &self.beta[1]),
        ] {
            y.add_scaled(1.0, &m.matmul_dense(k).matmul(c));
        }
        if self.scatter && k.cols() > 0 {
            let s = o.m_s.matvec(k.col(0));
            axpy(-1.0, &s, y.col_mut(0));
        }
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let o = self.ops;
        let n = o.n_dofs();
        let (dm, ds) = (o.m_t.diagonal(), o.m_s.diagonal());
        let parts = [
            (o.sxx.diagonal(), &self.a[0]),
            (o.dxy.diagonal(), &self.a[1]),
            (o.syy.diagonal(), &self.a[2]),
            (o.bx.diagonal(), &self.beta[0]),
            (o.by.diagonal(), &self.beta[1]),
        ];
        let mut out = Vec::with_capacity(n * self.channels());
        for k in 0..self.channels() {
            for i in 0..n {
                let mut v = dm[i] + parts.iter().map(|(d, c)| d[i] * c[(k, k)]).sum::<f64>();
                if self.scatter && k == 0 {
                    v -= ds[i];
                }
                out.push(v);
            }
        }
        out
    }

    /// CG solve of `apply(K) = rhs` from the initial guess `k`.
    pub fn solve(&self, rhs: &Mat, k: &mut Mat, what: &str, opts: CgOptions) -> Result<usize> {
        let (n, m) = (rhs.rows(), rhs.cols());
        if m == 0 {
            return Ok(0);
        }
        let diag = self.diagonal();
        let mut x = k.as_slice().to_vec();
        let stats = pcg(
            what,
            |v, out| {
                let y = self.apply(&Mat::from_fn(n, m, |i, j| v[i + n * j]));
                out.copy_from_slice(y.as_slice());
            },
            jacobi(&diag),
            rhs.as_slice(),
            &mut x,
            opts,
        )?;
        *k = Mat::from_fn(n, m, |i, j| x[i + n * j]);
        Ok(stats.iterations)
    }
}

/// Result of the K step: coefficient fields of `E` and `O`.
#[derive(Clone, Debug)]
pub struct KStep {
    pub even: Mat,
    pub odd: Mat,
    pub even_iterations: usize,
    pub odd_iterations: usize,
}

impl KStep {
    /// `φ = √(4π) K⁺_0` (nodal).
    pub fn scalar_flux(&self) -> Vec<f64> {
        self.even.col(0).iter().map(|v| libm::sqrt(FOUR_PI) * v).collect()
    }

    /// Outflow `√(4π) Σ_k (β_x[k,0] ∮ K⁺_k + β_y[k,0] ∮ K⁺_k)` over the
    /// matching boundary sides.
    pub fn leakage(&self, ops: &CgOperators, c: &PnCoefficients) -> f64 {
        let mut s = 0.0;
        for k in 0..self.even.cols() {
            s += c.beta_even[0][(k, 0)] * ops.integrate_boundary(&ops.bx, self.even.col(k));
            s += c.beta_even[1][(k, 0)] * ops.integrate_boundary(&ops.by, self.even.col(k));
        }
        libm::sqrt(FOUR_PI) * s
    }
}

impl CgOperators {
    fn integrate_boundary(&self, b: &Csr, u: &[f64]) -> f64 {
        b.matvec(u).iter().sum()
    }
}

/// Solves both parity blocks. `k0_even`, `k0_odd` are the old solution's
/// coefficients in `E` and `O` (also the initial guesses), `q` the
/// per-cell isotropic source.
pub fn k_step(
    ops: &CgOperators,
    coeffs: &PnCoefficients,
    k0_even: &Mat,
    k0_odd: &Mat,
    q: &[f64],
    inv_cdt: f64,
    opts: CgOptions,
) -> Result<KStep> {
    let sq = libm::sqrt(FOUR_PI);
    let mut qp = k0_even.clone();
    qp.scale(inv_cdt);
    let mut qm = k0_odd.clone();
    qm.scale(inv_cdt);

    let mut rhs_e = ops.mass.matmul_dense(&qp);
    if qm.cols() > 0 {
        rhs_e.add_scaled(1.0, &ops.gx.matmul_dense(&qm).matmul(&coeffs.kappa[0]));
        rhs_e.add_scaled(1.0, &ops.gy.matmul_dense(&qm).matmul(&coeffs.kappa[1]));
    }
    axpy(sq, &ops.load_cellwise(q), rhs_e.col_mut(0));

    let mut even = k0_even.clone();
    let even_iterations =
        ParityBlock::even(ops, coeffs).solve(&rhs_e, &mut even, "K step: even block", opts)?;

    let mut odd = k0_odd.clone();
    let mut odd_iterations = 0;
    if qm.cols() > 0 {
        let mut rhs_o = ops.mass.matmul_dense(&qm);
        rhs_o.add_scaled(1.0, &ops.gx.matmul_dense(&qp).matmul(&coeffs.kappa[0].transpose()));
        rhs_o.add_scaled(1.0, &ops.gy.matmul_dense(&qp).matmul(&coeffs.kappa[1].transpose()));
        for axis in 0..2 {
            let gl = ops.gradient_load(q, axis);
            for l in 0..qm.cols() {
                axpy(sq * coeffs.kappa[axis][(l, 0)], &gl, rhs_o.col_mut(l));
            }
        }
        odd_iterations = ParityBlock::odd(ops, coeffs).solve(&rhs_o, &mut odd, "K step: odd block", opts)?;
    }
    Ok(KStep {
        even,
        odd,
        even_iterations,
        odd_iterations,
    })
}

/// Projects the first-order operator onto `X0` with row sources
/// `Q_d = X0ᵀ∫qφ + L0(Ω_d)/(cΔt)`.
pub fn project_first_order(ops: &CgOperators, x0: &Mat, l0: &Mat, q: &[f64], inv_cdt: f64) -> ProjectedOperators {
    let xq = x0.tr_matvec(&ops.load_cellwise(q));
    let mut bx = ops.bx.project(x0, x0);
    bx.scale(0.5);
    let mut by = ops.by.project(x0, x0);
    by.scale(0.5);
    ProjectedOperators {
        kx: ops.kx.project(x0, x0),
        ky: ops.ky.project(x0, x0),
        px: bx,
        py: by,
        m_t: ops.m_t.project(x0, x0),
        m_s: ops.m_s.project(x0, x0),
        q: Mat::from_fn(l0.rows(), x0.cols(), |d, i| xq[i] + inv_cdt * l0[(d, i)]),
    }
}

/// L step: row `d` of the result is `L(Ω_d)`.
pub fn l_step(p: &ProjectedOperators, quad: &QuadratureSet) -> Result<Mat> {
    row_solve(p, quad, RowSolve::Reduced)
}

/// S step: the row system of `p` projected onto `W0`, one dense
/// `r² × r²` solve with unknown `S_ij` at `i + r j`.
pub fn s_step(p: &ProjectedOperators, w0: &AngularBasis, quad: &QuadratureSet, max_rank: usize) -> Result<Mat> {
    let r = p.rank();
    if r > max_rank {
        return Err(Error::Contract(format!(
            "S step: rank {r} exceeds the dense-solve cap {max_rank}"
        )));
    }
    let w = &w0.w;
    let weighted = |f: &dyn Fn([f64; 3]) -> f64| {
        let fw = Mat::from_fn(w.rows(), r, |d, j| f(quad.nodes[d]) * w[(d, j)]);
        quad.gram(&fw, w)
    };
    let ang = [
        weighted(&|o| o[0]),
        weighted(&|o| o[1]),
        weighted(&|o| o[0].abs()),
        weighted(&|o| o[1].abs()),
    ];
    let sp = [&p.kx, &p.ky, &p.px, &p.py];
    let beta = &w0.beta;
    let nn = r * r;
    let mut a = Mat::zeros(nn, nn);
    for j in 0..r {
        for i in 0..r {
            let col = i + r * j;
            for jp in 0..r {
                for ip in 0..r {
                    let mut v = -p.m_s[(ip, i)] * beta[j] * beta[jp] / FOUR_PI;
                    if j == jp {
                        v += p.m_t[(ip, i)];
                    }
                    for (s, t) in sp.iter().zip(&ang) {
                        v += s[(ip, i)] * t[(j, jp)];
                    }
                    a[(ip + r * jp, col)] = v;
                }
            }
        }
    }
    let rhs = quad.gram(w, &p.q);
    let b: Vec<f64> = (0..nn).map(|k| rhs[(k / r, k % r)]).collect();
    let x = Lu::new(&a)
        .map_err(|_| Error::solver("S step: singular projected system", 0, f64::INFINITY))?
        .solve(&b);
    Ok(Mat::from_fn(r, r, |i, j| x[i + r * j]))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PnDlrOptions {
    /// K-step block solves.
    pub cg: CgOptions,
    /// Largest rank the dense S step accepts.
    pub max_s_rank: usize,
}

impl Default for PnDlrOptions {
    fn default() -> Self {
        PnDlrOptions {
            cg: CgOptions {
                tol: 1e-10,
                max_iters: 20_000,
            },
            max_s_rank: 64,
        }
    }
}

/// Everything one step produced, for inspection.
#[derive(Clone, Debug)]
pub struct PnDlrWorkspace {
    pub state: DlrState,
    pub parity: ParityBasis,
    pub coeffs: PnCoefficients,
    pub k: KStep,
    pub l: Mat,
    pub s: Mat,
    pub projected: ProjectedOperators,
    /// Rank-increased factors before rounding, `ψ = Y Zᵀ`.
    pub y: Mat,
    pub z: Mat,
    /// Nodal `√(4π) K⁺_0`.
    pub phi: Vec<f64>,
    pub temperature: Vec<f64>,
    pub info: StepInfo,
}

/// One PN-like DLR backward-Euler step. Returns the new state, the new
/// temperature and the step report.
pub fn pn_dlr_step(
    problem: &Problem,
    state: &DlrState,
    t0: &[f64],
    dt: f64,
    opts: PnDlrOptions,
) -> Result<(DlrState, Vec<f64>, StepInfo)> {
    let ws = pn_dlr_step_detailed(problem, state, t0, dt, opts)?;
    Ok((ws.state, ws.temperature, ws.info))
}

pub fn pn_dlr_step_detailed(
    problem: &Problem,
    state: &DlrState,
    t0: &[f64],
    dt: f64,
    opts: PnDlrOptions,
) -> Result<PnDlrWorkspace> {
    let q = &problem.quad;
    let grid = &problem.grid;
    let r = state.rank();
    if state.x.rows() != grid.n_dofs() || state.w.w.rows() != q.len() {
        return Err(Error::Contract("PN-like DLR: state does not match the problem".into()));
    }
    let step = problem.linearize(t0, dt)?;
    let ops = CgOperators::assemble(grid, &step.sigma_t, &step.sigma_s)?;
    let inv_cdt = step.inv_c_dt(&problem.constants);

    let parity = ParityBasis::new(&state.w, q)?;
    let coeffs = PnCoefficients::new(&parity, q);
    let k0 = state.k();
    let k0_even = k0.matmul(&q.gram(&state.w.w, &parity.even));
    let k0_odd = k0.matmul(&q.gram(&state.w.w, &parity.odd));
    let k = k_step(&ops, &coeffs, &k0_even, &k0_odd, &step.q, inv_cdt, opts.cg)?;

    let projected = project_first_order(&ops, &state.x, &state.l(), &step.q, inv_cdt);
    let l = l_step(&projected, q)?;
    let s = s_step(&projected, &state.w, q, opts.max_s_rank)?;

    let v = parity.combined();
    let k_all = k.even.hcat(&k.odd);
    let (y, z) = combine_rank_2r(state, &v, &k_all, &l, &s, q)?;
    let trunc = pinned_truncate(&y, &z, r, &ops.mass, q, Some(k.even.col(0)))?;

    let phi = k.scalar_flux();
    let phi_cells = cg_cell_average(grid, &phi);
    let temperature = update_temperature(&step, &phi_cells, &problem.constants);
    let info = StepInfo {
        iterations: k.even_iterations,
        cg_iterations: k.even_iterations + k.odd_iterations,
        condition: None,
        discarded: Some(trunc.discarded),
        projection_bound: None,
        leakage: k.leakage(&ops, &coeffs),
        radiation_energy: ops.integrate(&phi) / problem.constants.c,
        floor_energy: floor_energy_density(&step, &phi_cells, &temperature) * grid.cell_area(),
    };
    log::debug!(
        "pn step: K-step CG {}+{}, discarded {:.3e}",
        k.even_iterations,
        k.odd_iterations,
        trunc.discarded
    );
    Ok(PnDlrWorkspace {
        state: trunc.state,
        parity,
        coeffs,
        k,
        l,
        s,
        projected,
        y,
        z,
        phi,
        temperature,
        info,
    })
}
