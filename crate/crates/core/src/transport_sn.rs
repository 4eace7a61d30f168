//! Upwind DG transport on the discontinuous Q1 grid: operator assembly,
//! per-direction sweeps, source iteration and diffusion synthetic
//! acceleration.
//!
//! For a direction Ω the discrete operator is
//!
//! ```text
//! A(Ω) = Ω_x K_x + Ω_y K_y + |Ω_x| P_x + |Ω_y| P_y + M_t
//! ```
//!
//! where `K_j = G_j + F̄_j` is the centered (skew-symmetric) streaming
//! operator, `vᵀG_j u = −∫ ∂_j v u`, `vᵀF̄_j u = Σ_faces ∫ n_j {u}⟦v⟧`, and
//! `P_j = ½ Σ_faces ∫ ⟦u⟧⟦v⟧` over faces normal to axis `j`. Jumps are
//! `⟦u⟧ = u⁻ − u⁺` across the fixed face normal; on the boundary `{u} = u/2`
//! and `⟦u⟧ = u`. Together this is the usual upwind flux with vacuum inflow.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::angular::{QuadratureSet, FOUR_PI};
use crate::dense::{dot, norm2};
use crate::mesh::{DofFlavor, FaceKind, Grid, Side};
use crate::par;
use crate::physics::{floor_energy_density, update_temperature};
use crate::problem::{Problem, StepInfo};
use crate::solvers::{jacobi, pcg, CgOptions};
use crate::sparse::Csr;
use crate::{Error, Result};

type M4 = [[f64; 4]; 4];

/// Element matrices of one `dx × dy` cell (row = test node, column = trial).
#[derive(Clone, Debug)]
pub struct LocalMatrices {
    pub mass: M4,
    pub gx: M4,
    pub gy: M4,
    /// Face mass on x-normal faces (length dy), indexed along the face.
    pub face_x: [[f64; 2]; 2],
    pub face_y: [[f64; 2]; 2],
}

impl LocalMatrices {
    pub fn new(dx: f64, dy: f64) -> LocalMatrices {
        let m1 = |h: f64| [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]];
        // ∫ φ_a' φ_b
        let d1 = [[-0.5, -0.5], [0.5, 0.5]];
        let (mx, my) = (m1(dx), m1(dy));
        let mut mass = [[0.0; 4]; 4];
        let mut gx = [[0.0; 4]; 4];
        let mut gy = [[0.0; 4]; 4];
        for a in 0..4 {
            let (ax, ay) = (a & 1, a >> 1);
            for b in 0..4 {
                let (bx, by) = (b & 1, b >> 1);
                mass[a][b] = mx[ax][bx] * my[ay][by];
                gx[a][b] = -d1[ax][bx] * my[ay][by];
                gy[a][b] = -mx[ax][bx] * d1[ay][by];
            }
        }
        LocalMatrices {
            mass,
            gx,
            gy,
            face_x: m1(dy),
            face_y: m1(dx),
        }
    }

    pub fn face(&self, axis: usize) -> &[[f64; 2]; 2] {
        if axis == 0 {
            &self.face_x
        } else {
            &self.face_y
        }
    }
}

/// Assembled DG matrices for one set of per-cell opacities.
#[derive(Clone, Debug)]
pub struct DgOperators {
    pub grid: Grid,
    pub local: LocalMatrices,
    pub mass: Csr,
    pub gx: Csr,
    pub gy: Csr,
    pub fbar_x: Csr,
    pub fbar_y: Csr,
    /// `G_j + F̄_j`
    pub kx: Csr,
    pub ky: Csr,
    pub px: Csr,
    pub py: Csr,
    pub m_t: Csr,
    pub m_s: Csr,
    pub sigma_t: Vec<f64>,
    pub sigma_s: Vec<f64>,
}

impl DgOperators {
    /// Assembles with per-cell total and scattering opacities.
    pub fn assemble(grid: &Grid, sigma_t: &[f64], sigma_s: &[f64]) -> Result<DgOperators> {
        if grid.flavor != DofFlavor::Discontinuous {
            return Err(Error::Contract("DG transport needs the discontinuous grid flavor".into()));
        }
        let nc = grid.n_cells();
        if sigma_t.len() != nc || sigma_s.len() != nc {
            return Err(Error::Contract(format!(
                "opacity fields must have one value per cell ({nc})"
            )));
        }
        let n = grid.n_dofs();
        let local = LocalMatrices::new(grid.dx, grid.dy);
        let cap = 16 * nc;
        let (mut tm, mut tgx, mut tgy, mut tmt, mut tms) = (
            Vec::with_capacity(cap),
            Vec::with_capacity(cap),
            Vec::with_capacity(cap),
            Vec::with_capacity(cap),
            Vec::with_capacity(cap),
        );
        for c in 0..nc {
            for a in 0..4 {
                for b in 0..4 {
                    let (r, col) = (4 * c + a, 4 * c + b);
                    tm.push((r, col, local.mass[a][b]));
                    tgx.push((r, col, local.gx[a][b]));
                    tgy.push((r, col, local.gy[a][b]));
                    tmt.push((r, col, sigma_t[c] * local.mass[a][b]));
                    tms.push((r, col, sigma_s[c] * local.mass[a][b]));
                }
            }
        }
        let mut tf = [Vec::new(), Vec::new()];
        let mut tp = [Vec::new(), Vec::new()];
        for face in &grid.faces {
            let fm = local.face(face.axis);
            let nj = face.normal[face.axis];
            match face.kind {
                FaceKind::Interior { minus, plus } => {
                    let (sm, sp) = if face.axis == 0 {
                        (Side::Right, Side::Left)
                    } else {
                        (Side::Top, Side::Bottom)
                    };
                    let lm = sm.local_nodes();
                    let lp = sp.local_nodes();
                    // (cell, node list, jump sign)
                    let sides = [(minus, lm, 1.0), (plus, lp, -1.0)];
                    for &(cv, nv, jv) in &sides {
                        for &(cu, nu, ju) in &sides {
                            for p in 0..2 {
                                for qq in 0..2 {
                                    let (row, col) = (4 * cv + nv[p], 4 * cu + nu[qq]);
                                    let m = fm[p][qq];
                                    // n_j {u}⟦v⟧
                                    tf[face.axis].push((row, col, nj * 0.5 * jv * m));
                                    // ½⟦u⟧⟦v⟧
                                    tp[face.axis].push((row, col, 0.5 * jv * ju * m));
                                }
                            }
                        }
                    }
                }
                FaceKind::Boundary { cell, side } => {
                    let ln = side.local_nodes();
                    for p in 0..2 {
                        for qq in 0..2 {
                            let (row, col) = (4 * cell + ln[p], 4 * cell + ln[qq]);
                            let m = fm[p][qq];
                            tf[face.axis].push((row, col, nj * 0.5 * m));
                            tp[face.axis].push((row, col, 0.5 * m));
                        }
                    }
                }
            }
        }
        let gx = Csr::from_triplets(n, n, &tgx);
        let gy = Csr::from_triplets(n, n, &tgy);
        let fbar_x = Csr::from_triplets(n, n, &tf[0]);
        let fbar_y = Csr::from_triplets(n, n, &tf[1]);
        let kx = gx.add(1.0, &fbar_x, 1.0);
        let ky = gy.add(1.0, &fbar_y, 1.0);
        Ok(DgOperators {
            grid: grid.clone(),
            local,
            mass: Csr::from_triplets(n, n, &tm),
            gx,
            gy,
            fbar_x,
            fbar_y,
            kx,
            ky,
            px: Csr::from_triplets(n, n, &tp[0]),
            py: Csr::from_triplets(n, n, &tp[1]),
            m_t: Csr::from_triplets(n, n, &tmt),
            m_s: Csr::from_triplets(n, n, &tms),
            sigma_t: sigma_t.to_vec(),
            sigma_s: sigma_s.to_vec(),
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.mass.rows()
    }

    /// The assembled `A(Ω)`.
    pub fn transport_matrix(&self, omega: [f64; 3]) -> Csr {
        let s = self
            .kx
            .add(omega[0], &self.ky, omega[1])
            .add(1.0, &self.px, omega[0].abs())
            .add(1.0, &self.py, omega[1].abs());
        s.add(1.0, &self.m_t, 1.0)
    }

    /// Applies `A(Ω)` without assembling it.
    pub fn apply_transport(&self, omega: [f64; 3], u: &[f64]) -> Vec<f64> {
        let mut y = self.m_t.matvec(u);
        for (m, s) in [
            (&self.kx, omega[0]),
            (&self.ky, omega[1]),
            (&self.px, omega[0].abs()),
            (&self.py, omega[1].abs()),
        ] {
            if s != 0.0 {
                let t = m.matvec(u);
                crate::dense::axpy(s, &t, &mut y);
            }
        }
        y
    }

    pub fn has_scattering(&self) -> bool {
        self.sigma_s.iter().any(|&s| s != 0.0)
    }

    /// Mass-weighted load of a per-cell constant field.
    pub fn load_cellwise(&self, f: &[f64]) -> Vec<f64> {
        self.mass.matvec(&expand_cellwise(f))
    }
}

/// Copies a per-cell value to the four DG dofs of each cell.
pub fn expand_cellwise(f: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(4 * f.len());
    for &v in f {
        out.extend_from_slice(&[v; 4]);
    }
    out
}

/// Cell means of a DG (or any 4-dof-per-cell) field.
pub fn cell_average(u: &[f64]) -> Vec<f64> {
    u.chunks_exact(4).map(|c| 0.25 * (c[0] + c[1] + c[2] + c[3])).collect()
}

/// Cells in upwind order for a direction: `j` outer, `i` inner, each
/// ascending when the matching direction component is `>= 0`.
pub fn sweep_order(grid: &Grid, omega: [f64; 3]) -> Vec<usize> {
    let mut order = Vec::with_capacity(grid.n_cells());
    let ifwd = omega[0] >= 0.0;
    let jfwd = omega[1] >= 0.0;
    for jj in 0..grid.ny {
        let j = if jfwd { jj } else { grid.ny - 1 - jj };
        for ii in 0..grid.nx {
            let i = if ifwd { ii } else { grid.nx - 1 - ii };
            order.push(grid.cell(i, j));
        }
    }
    order
}

/// Per-direction sweep data: cell ordering and the inverted local matrices.
#[derive(Clone, Debug)]
pub struct Sweeper {
    pub angles: Vec<[f64; 3]>,
    orders: Vec<Vec<usize>>,
    inv: Vec<Vec<M4>>,
}

impl Sweeper {
    pub fn new(ops: &DgOperators, angles: &[[f64; 3]]) -> Result<Sweeper> {
        let g = &ops.grid;
        let l = &ops.local;
        let per_angle: Vec<Result<(Vec<usize>, Vec<M4>)>> = par::map(angles.len(), |k| {
            let om = angles[k];
            let mut base = [[0.0; 4]; 4];
            for a in 0..4 {
                for b in 0..4 {
                    base[a][b] = om[0] * l.gx[a][b] + om[1] * l.gy[a][b];
                }
            }
            for side in Side::ALL {
                let n = side.outward_normal();
                let on = om[0] * n[0] + om[1] * n[1];
                if on > 0.0 {
                    let fm = l.face(side.axis());
                    let ln = side.local_nodes();
                    for p in 0..2 {
                        for qq in 0..2 {
                            base[ln[p]][ln[qq]] += on * fm[p][qq];
                        }
                    }
                }
            }
            let mut invs = Vec::with_capacity(g.n_cells());
            for c in 0..g.n_cells() {
                let mut a = base;
                for r in 0..4 {
                    for s in 0..4 {
                        a[r][s] += ops.sigma_t[c] * l.mass[r][s];
                    }
                }
                let inv = invert4(&a).ok_or_else(|| {
                    Error::solver(format!("sweep: singular cell matrix (angle {k}, cell {c})"), 0, 0.0)
                })?;
                invs.push(inv);
            }
            Ok((sweep_order(g, om), invs))
        });
        let mut orders = Vec::with_capacity(angles.len());
        let mut inv = Vec::with_capacity(angles.len());
        for r in per_angle {
            let (o, i) = r?;
            orders.push(o);
            inv.push(i);
        }
        Ok(Sweeper {
            angles: angles.to_vec(),
            orders,
            inv,
        })
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    /// Solves `A(Ω_k) ψ = rhs` in one upwind pass.
    pub fn sweep(&self, ops: &DgOperators, k: usize, rhs: &[f64]) -> Vec<f64> {
        let g = &ops.grid;
        let l = &ops.local;
        let om = self.angles[k];
        let mut psi = vec![0.0; rhs.len()];
        for &c in &self.orders[k] {
            let mut b = [rhs[4 * c], rhs[4 * c + 1], rhs[4 * c + 2], rhs[4 * c + 3]];
            for side in Side::ALL {
                let n = side.outward_normal();
                let on = om[0] * n[0] + om[1] * n[1];
                if on >= 0.0 {
                    continue;
                }
                let Some(nb) = g.neighbor(c, side) else {
                    continue;
                };
                let opposite = match side {
                    Side::Left => Side::Right,
                    Side::Right => Side::Left,
                    Side::Bottom => Side::Top,
                    Side::Top => Side::Bottom,
                };
                let ln = side.local_nodes();
                let lnb = opposite.local_nodes();
                let fm = l.face(side.axis());
                for p in 0..2 {
                    for qq in 0..2 {
                        b[ln[p]] += -on * fm[p][qq] * psi[4 * nb + lnb[qq]];
                    }
                }
            }
            let inv = &self.inv[k][c];
            for r in 0..4 {
                psi[4 * c + r] = inv[r][0] * b[0] + inv[r][1] * b[1] + inv[r][2] * b[2] + inv[r][3] * b[3];
            }
        }
        psi
    }
}

fn invert4(a: &M4) -> Option<M4> {
    let mut m = *a;
    let mut inv = [[0.0; 4]; 4];
    for i in 0..4 {
        inv[i][i] = 1.0;
    }
    let scale = a.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
    for k in 0..4 {
        let mut p = k;
        for i in k + 1..4 {
            if m[i][k].abs() > m[p][k].abs() {
                p = i;
            }
        }
        if !(m[p][k].abs() > 1e-14 * scale) {
            return None;
        }
        m.swap(p, k);
        inv.swap(p, k);
        let d = 1.0 / m[k][k];
        for j in 0..4 {
            m[k][j] *= d;
            inv[k][j] *= d;
        }
        for i in 0..4 {
            if i != k {
                let f = m[i][k];
                if f != 0.0 {
                    for j in 0..4 {
                        m[i][j] -= f * m[k][j];
                        inv[i][j] -= f * inv[k][j];
                    }
                }
            }
        }
    }
    Some(inv)
}

/// Diffusion synthetic acceleration operator
/// `D = ⅓ Σ_j K_jᵀ M_t⁻¹ K_j + F₀ + (M_t − M_s)`, with the jump penalty
/// `F₀ = Σ_faces κ_axis ∫⟦u⟧⟦v⟧`, `κ_axis = (1/8π) Σ_d c_d |Ω_d · n|`.
#[derive(Clone, Debug)]
pub struct Dsa {
    pub matrix: Csr,
    diag: Vec<f64>,
    pub kappa: [f64; 2],
    pub cg_tol: f64,
}

impl Dsa {
    /// `coeffs` are the closure weights of the flux reconstruction
    /// (`φ = Σ_d c_d ψ_d`) at `angles`.
    pub fn new(ops: &DgOperators, angles: &[[f64; 3]], coeffs: &[f64]) -> Result<Dsa> {
        if angles.len() != coeffs.len() {
            return Err(Error::Contract("DSA: angle and coefficient counts differ".into()));
        }
        let mut kappa = [0.0; 2];
        for (om, c) in angles.iter().zip(coeffs) {
            kappa[0] += c * om[0].abs();
            kappa[1] += c * om[1].abs();
        }
        kappa[0] /= 2.0 * FOUR_PI;
        kappa[1] /= 2.0 * FOUR_PI;
        let nc = ops.grid.n_cells();
        let n = ops.n_dofs();
        let minv_loc = invert4(&ops.local.mass).expect("element mass is SPD");
        let mut t = Vec::with_capacity(16 * nc);
        for c in 0..nc {
            for a in 0..4 {
                for b in 0..4 {
                    t.push((4 * c + a, 4 * c + b, minv_loc[a][b] / ops.sigma_t[c]));
                }
            }
        }
        let mt_inv = Csr::from_triplets(n, n, &t);
        let mut d = ops.m_t.add(1.0, &ops.m_s, -1.0);
        for k in [&ops.kx, &ops.ky] {
            let prod = k.transpose().matmul(&mt_inv.matmul(k));
            d = d.add(1.0, &prod, 1.0 / 3.0);
        }
        // P_j already carries the ½, so κ∫⟦u⟧⟦v⟧ = 2κ P_j.
        d = d.add(1.0, &ops.px, 2.0 * kappa[0]).add(1.0, &ops.py, 2.0 * kappa[1]);
        let diag = d.diagonal();
        Ok(Dsa {
            matrix: d,
            diag,
            kappa,
            cg_tol: 1e-10,
        })
    }

    /// Full-quadrature penalty.
    pub fn for_quadrature(ops: &DgOperators, q: &QuadratureSet) -> Result<Dsa> {
        Dsa::new(ops, &q.nodes, &q.weights)
    }

    /// Solves `D δφ = source`; returns `(δφ, CG iterations)`.
    pub fn solve(&self, source: &[f64]) -> Result<(Vec<f64>, usize)> {
        let n = source.len();
        let mut x = vec![0.0; n];
        let stats = pcg(
            "DSA diffusion solve",
            |v, out| self.matrix.matvec_into(v, out),
            jacobi(&self.diag),
            source,
            &mut x,
            CgOptions {
                tol: self.cg_tol,
                max_iters: 10 * n.max(1),
            },
        )?;
        Ok((x, stats.iterations))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SiOptions {
    /// Stop when `‖φ_new − φ_old‖₂ / ‖φ_new‖₂ <= tol`.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SiOptions {
    fn default() -> Self {
        SiOptions {
            tol: 1e-8,
            max_iters: 1000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SiOutcome {
    /// One DG field per sweep direction.
    pub psi: Vec<Vec<f64>>,
    /// `Σ_d c_d ψ_d` from the final sweep.
    pub phi: Vec<f64>,
    /// Number of sweeps over all directions.
    pub iterations: usize,
    pub dsa_cg_iterations: usize,
    /// Last relative change of φ.
    pub last_change: f64,
}

/// Source iteration for
/// `A(Ω_d) ψ_d = M_s φ / 4π + fixed_d`, `φ = Σ_d c_d ψ_d`.
///
/// `coeffs` are the quadrature weights for a full SN solve or the
/// collocation closure `Ŵ⁻ᵀβ`. `phi_guess` seeds the scattering source.
pub fn source_iteration(
    ops: &DgOperators,
    sweeper: &Sweeper,
    coeffs: &[f64],
    fixed: &[Vec<f64>],
    phi_guess: &[f64],
    opts: SiOptions,
    dsa: Option<&Dsa>,
) -> Result<SiOutcome> {
    let nd = sweeper.n_angles();
    let n = ops.n_dofs();
    if coeffs.len() != nd || fixed.len() != nd || phi_guess.len() != n {
        return Err(Error::Contract("source iteration: inconsistent sizes".into()));
    }
    let scattering = ops.has_scattering();
    let mut phi_old = phi_guess.to_vec();
    let mut dsa_cg = 0usize;
    let mut change = f64::INFINITY;
    for it in 1..=opts.max_iters.max(1) {
        let scat: Vec<f64> = if scattering {
            let mut s = ops.m_s.matvec(&phi_old);
            s.iter_mut().for_each(|v| *v /= FOUR_PI);
            s
        } else {
            vec![0.0; n]
        };
        let psi: Vec<Vec<f64>> = par::map(nd, |k| {
            let rhs: Vec<f64> = fixed[k].iter().zip(&scat).map(|(a, b)| a + b).collect();
            sweeper.sweep(ops, k, &rhs)
        });
        let mut phi_half = vec![0.0; n];
        for (c, p) in coeffs.iter().zip(&psi) {
            crate::dense::axpy(*c, p, &mut phi_half);
        }
        if !scattering {
            return Ok(SiOutcome {
                psi,
                phi: phi_half,
                iterations: 1,
                dsa_cg_iterations: 0,
                last_change: 0.0,
            });
        }
        let mut phi_new = phi_half.clone();
        if let Some(d) = dsa {
            let diff: Vec<f64> = phi_half.iter().zip(&phi_old).map(|(a, b)| a - b).collect();
            let src = ops.m_s.matvec(&diff);
            let (delta, cg) = d.solve(&src)?;
            dsa_cg += cg;
            crate::dense::axpy(1.0, &delta, &mut phi_new);
        }
        let num: f64 = norm2(&phi_new.iter().zip(&phi_old).map(|(a, b)| a - b).collect::<Vec<_>>());
        let den = norm2(&phi_new);
        change = if den > 0.0 { num / den } else { num };
        if !change.is_finite() {
            return Err(Error::Divergence {
                iterations: it,
                residual: change,
            });
        }
        if change <= opts.tol || den == 0.0 {
            return Ok(SiOutcome {
                psi,
                phi: phi_half,
                iterations: it,
                dsa_cg_iterations: dsa_cg,
                last_change: change,
            });
        }
        phi_old = phi_new;
    }
    Err(Error::Divergence {
        iterations: opts.max_iters,
        residual: change,
    })
}

/// Outflow `Σ_boundary ∫ max(Ω·n, 0) ψ` through the domain boundary.
pub fn boundary_outflow(ops: &DgOperators, omega: [f64; 3], psi: &[f64]) -> f64 {
    let mut s = 0.0;
    for face in &ops.grid.faces {
        if let FaceKind::Boundary { cell, side } = face.kind {
            let on = omega[0] * face.normal[0] + omega[1] * face.normal[1];
            if on > 0.0 {
                let ln = side.local_nodes();
                s += on * 0.5 * face.length * (psi[4 * cell + ln[0]] + psi[4 * cell + ln[1]]);
            }
        }
    }
    s
}

/// Solves the direction pair `(Ω, −Ω)` of a non-scattering problem through
/// its even/odd parity form instead of sweeping:
///
/// ```text
/// [H + (Ω·K)ᵀ H⁻¹ (Ω·K)] ψ⁺ = b⁺ − Ω·K H⁻¹ b⁻,   ψ⁻ = H⁻¹ (b⁻ − Ω·K ψ⁺)
/// ```
///
/// with `H = |Ω_x|P_x + |Ω_y|P_y + M_t`. Both systems are SPD and are solved
/// with conjugate gradients. Returns `(ψ(Ω), ψ(−Ω))`.
pub fn even_parity_pair(
    ops: &DgOperators,
    omega: [f64; 3],
    b_fwd: &[f64],
    b_back: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = ops.n_dofs();
    let h = ops
        .m_t
        .add(1.0, &ops.px, omega[0].abs())
        .add(1.0, &ops.py, omega[1].abs());
    let ok = ops.kx.add(omega[0], &ops.ky, omega[1]);
    let okt = ok.transpose();
    let hdiag = h.diagonal();
    let inner = CgOptions {
        tol: tol * 1e-3,
        max_iters: 20 * n,
    };
    let h_solve = |b: &[f64]| -> Result<Vec<f64>> {
        let mut x = vec![0.0; n];
        pcg("even parity: H solve", |v, o| h.matvec_into(v, o), jacobi(&hdiag), b, &mut x, inner)?;
        Ok(x)
    };
    let bp: Vec<f64> = b_fwd.iter().zip(b_back).map(|(a, b)| 0.5 * (a + b)).collect();
    let bm: Vec<f64> = b_fwd.iter().zip(b_back).map(|(a, b)| 0.5 * (a - b)).collect();
    let hbm = h_solve(&bm)?;
    let kh = ok.matvec(&hbm);
    let rhs: Vec<f64> = bp.iter().zip(&kh).map(|(a, b)| a - b).collect();
    let mut err = None;
    let mut psi_p = vec![0.0; n];
    pcg(
        "even parity: Schur solve",
        |v, out| {
            let kv = ok.matvec(v);
            let hk = match h_solve(&kv) {
                Ok(x) => x,
                Err(e) => {
                    err = Some(e);
                    vec![0.0; n]
                }
            };
            let t = okt.matvec(&hk);
            let hv = h.matvec(v);
            for i in 0..n {
                out[i] = hv[i] + t[i];
            }
        },
        jacobi(&hdiag),
        &rhs,
        &mut psi_p,
        CgOptions {
            tol,
            max_iters: 20 * n,
        },
    )?;
    if let Some(e) = err {
        return Err(e);
    }
    let kp = ok.matvec(&psi_p);
    let r: Vec<f64> = bm.iter().zip(&kp).map(|(a, b)| a - b).collect();
    let psi_m = h_solve(&r)?;
    let fwd = psi_p.iter().zip(&psi_m).map(|(a, b)| a + b).collect();
    let back = psi_p.iter().zip(&psi_m).map(|(a, b)| a - b).collect();
    Ok((fwd, back))
}

/// Options shared by the sweep-based steppers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepOptions {
    pub si: SiOptions,
    pub dsa: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            si: SiOptions::default(),
            dsa: true,
        }
    }
}

/// One backward-Euler step of full discrete ordinates. `psi0` holds one DG
/// field per quadrature node; returns the new fields and temperatures.
pub fn sn_step(
    problem: &Problem,
    psi0: &[Vec<f64>],
    t0: &[f64],
    dt: f64,
    opts: SweepOptions,
) -> Result<(Vec<Vec<f64>>, Vec<f64>, StepInfo)> {
    let q = &problem.quad;
    if psi0.len() != q.len() {
        return Err(Error::Contract("sn_step: one field per quadrature node expected".into()));
    }
    let step = problem.linearize(t0, dt)?;
    let ops = DgOperators::assemble(&problem.grid, &step.sigma_t, &step.sigma_s)?;
    let sweeper = Sweeper::new(&ops, &q.nodes)?;
    let inv_cdt = step.inv_c_dt(&problem.constants);
    let qdg = expand_cellwise(&step.q);
    let fixed: Vec<Vec<f64>> = par::map(q.len(), |d| {
        let f: Vec<f64> = qdg.iter().zip(&psi0[d]).map(|(a, b)| a + inv_cdt * b).collect();
        ops.mass.matvec(&f)
    });
    let mut guess = vec![0.0; ops.n_dofs()];
    for d in 0..q.len() {
        crate::dense::axpy(q.weights[d], &psi0[d], &mut guess);
    }
    let dsa = if opts.dsa && ops.has_scattering() {
        Some(Dsa::for_quadrature(&ops, q)?)
    } else {
        None
    };
    let out = source_iteration(&ops, &sweeper, &q.weights, &fixed, &guess, opts.si, dsa.as_ref())?;
    let phi_cells = cell_average(&out.phi);
    let t = update_temperature(&step, &phi_cells, &problem.constants);
    let leakage = (0..q.len())
        .map(|d| q.weights[d] * boundary_outflow(&ops, q.nodes[d], &out.psi[d]))
        .sum();
    let info = StepInfo {
        iterations: out.iterations,
        cg_iterations: out.dsa_cg_iterations,
        leakage,
        radiation_energy: integrate(&ops, &out.phi) / problem.constants.c,
        floor_energy: floor_energy_density(&step, &phi_cells, &t) * problem.grid.cell_area(),
        ..StepInfo::default()
    };
    Ok((out.psi, t, info))
}

/// `‖a − b‖₂ / ‖b‖₂` (or the absolute norm when `b = 0`).
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nb = norm2(b);
    if nb > 0.0 {
        norm2(&d) / nb
    } else {
        norm2(&d)
    }
}

/// Mass-weighted integral `1ᵀ M u`.
pub fn integrate(ops: &DgOperators, u: &[f64]) -> f64 {
    let ones = vec![1.0; u.len()];
    dot(&ones, &ops.mass.matvec(u))
}
