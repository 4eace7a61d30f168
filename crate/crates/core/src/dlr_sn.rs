//! SN-like dynamical low-rank step.
//!
//! One step keeps the rank fixed:
//!
//! 1. linearize emission about `T0`;
//! 2. pick `r` collocation directions by DEIM on `W0`;
//! 3. evaluate `ψ0` at those directions;
//! 4. solve the collocated transport system with sweeps and source
//!    iteration, closing the scalar flux with `φ = Ψ Ŵ⁻ᵀ β`;
//! 5. `Ψ = X R` with `X` orthonormal in the DG mass inner product;
//! 6. project `ψ0` onto the new `X`;
//! 7. solve the Galerkin row system `(A(Ω) + M_t) L = M_s L̄ / 4π + Q(Ω)`
//!    at every quadrature node;
//! 8. `L = W Sᵀ` with `W` orthonormal in the quadrature inner product;
//! 9. update the temperature from `φ = X S β`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::angular::{orthonormalize, AngularBasis, QuadratureSet, FOUR_PI};
use crate::dense::{Lu, Mat};
use crate::lowrank::{
    boundary_moments, deim_select, evaluate_rows, leakage, spatial_orthonormalize, DeimSelection,
    DlrState,
};
use crate::par;
use crate::physics::{floor_energy_density, update_temperature};
use crate::problem::{Problem, StepInfo};
use crate::sparse::Csr;
use crate::transport_sn::{
    cell_average, expand_cellwise, integrate, source_iteration, DgOperators, Dsa, SiOptions,
    Sweeper,
};
use crate::{Error, Result};

/// Which directions and weights set the DSA face penalty.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DsaPenalty {
    /// Full quadrature set.
    Quadrature,
    /// Collocation directions with the closure weights `Ŵ⁻ᵀβ`.
    Collocation,
}

/// How the row system's scattering coupling is resolved.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RowSolve {
    /// Direct reduction through `C̄ = Σ w B⁻¹`.
    Reduced,
    /// Fixed-point iteration on `L̄`; a cross-check of `Reduced`.
    FixedPoint { tol: f64, max_iters: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnDlrOptions {
    pub si: SiOptions,
    pub dsa: bool,
    pub dsa_penalty: DsaPenalty,
    pub row_solve: RowSolve,
}

impl Default for SnDlrOptions {
    fn default() -> Self {
        SnDlrOptions {
            si: SiOptions::default(),
            dsa: true,
            dsa_penalty: DsaPenalty::Quadrature,
            row_solve: RowSolve::Reduced,
        }
    }
}

/// Galerkin projections of the DG operators onto an `M`-orthonormal `X`.
#[derive(Clone, Debug)]
pub struct ProjectedOperators {
    pub kx: Mat,
    pub ky: Mat,
    pub px: Mat,
    pub py: Mat,
    pub m_t: Mat,
    pub m_s: Mat,
    /// Row `d` is `Q(Ω_d)`.
    pub q: Mat,
}

impl ProjectedOperators {
    pub fn project(ops: &DgOperators, x: &Mat, q: Mat) -> ProjectedOperators {
        ProjectedOperators {
            kx: ops.kx.project(x, x),
            ky: ops.ky.project(x, x),
            px: ops.px.project(x, x),
            py: ops.py.project(x, x),
            m_t: ops.m_t.project(x, x),
            m_s: ops.m_s.project(x, x),
            q,
        }
    }

    pub fn rank(&self) -> usize {
        self.m_t.rows()
    }

    /// `B(Ω) = Ω_x K_x + Ω_y K_y + |Ω_x| P_x + |Ω_y| P_y + M_t`.
    pub fn node_matrix(&self, omega: [f64; 3]) -> Mat {
        let mut b = self.m_t.clone();
        b.add_scaled(omega[0], &self.kx);
        b.add_scaled(omega[1], &self.ky);
        b.add_scaled(omega[0].abs(), &self.px);
        b.add_scaled(omega[1].abs(), &self.py);
        b
    }
}

/// Everything one step produced, for inspection.
#[derive(Clone, Debug)]
pub struct SnDlrWorkspace {
    pub state: DlrState,
    pub selection: DeimSelection,
    /// Converged collocation fields, one column per selected direction.
    pub psi: Mat,
    pub projected: ProjectedOperators,
    /// Gram–Schmidt factor of step 5, `Ψ = X R`.
    pub r_factor: Mat,
    pub temperature: Vec<f64>,
    pub info: StepInfo,
}

/// `L̃0 = L0 (X0ᵀ M X)`: the old state's angular coefficients against the new
/// spatial basis (`N_Ω × r`).
pub fn project_initial(old: &DlrState, x_new: &Mat, mass: &Csr) -> Mat {
    old.l().matmul(&mass.project(&old.x, x_new))
}

/// Solves `B(Ω_d) L_d = M_s L̄ / 4π + Q_d`, `L̄ = Σ_d w_d L_d`, for every
/// node. Returns `L` with row `d` holding `L(Ω_d)`.
pub fn row_solve(p: &ProjectedOperators, quad: &QuadratureSet, mode: RowSolve) -> Result<Mat> {
    let r = p.rank();
    let nd = quad.len();
    if p.q.rows() != nd || p.q.cols() != r {
        return Err(Error::Contract(format!(
            "row solve: source is {}×{}, expected {nd}×{r}",
            p.q.rows(),
            p.q.cols()
        )));
    }
    let lus: Vec<Lu> = par::try_map(nd, |d| {
        Lu::new(&p.node_matrix(quad.nodes[d])).map_err(|_| {
            Error::solver(
                format!("row solve: singular projected operator at node {d}"),
                0,
                f64::INFINITY,
            )
        })
    })?;
    let qd = |d: usize| p.q.row(d);
    let back = |lbar: &[f64]| -> Mat {
        let mut scat = p.m_s.matvec(lbar);
        scat.iter_mut().for_each(|v| *v /= FOUR_PI);
        let rows: Vec<Vec<f64>> = par::map(nd, |d| {
            let rhs: Vec<f64> = qd(d).iter().zip(&scat).map(|(a, b)| a + b).collect();
            lus[d].solve(&rhs)
        });
        Mat::from_fn(nd, r, |d, j| rows[d][j])
    };
    let lbar_of = |l: &Mat| l.tr_matvec(&quad.weights);
    match mode {
        RowSolve::Reduced => {
            let mut cbar = Mat::zeros(r, r);
            let mut zeta = vec![0.0; r];
            for d in 0..nd {
                cbar.add_scaled(quad.weights[d], &lus[d].inverse());
                crate::dense::axpy(quad.weights[d], &lus[d].solve(&qd(d)), &mut zeta);
            }
            let mut sys = cbar.matmul(&p.m_s);
            sys.scale(-1.0 / FOUR_PI);
            sys.add_scaled(1.0, &Mat::identity(r));
            let lbar = Lu::new(&sys)
                .map_err(|_| Error::solver("row solve: singular scattering closure", 0, f64::INFINITY))?
                .solve(&zeta);
            Ok(back(&lbar))
        }
        RowSolve::FixedPoint { tol, max_iters } => {
            let mut lbar = vec![0.0; r];
            let mut change = f64::INFINITY;
            for it in 1..=max_iters.max(1) {
                let l = back(&lbar);
                let next = lbar_of(&l);
                let diff: Vec<f64> = next.iter().zip(&lbar).map(|(a, b)| a - b).collect();
                let nn = crate::dense::norm2(&next);
                change = crate::dense::norm2(&diff) / if nn > 0.0 { nn } else { 1.0 };
                lbar = next;
                if change <= tol {
                    log::trace!("row fixed point converged in {it} iterations");
                    return Ok(back(&lbar));
                }
            }
            Err(Error::Divergence {
                iterations: max_iters,
                residual: change,
            })
        }
    }
}

/// Bound on `|1ᵀ R̄|`, the energy rate the row system fails to conserve.
///
/// `R̄ = Σ_d w_d R_d` is the angle-integrated residual of the full DG
/// equations at `ψ_d = X L_d`. Galerkin orthogonality gives `XᵀR̄ = 0`, so
/// `|1ᵀR̄| ≤ ‖(I − P_X)1‖_M ‖M⁻¹R̄‖_M`.
fn projection_defect(
    ops: &DgOperators,
    x: &Mat,
    l: &Mat,
    quad: &QuadratureSet,
    phi0: &[f64],
    q: &[f64],
    inv_cdt: f64,
) -> f64 {
    let r = x.cols();
    let mut moments = [vec![0.0; r], vec![0.0; r], vec![0.0; r], vec![0.0; r], vec![0.0; r]];
    for d in 0..quad.len() {
        let (w, om) = (quad.weights[d], quad.nodes[d]);
        let f = [w * om[0], w * om[1], w * om[0].abs(), w * om[1].abs(), w];
        for (m, fk) in moments.iter_mut().zip(f) {
            for j in 0..r {
                m[j] += fk * l[(d, j)];
            }
        }
    }
    let n = x.rows();
    let mut res = vec![0.0; n];
    for (op, m) in [&ops.kx, &ops.ky, &ops.px, &ops.py, &ops.m_t].into_iter().zip(&moments) {
        crate::dense::axpy(1.0, &op.matvec(&x.matvec(m)), &mut res);
    }
    crate::dense::axpy(-1.0, &ops.m_s.matvec(&x.matvec(&moments[4])), &mut res);
    let src: Vec<f64> = q.iter().zip(phi0).map(|(a, b)| FOUR_PI * a + inv_cdt * b).collect();
    crate::dense::axpy(-1.0, &ops.mass.matvec(&src), &mut res);

    let ones = vec![1.0; n];
    let c = x.tr_matvec(&ops.mass.matvec(&ones));
    let mut perp = ones;
    crate::dense::axpy(-1.0, &x.matvec(&c), &mut perp);
    let perp_norm = libm::sqrt(ops.mass.bilinear(&perp, &perp).max(0.0));
    perp_norm * libm::sqrt(dual_norm_sq(ops, &res))
}

/// `Rᵀ M⁻¹ R` with the cell-block-diagonal DG mass.
fn dual_norm_sq(ops: &DgOperators, res: &[f64]) -> f64 {
    let mut total = 0.0;
    for c in 0..ops.grid.n_cells() {
        let block = Mat::from_fn(4, 4, |a, b| ops.mass.get(4 * c + a, 4 * c + b));
        let rc = &res[4 * c..4 * c + 4];
        if let Ok(lu) = Lu::new(&block) {
            total += crate::dense::dot(rc, &lu.solve(rc));
        }
    }
    total
}

/// One SN-like DLR backward-Euler step. Returns the new state, the new
/// temperature and the step report.
pub fn sn_dlr_step(
    problem: &Problem,
    state: &DlrState,
    t0: &[f64],
    dt: f64,
    opts: SnDlrOptions,
) -> Result<(DlrState, Vec<f64>, StepInfo)> {
    let ws = sn_dlr_step_detailed(problem, state, t0, dt, opts)?;
    Ok((ws.state, ws.temperature, ws.info))
}

/// [`sn_dlr_step`] keeping the intermediate objects.
pub fn sn_dlr_step_detailed(
    problem: &Problem,
    state: &DlrState,
    t0: &[f64],
    dt: f64,
    opts: SnDlrOptions,
) -> Result<SnDlrWorkspace> {
    let quad = &problem.quad;
    let r = state.rank();
    let n = problem.grid.n_dofs();
    if state.x.rows() != n || state.w.w.rows() != quad.len() || state.x.cols() != r {
        return Err(Error::Contract("sn_dlr_step: state does not match the problem".into()));
    }

    // 1
    let step = problem.linearize(t0, dt)?;
    let ops = DgOperators::assemble(&problem.grid, &step.sigma_t, &step.sigma_s)?;
    let inv_cdt = step.inv_c_dt(&problem.constants);

    // 2, 3. DEIM runs on the principal angular modes: the points then
    // depend on ψ0 alone, not on how W0 happens to be rotated.
    let principal = state.principal();
    let sel = deim_select(&principal.w.w)?;
    let psi0 = evaluate_rows(&principal, &sel);
    let angles: Vec<[f64; 3]> = sel.indices.iter().map(|&d| quad.nodes[d]).collect();
    let closure = sel.closure(&principal.w.beta);

    // 4
    let qdg = expand_cellwise(&step.q);
    let fixed: Vec<Vec<f64>> = par::map(r, |j| {
        let f: Vec<f64> = qdg.iter().zip(psi0.col(j)).map(|(a, b)| a + inv_cdt * b).collect();
        ops.mass.matvec(&f)
    });
    let sweeper = Sweeper::new(&ops, &angles)?;
    let dsa = if opts.dsa && ops.has_scattering() {
        Some(match opts.dsa_penalty {
            DsaPenalty::Quadrature => Dsa::for_quadrature(&ops, quad)?,
            DsaPenalty::Collocation => Dsa::new(&ops, &angles, &closure)?,
        })
    } else {
        None
    };
    let guess = state.scalar_flux();
    // A handful of collocation directions need not have a diffusion limit
    // (one direction never does), so a diverging accelerated iteration falls
    // back to plain source iteration.
    let si = match source_iteration(&ops, &sweeper, &closure, &fixed, &guess, opts.si, dsa.as_ref()) {
        Err(Error::Divergence { iterations, residual }) if dsa.is_some() => {
            log::warn!(
                "DSA-accelerated collocation solve failed after {iterations} sweeps \
                 (change {residual:.3e}); retrying without acceleration"
            );
            let mut plain = source_iteration(&ops, &sweeper, &closure, &fixed, &guess, opts.si, None)?;
            plain.iterations += iterations;
            plain
        }
        other => other?,
    };
    let psi = Mat::from_columns(&si.psi);

    // 5
    let gs = spatial_orthonormalize(&psi, &ops.mass);
    let x = gs.q;

    // 6, 7
    let l0 = project_initial(state, &x, &ops.mass);
    let qx = x.tr_matvec(&ops.mass.matvec(&qdg));
    let src = Mat::from_fn(quad.len(), r, |d, i| qx[i] + inv_cdt * l0[(d, i)]);
    let projected = ProjectedOperators::project(&ops, &x, src);
    let projected_x = x.clone();
    let l = row_solve(&projected, quad, opts.row_solve)?;

    // 8
    let on = orthonormalize(&l, quad)?;
    let new_state = DlrState {
        x,
        s: on.r.transpose(),
        w: AngularBasis::new(on.basis.w, quad, false),
    };

    // 9
    let phi = new_state.scalar_flux();
    let phi_cells = cell_average(&phi);
    let temperature = update_temperature(&step, &phi_cells, &problem.constants);
    let moments = boundary_moments(&problem.grid, &new_state.x);
    let bound = dt * projection_defect(&ops, &projected_x, &l, quad, &state.scalar_flux(), &qdg, inv_cdt);
    let info = StepInfo {
        iterations: si.iterations,
        cg_iterations: si.dsa_cg_iterations,
        condition: Some(sel.condition),
        discarded: None,
        projection_bound: Some(bound),
        leakage: leakage(&moments, &l, quad),
        radiation_energy: integrate(&ops, &phi) / problem.constants.c,
        floor_energy: floor_energy_density(&step, &phi_cells, &temperature) * problem.grid.cell_area(),
    };
    log::debug!(
        "sn-dlr step: {} sweeps, {} DSA CG, cond(W_hat) {:.3e}",
        info.iterations,
        info.cg_iterations,
        sel.condition
    );
    Ok(SnDlrWorkspace {
        state: new_state,
        selection: sel,
        psi,
        projected,
        r_factor: gs.r,
        temperature,
        info,
    })
}
