use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trt_core::angular::{smooth_basis, QuadratureSet};
use trt_core::dense::Mat;
use trt_core::dlr_sn::*;
use trt_core::lowrank::{spatial_orthonormalize, DlrState};
use trt_core::mesh::{DofFlavor, Grid};
use trt_core::physics::{Constants, Material};
use trt_core::problem::Problem;
use trt_core::transport_sn::{relative_l2, DgOperators};
use trt_oracle::{dense_row_system, dense_transport_step};

fn problem(n: usize, quad: QuadratureSet, sigma_a: f64) -> Problem {
    let grid = Grid::new(n, n, [0.0, 0.0], [1.0, 1.0], DofFlavor::Discontinuous).unwrap();
    Problem {
        material_ids: vec![0; n * n],
        materials: vec![Material { sigma_a, c_v: 0.05, rho: 1.0 }],
        grid,
        quad,
        constants: Constants::default(),
    }
}

fn random_state(p: &Problem, r: usize, rng: &mut ChaCha8Rng) -> DlrState {
    let n = p.grid.n_dofs();
    let ops = DgOperators::assemble(&p.grid, &vec![1.0; p.grid.n_cells()], &vec![0.0; p.grid.n_cells()]).unwrap();
    let y = Mat::from_fn(n, r, |_, _| rng.gen_range(0.0..1.0));
    let x = spatial_orthonormalize(&y, &ops.mass).q;
    let s = Mat::from_fn(r, r, |i, j| if i == j { 2.0 / (1.0 + i as f64) } else { 0.1 * rng.gen_range(-1.0..1.0) });
    DlrState { x, s, w: smooth_basis(&p.quad, r).unwrap() }
}

#[test]
fn full_rank_matches_dense_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for sigma_a in [1.0, 100.0, 1e4] {
        let p = problem(4, QuadratureSet::new(2, 4).unwrap(), sigma_a);
        let st = random_state(&p, 8, &mut rng);
        let t0: Vec<f64> = (0..16).map(|c| 0.5 + 0.02 * c as f64).collect();
        let dt = 0.05;
        let opts = SnDlrOptions {
            si: trt_core::transport_sn::SiOptions { tol: 1e-10, max_iters: 1000 },
            ..SnDlrOptions::default()
        };
        let (next, _, _) = sn_dlr_step(&p, &st, &t0, dt, opts).unwrap();
        let step = p.linearize(&t0, dt).unwrap();
        let full = st.reconstruct();
        let psi0: Vec<Vec<f64>> = (0..8).map(|d| full.col(d).to_vec()).collect();
        let oracle = dense_transport_step(&p.grid, &p.quad, &step, &p.constants, &psi0).unwrap();
        assert!(oracle.residual < 1e-11);
        let got = next.reconstruct();
        let a: Vec<f64> = got.as_slice().to_vec();
        let b: Vec<f64> = oracle.value.concat();
        let err = relative_l2(&a, &b);
        assert!(err < 1e-9, "sigma_a {sigma_a}: {err:e}");
    }
}

#[test]
fn reduced_row_solve_matches_dense_block_and_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let q = QuadratureSet::new(2, 4).unwrap();
    let r = 3;
    let mut rnd = |n: usize, m: usize| Mat::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0));
    let mut m_t = rnd(r, r);
    m_t = m_t.tr_matmul(&m_t);
    m_t.add_scaled(5.0, &Mat::identity(r));
    let mut m_s = rnd(r, r);
    m_s = m_s.tr_matmul(&m_s);
    let kx = rnd(r, r);
    let ky = rnd(r, r);
    let px = rnd(r, r).tr_matmul(&rnd(r, r));
    let py = rnd(r, r).tr_matmul(&rnd(r, r));
    let p = ProjectedOperators { kx, ky, px, py, m_t, m_s, q: rnd(8, r) };
    let reduced = row_solve(&p, &q, RowSolve::Reduced).unwrap();
    let dense = dense_row_system(&p, &q).unwrap();
    assert!(dense.residual < 1e-11);
    assert!(reduced.sub(&dense.value).max_abs() < 1e-10 * dense.value.max_abs());
    let fp = row_solve(&p, &q, RowSolve::FixedPoint { tol: 1e-14, max_iters: 500 }).unwrap();
    assert!(fp.sub(&reduced).max_abs() < 1e-10 * reduced.max_abs());
}

#[test]
fn row_solve_scalar_case() {
    let q = QuadratureSet::new(1, 4).unwrap();
    let one = |v: f64| Mat::from_fn(1, 1, |_, _| v);
    let (mt, ms, qv) = (3.0, 2.0, 0.7);
    let p = ProjectedOperators {
        kx: one(0.0),
        ky: one(0.0),
        px: one(0.0),
        py: one(0.0),
        m_t: one(mt),
        m_s: one(ms),
        q: Mat::from_fn(4, 1, |_, _| qv),
    };
    let l = row_solve(&p, &q, RowSolve::Reduced).unwrap();
    // mt L = ms (4π L) / 4π + q
    let expect = qv / (mt - ms);
    for d in 0..4 {
        assert!((l[(d, 0)] - expect).abs() < 1e-14);
    }
}

#[test]
fn project_initial_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = problem(3, QuadratureSet::new(1, 8).unwrap(), 1.0);
    let ops = DgOperators::assemble(&p.grid, &vec![1.0; 9], &vec![0.0; 9]).unwrap();
    let st = random_state(&p, 3, &mut rng);
    let same = project_initial(&st, &st.x, &ops.mass);
    assert!(same.sub(&st.l()).max_abs() < 1e-12);

    // a basis M-orthogonal to X0
    let n = p.grid.n_dofs();
    let y = Mat::from_fn(n, 5, |_, _| rng.gen_range(-1.0..1.0));
    let both = spatial_orthonormalize(&st.x.hcat(&y), &ops.mass).q;
    let comp = Mat::from_fn(n, 3, |i, j| both[(i, 3 + j)]);
    assert!(project_initial(&st, &comp, &ops.mass).max_abs() < 1e-12);

    // dense projection of the reconstructed field
    let x_new = spatial_orthonormalize(&Mat::from_fn(n, 3, |_, _| rng.gen_range(-1.0..1.0)), &ops.mass).q;
    let dense = st.reconstruct().transpose().matmul(&ops.mass.matmul_dense(&x_new));
    assert!(project_initial(&st, &x_new, &ops.mass).sub(&dense).max_abs() < 1e-12);
}

#[test]
fn cold_vacuum_stays_dark() {
    let p = problem(3, QuadratureSet::new(1, 4).unwrap(), 2.0);
    let n = p.grid.n_dofs();
    let st = DlrState {
        x: spatial_orthonormalize(&Mat::from_fn(n, 2, |i, j| ((i + j) % 3) as f64), &DgOperators::assemble(&p.grid, &[1.0; 9], &[0.0; 9]).unwrap().mass).q,
        s: Mat::zeros(2, 2),
        w: smooth_basis(&p.quad, 2).unwrap(),
    };
    let t0 = vec![0.0; 9];
    let (next, t, info) = sn_dlr_step(&p, &st, &t0, 0.1, SnDlrOptions::default()).unwrap();
    assert_eq!(next.reconstruct().max_abs(), 0.0);
    assert!(t.iter().all(|v| *v == p.constants.t_min));
    assert_eq!(info.leakage, 0.0);
}

#[test]
fn factors_stay_orthonormal_over_many_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = problem(5, QuadratureSet::new(2, 6).unwrap(), 10.0);
    let mut st = random_state(&p, 4, &mut rng);
    let mut t: Vec<f64> = (0..25).map(|c| if c == 12 { 1.0 } else { 0.1 }).collect();
    let mass = DgOperators::assemble(&p.grid, &[1.0; 25], &[0.0; 25]).unwrap().mass;
    for _ in 0..50 {
        let (next, tn, info) = sn_dlr_step(&p, &st, &t, 0.01, SnDlrOptions::default()).unwrap();
        let (dx, dw) = next.orthonormality_defect(&mass, &p.quad);
        assert!(dx < 1e-10 && dw < 1e-10, "defects {dx:e} {dw:e}");
        assert!(info.condition.unwrap().is_finite());
        st = next;
        t = tn;
    }
}

#[test]
fn energy_defect_is_within_projection_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = problem(6, QuadratureSet::new(2, 6).unwrap(), 10.0);
    let mut st = random_state(&p, 3, &mut rng);
    let mut t: Vec<f64> = (0..36).map(|c| if c == 14 { 1.0 } else { 0.2 }).collect();
    let ops = DgOperators::assemble(&p.grid, &[1.0; 36], &[0.0; 36]).unwrap();
    let dt = 0.05;
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let e_rad = trt_core::transport_sn::integrate(&ops, &st.scalar_flux()) / p.constants.c;
        let e_mat = p.material_energy(&t);
        let (next, tn, info) = sn_dlr_step(&p, &st, &t, dt, SnDlrOptions::default()).unwrap();
        let defect = (p.material_energy(&tn) + info.radiation_energy + dt * info.leakage - e_mat - e_rad).abs();
        let bound = info.projection_bound.unwrap();
        assert!(defect <= bound * (1.0 + 1e-8) + 1e-12 * (e_mat + e_rad), "{defect:e} > {bound:e}");
        worst = worst.max(defect / (e_mat + e_rad));
        st = next;
        t = tn;
    }
    assert!(worst.is_finite());
}
