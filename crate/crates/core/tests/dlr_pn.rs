use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trt_core::angular::{smooth_basis, AngularBasis, QuadratureSet, FOUR_PI};
use trt_core::dense::Mat;
use trt_core::dlr_pn::*;
use trt_core::lowrank::{spatial_orthonormalize, DlrState};
use trt_core::mesh::{DofFlavor, Grid};
use trt_core::physics::{planck, Constants, Material};
use trt_core::problem::Problem;
use trt_oracle::{dense_galerkin_coupling, to_dmatrix, DenseCg};

fn problem(n: usize, extent: f64, quad: QuadratureSet, sigma_a: f64) -> Problem {
    let grid = Grid::new(n, n, [0.0, 0.0], [extent, extent], DofFlavor::Continuous).unwrap();
    Problem {
        material_ids: vec![0; n * n],
        materials: vec![Material { sigma_a, c_v: 0.05, rho: 1.0 }],
        grid,
        quad,
        constants: Constants::default(),
    }
}

fn mass(p: &Problem) -> trt_core::sparse::Csr {
    let nc = p.grid.n_cells();
    CgOperators::assemble(&p.grid, &vec![1.0; nc], &vec![0.0; nc]).unwrap().mass
}

fn random_state(p: &Problem, r: usize, rng: &mut ChaCha8Rng) -> DlrState {
    let n = p.grid.n_dofs();
    let y = Mat::from_fn(n, r, |_, _| rng.gen_range(0.0..1.0));
    let x = spatial_orthonormalize(&y, &mass(p)).q;
    let s = Mat::from_fn(r, r, |i, j| if i == j { 2.0 / (1.0 + i as f64) } else { 0.1 * rng.gen_range(-1.0..1.0) });
    DlrState { x, s, w: smooth_basis(&p.quad, r).unwrap() }
}

fn hot_spot(p: &Problem) -> Vec<f64> {
    let n = p.grid.n_cells();
    (0..n).map(|c| if c == n / 2 { 1.0 } else { 0.2 }).collect()
}

#[test]
fn zero_data_stays_zero() {
    let p = problem(3, 1.0, QuadratureSet::new(2, 4).unwrap(), 2.0);
    let n = p.grid.n_dofs();
    let st = DlrState {
        x: spatial_orthonormalize(&Mat::from_fn(n, 3, |i, j| ((i * 7 + j) % 5) as f64), &mass(&p)).q,
        s: Mat::zeros(3, 3),
        w: smooth_basis(&p.quad, 3).unwrap(),
    };
    let (next, t, info) = pn_dlr_step(&p, &st, &vec![0.0; 9], 0.1, PnDlrOptions::default()).unwrap();
    assert_eq!(next.reconstruct().max_abs(), 0.0);
    assert!(t.iter().all(|v| *v == p.constants.t_min));
    assert_eq!(info.leakage, 0.0);
}

#[test]
fn rank_one_stays_isotropic() {
    let p = problem(4, 1.0, QuadratureSet::new(2, 8).unwrap(), 5.0);
    let w = smooth_basis(&p.quad, 1).unwrap();
    let f: Vec<f64> = (0..p.grid.n_dofs()).map(|i| 0.1 + (i % 3) as f64).collect();
    let mut st = DlrState::isotropic(&f, &mass(&p), &w).unwrap();
    let mut t = hot_spot(&p);
    for _ in 0..3 {
        let (next, tn, _) = pn_dlr_step(&p, &st, &t, 0.05, PnDlrOptions::default()).unwrap();
        let psi = next.reconstruct();
        for i in 0..psi.rows() {
            let row = psi.row(i);
            let spread = row.iter().fold(f64::MIN, |m, v| m.max(*v)) - row.iter().fold(f64::MAX, |m, v| m.min(*v));
            assert_eq!(spread, 0.0);
        }
        st = next;
        t = tn;
    }
}

#[test]
fn parity_blocks_are_positive_definite() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = problem(4, 1.0, QuadratureSet::new(2, 6).unwrap(), 3.0);
    let st = random_state(&p, 5, &mut rng);
    let nc = p.grid.n_cells();
    let sig_t: Vec<f64> = (0..nc).map(|_| rng.gen_range(1.0..100.0)).collect();
    let sig_s: Vec<f64> = sig_t.iter().map(|s| s * rng.gen_range(0.0..0.999)).collect();
    let ops = CgOperators::assemble(&p.grid, &sig_t, &sig_s).unwrap();
    let parity = ParityBasis::new(&st.w, &p.quad).unwrap();
    let c = PnCoefficients::new(&parity, &p.quad);
    for block in [ParityBlock::even(&ops, &c), ParityBlock::odd(&ops, &c)] {
        let m = block.channels();
        assert!(m > 0);
        for _ in 0..20 {
            let v = Mat::from_fn(ops.n_dofs(), m, |_, _| rng.gen_range(-1.0..1.0));
            let av = block.apply(&v);
            let vav: f64 = v.as_slice().iter().zip(av.as_slice()).map(|(a, b)| a * b).sum();
            assert!(vav > 0.0);
        }
        // symmetric
        let u = Mat::from_fn(ops.n_dofs(), m, |_, _| rng.gen_range(-1.0..1.0));
        let v = Mat::from_fn(ops.n_dofs(), m, |_, _| rng.gen_range(-1.0..1.0));
        let uav: f64 = u.as_slice().iter().zip(block.apply(&v).as_slice()).map(|(a, b)| a * b).sum();
        let vau: f64 = v.as_slice().iter().zip(block.apply(&u).as_slice()).map(|(a, b)| a * b).sum();
        assert!((uav - vau).abs() < 1e-12 * uav.abs().max(1.0));
    }
}

#[test]
fn rank_one_even_block_is_diffusion() {
    // with only the constant, A = 1/3 (degree-2 exactness)
    let q = QuadratureSet::new(4, 8).unwrap();
    let grid = Grid::new(4, 3, [0.0, 0.0], [1.0, 0.75], DofFlavor::Continuous).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let sig_t: Vec<f64> = (0..12).map(|_| rng.gen_range(1.0..10.0)).collect();
    let sig_s: Vec<f64> = sig_t.iter().map(|s| 0.5 * s).collect();
    let ops = CgOperators::assemble(&grid, &sig_t, &sig_s).unwrap();
    let w = smooth_basis(&q, 1).unwrap();
    let parity = ParityBasis::new(&w, &q).unwrap();
    assert_eq!(parity.odd.cols(), 0);
    let c = PnCoefficients::new(&parity, &q);
    assert!((c.a_even[0][(0, 0)] - 1.0 / 3.0).abs() < 1e-12);
    assert!(c.a_even[1][(0, 0)].abs() < 1e-12);
    let bx = c.beta_even[0][(0, 0)];
    assert!((bx - c.beta_even[1][(0, 0)]).abs() < 1e-12);
    let block = ParityBlock::even(&ops, &c);
    let n = ops.n_dofs();
    let dense = Mat::from_fn(n, n, |i, j| {
        let e = Mat::from_fn(n, 1, |k, _| if k == j { 1.0 } else { 0.0 });
        block.apply(&e)[(i, 0)]
    });
    let oracle = DenseCg::new(&grid, &sig_t, &sig_s).unwrap().diffusion(bx);
    assert!((to_dmatrix(&dense) - oracle).abs().max() < 1e-12);
}

#[test]
fn first_order_operator_matches_quadrature_assembly() {
    let grid = Grid::new(3, 2, [0.0, 0.0], [1.5, 1.0], DofFlavor::Continuous).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let sig_t: Vec<f64> = (0..6).map(|_| rng.gen_range(1.0..10.0)).collect();
    let sig_s: Vec<f64> = sig_t.iter().map(|s| 0.3 * s).collect();
    let ops = CgOperators::assemble(&grid, &sig_t, &sig_s).unwrap();
    let dense = DenseCg::new(&grid, &sig_t, &sig_s).unwrap();
    assert!((to_dmatrix(&ops.mass.to_dense()) - &dense.mass).abs().max() < 1e-14);
    assert!((to_dmatrix(&ops.m_s.to_dense()) - dense.scattering_mass()).abs().max() < 1e-13);
    for _ in 0..5 {
        let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let mu: f64 = rng.gen_range(-1.0..1.0);
        let s = (1.0 - mu * mu).sqrt();
        let om = [s * t.cos(), s * t.sin(), mu];
        let diff = (to_dmatrix(&ops.transport_matrix(om).to_dense()) - dense.transport(om)).abs().max();
        assert!(diff < 1e-12, "{diff:e}");
    }
}

#[test]
fn s_step_matches_dense_galerkin_projection() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = problem(2, 1.0, QuadratureSet::new(2, 4).unwrap(), 4.0);
    let st = random_state(&p, 2, &mut rng);
    let t0: Vec<f64> = (0..4).map(|c| 0.4 + 0.1 * c as f64).collect();
    let step = p.linearize(&t0, 0.02).unwrap();
    let inv = step.inv_c_dt(&p.constants);
    let ops = CgOperators::assemble(&p.grid, &step.sigma_t, &step.sigma_s).unwrap();
    let proj = project_first_order(&ops, &st.x, &st.l(), &step.q, inv);
    let s = s_step(&proj, &st.w, &p.quad, 64).unwrap();

    let psi0 = st.reconstruct();
    let load = ops.load_cellwise(&step.q);
    let rhs: Vec<Vec<f64>> = (0..p.quad.len())
        .map(|d| {
            let m = ops.mass.matvec(psi0.col(d));
            load.iter().zip(&m).map(|(a, b)| a + inv * b).collect()
        })
        .collect();
    let cg = DenseCg::new(&p.grid, &step.sigma_t, &step.sigma_s).unwrap();
    let oracle = dense_galerkin_coupling(&cg, &p.quad, &st.x, &st.w.w, &rhs).unwrap();
    assert!(oracle.residual < 1e-11);
    let err = s.sub(&oracle.value).max_abs() / oracle.value.max_abs();
    assert!(err < 1e-10, "{err:e}");
}

#[test]
fn s_step_scalar_case() {
    // r = 1, constant basis, one node-free check: (mt − ms) S = xq √4π + S0/(cΔt)
    let q = QuadratureSet::new(2, 4).unwrap();
    let w = smooth_basis(&q, 1).unwrap();
    let one = |v: f64| Mat::from_fn(1, 1, |_, _| v);
    let (mt, ms, xq, l0, inv) = (5.0, 3.0, 0.4, 0.7, 2.0);
    let p = trt_core::dlr_sn::ProjectedOperators {
        kx: one(0.0),
        ky: one(0.0),
        px: one(0.0),
        py: one(0.0),
        m_t: one(mt),
        m_s: one(ms),
        q: Mat::from_fn(q.len(), 1, |_, _| xq + inv * l0),
    };
    let s = s_step(&p, &w, &q, 64).unwrap();
    // L0 = W S0ᵀ with W = 1/√4π gives S0 = √4π l0
    let expect = (xq * FOUR_PI.sqrt() + inv * FOUR_PI.sqrt() * l0) / (mt - ms);
    assert!((s[(0, 0)] - expect).abs() < 1e-12 * expect);
}

#[test]
fn uniform_equilibrium_is_preserved() {
    // one huge thick cell: boundary loss (∝ L) is negligible next to the
    // pseudo-absorption (∝ L²), which is small because σ_s ≈ σ
    let p = problem(1, 1e7, QuadratureSet::new(2, 4).unwrap(), 1e4);
    let t0 = vec![0.5];
    let (b, _) = planck(0.5, &p.constants).unwrap();
    let w = smooth_basis(&p.quad, 2).unwrap();
    let st = DlrState::isotropic(&vec![b; 4], &mass(&p), &w).unwrap();
    let ws = pn_dlr_step_detailed(&p, &st, &t0, 0.1, PnDlrOptions::default()).unwrap();
    for v in &ws.phi {
        assert!((v / (FOUR_PI * b) - 1.0).abs() < 1e-6, "{v} vs {}", FOUR_PI * b);
    }
    assert!((ws.temperature[0] - 0.5).abs() < 1e-6);
}

#[test]
fn step_conserves_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = problem(5, 1.0, QuadratureSet::new(2, 6).unwrap(), 20.0);
    let mut st = random_state(&p, 4, &mut rng);
    let mut t = hot_spot(&p);
    let ops0 = CgOperators::assemble(&p.grid, &vec![1.0; 25], &vec![0.0; 25]).unwrap();
    let dt = 0.02;
    for _ in 0..5 {
        let e_mat0 = p.material_energy(&t);
        let e_rad0 = ops0.integrate(&st.scalar_flux()) / p.constants.c;
        let (next, tn, info) = pn_dlr_step(&p, &st, &t, dt, PnDlrOptions::default()).unwrap();
        let e_mat = p.material_energy(&tn);
        let e_rad = ops0.integrate(&next.scalar_flux()) / p.constants.c;
        assert!((e_rad - info.radiation_energy).abs() < 1e-9 * e_rad);
        let resid = (e_mat - e_mat0) + (e_rad - e_rad0) + dt * info.leakage;
        assert!(resid.abs() < 1e-8 * (e_mat + e_rad), "residual {resid:e}");
        st = next;
        t = tn;
    }
}

#[test]
fn factors_stay_orthonormal_and_pinned() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let p = problem(5, 1.0, QuadratureSet::new(2, 6).unwrap(), 10.0);
    let mut st = random_state(&p, 4, &mut rng);
    let mut t = hot_spot(&p);
    let m = mass(&p);
    let c = 1.0 / FOUR_PI.sqrt();
    for _ in 0..30 {
        let (next, tn, info) = pn_dlr_step(&p, &st, &t, 0.01, PnDlrOptions::default()).unwrap();
        let (dx, dw) = next.orthonormality_defect(&m, &p.quad);
        assert!(dx < 1e-10 && dw < 1e-10, "defects {dx:e} {dw:e}");
        assert!(next.w.constant_pinned);
        assert!(next.w.w.col(0).iter().all(|v| (v - c).abs() < 1e-14));
        assert!(info.discarded.unwrap().is_finite());
        st = next;
        t = tn;
    }
}

#[test]
fn unpinned_basis_is_rejected() {
    let p = problem(2, 1.0, QuadratureSet::new(1, 4).unwrap(), 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut st = random_state(&p, 2, &mut rng);
    let w = st.w.w.clone();
    st.w = AngularBasis::new(Mat::from_fn(4, 2, |d, j| w[(d, 1 - j)]), &p.quad, false);
    assert!(pn_dlr_step(&p, &st, &[0.3; 4], 0.1, PnDlrOptions::default()).is_err());
}
