use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trt_core::angular::QuadratureSet;
use trt_core::dense::Mat;
use trt_core::mesh::{DofFlavor, Grid};
use trt_core::physics::{linearize, Constants, Material};
use trt_core::transport_sn::{expand_cellwise, DgOperators, Sweeper};
use trt_oracle::*;

fn grid(n: usize) -> Grid {
    Grid::new(n, n, [0.0, 0.0], [1.0, 1.0], DofFlavor::Discontinuous).unwrap()
}

fn max_diff(a: &nalgebra::DMatrix<f64>, b: &Mat) -> f64 {
    (a - to_dmatrix(b)).abs().max()
}

#[test]
fn quadrature_assembly_matches_sparse_operators() {
    let g = grid(3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let st: Vec<f64> = (0..9).map(|_| rng.gen_range(0.5..5.0)).collect();
    let ss: Vec<f64> = st.iter().map(|s| 0.5 * s).collect();
    let dense = DenseDg::new(&g, &st, &ss).unwrap();
    let ops = DgOperators::assemble(&g, &st, &ss).unwrap();
    assert!(max_diff(&dense.mass, &ops.mass.to_dense()) < 1e-14);
    assert!(max_diff(&dense.scattering_mass(), &ops.m_s.to_dense()) < 1e-13);
    for _ in 0..6 {
        let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let mu: f64 = rng.gen_range(-1.0..1.0);
        let s = (1.0 - mu * mu).sqrt();
        let om = [s * t.cos(), s * t.sin(), mu];
        let diff = max_diff(&dense.transport(om), &ops.transport_matrix(om).to_dense());
        assert!(diff < 1e-12, "transport mismatch {diff:e}");
    }
}

#[test]
fn pure_absorber_step_matches_sweeps() {
    let g = grid(4);
    let q = QuadratureSet::new(1, 8).unwrap();
    let k = Constants::default();
    let mats = [Material { sigma_a: 3.0, c_v: 0.1, rho: 1.0 }];
    let mut step = linearize(&vec![0.5; 16], &vec![0; 16], &mats, 0.01, &k).unwrap();
    step.sigma_s.iter_mut().for_each(|s| *s = 0.0);
    let psi0: Vec<Vec<f64>> = (0..q.len())
        .map(|d| (0..64).map(|i| ((i + d) % 7) as f64 * 0.01).collect())
        .collect();
    let sol = dense_transport_step(&g, &q, &step, &k, &psi0).unwrap();
    assert!(sol.residual < 1e-11);
    let ops = DgOperators::assemble(&g, &step.sigma_t, &step.sigma_s).unwrap();
    let sw = Sweeper::new(&ops, &q.nodes).unwrap();
    let qdg = expand_cellwise(&step.q);
    for d in 0..q.len() {
        let f: Vec<f64> = qdg.iter().zip(&psi0[d]).map(|(a, b)| a + step.inv_c_dt(&k) * b).collect();
        let psi = sw.sweep(&ops, d, &ops.mass.matvec(&f));
        let err: f64 = psi.iter().zip(&sol.value[d]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale: f64 = psi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err <= 1e-11 * scale, "direction {d}: {err:e}");
    }
}

#[test]
fn zero_data_gives_zero() {
    let g = grid(2);
    let q = QuadratureSet::new(1, 4).unwrap();
    let k = Constants::default();
    let mats = [Material { sigma_a: 1.0, c_v: 0.1, rho: 1.0 }];
    let step = linearize(&[0.0; 4], &[0; 4], &mats, 0.1, &k).unwrap();
    let sol = dense_transport_step(&g, &q, &step, &k, &vec![vec![0.0; 16]; 4]).unwrap();
    assert!(sol.value.iter().flatten().all(|v| *v == 0.0));
}

#[test]
fn size_cap_is_enforced() {
    let g = grid(36);
    let q = QuadratureSet::new(1, 4).unwrap();
    let k = Constants::default();
    let mats = [Material { sigma_a: 1.0, c_v: 0.1, rho: 1.0 }];
    let step = linearize(&vec![0.1; 36 * 36], &vec![0; 36 * 36], &mats, 0.1, &k).unwrap();
    let psi0 = vec![vec![0.0; 4 * 36 * 36]; 4];
    assert!(dense_transport_step(&g, &q, &step, &k, &psi0).is_err());
}

#[test]
fn svd_basics() {
    let s = dense_svd(&Mat::identity(4)).unwrap();
    assert!(s.singular_values.iter().all(|v| (v - 1.0).abs() < 1e-14));

    let u = [1.0, 2.0, -1.0];
    let v = [3.0, 0.5];
    let a = Mat::from_fn(3, 2, |i, j| u[i] * v[j]);
    let s = dense_svd(&a).unwrap();
    let expect = (6.0f64).sqrt() * (9.25f64).sqrt();
    assert!((s.singular_values[0] - expect).abs() < 1e-12);
    assert!(s.singular_values[1].abs() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let a = Mat::from_fn(10, 6, |_, _| rng.gen_range(-1.0..1.0));
    let s = dense_svd(&a).unwrap();
    assert!(s.u.tr_matmul(&s.u).sub(&Mat::identity(6)).max_abs() < 1e-11);
    assert!(s.v.tr_matmul(&s.v).sub(&Mat::identity(6)).max_abs() < 1e-11);
    assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
    let mut us = s.u.clone();
    for j in 0..6 {
        us.col_mut(j).iter_mut().for_each(|x| *x *= s.singular_values[j]);
    }
    assert!(us.matmul(&s.v.transpose()).sub(&a).max_abs() < 1e-11);
}

#[test]
fn svd_of_rank_deficient_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let k = rng.gen_range(1..8);
        let (m, n) = if rng.gen_bool(0.5) { (16, 12) } else { (12, 16) };
        let y = Mat::from_fn(m, k, |_, _| rng.gen_range(-1.0..1.0));
        let z = Mat::from_fn(n, k, |_, _| rng.gen_range(-1.0..1.0));
        let a = y.matmul(&z.transpose());
        let s = dense_svd(&a).unwrap();
        let fro = a.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
        let sfro = s.singular_values.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((fro - sfro).abs() < 1e-12 * fro);
        let p = s.u.cols();
        assert!(s.u.tr_matmul(&s.u).sub(&Mat::identity(p)).max_abs() < 1e-10);
        assert!(s.v.tr_matmul(&s.v).sub(&Mat::identity(p)).max_abs() < 1e-10);
        let mut us = s.u.clone();
        for j in 0..p {
            us.col_mut(j).iter_mut().for_each(|x| *x *= s.singular_values[j]);
        }
        assert!(us.matmul(&s.v.transpose()).sub(&a).max_abs() < 1e-10 * fro);
    }
}
