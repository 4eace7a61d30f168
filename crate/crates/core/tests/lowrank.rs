use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trt_core::angular::{orthonormalize, smooth_basis, QuadratureSet, FOUR_PI};
use trt_core::dense::{cholesky, Mat};
use trt_core::lowrank::*;
use trt_core::mesh::{DofFlavor, Grid};
use trt_core::sparse::Csr;
use trt_core::transport_sn::DgOperators;
use trt_oracle::dense_svd;

fn dg_mass(n: usize) -> Csr {
    let g = Grid::new(n, n, [0.0, 0.0], [1.0, 1.0], DofFlavor::Discontinuous).unwrap();
    DgOperators::assemble(&g, &vec![1.0; n * n], &vec![0.0; n * n]).unwrap().mass
}

fn rnd(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

fn random_state(rng: &mut ChaCha8Rng, mass: &Csr, q: &QuadratureSet, r: usize) -> DlrState {
    let n = mass.rows();
    let x = spatial_orthonormalize(&rnd(rng, n, r), mass).q;
    let w = orthonormalize(&rnd(rng, q.len(), r), q).unwrap().basis;
    DlrState { x, s: rnd(rng, r, r), w }
}

/// `Lᵀ A D^{1/2}` with `M = L Lᵀ`: plain Frobenius/SVD in these coordinates
/// is the weighted one.
fn weighted_coordinates(a: &Mat, mass: &Csr, q: &QuadratureSet) -> Mat {
    let l = cholesky(&mass.to_dense()).unwrap();
    let la = l.transpose().matmul(a);
    Mat::from_fn(la.rows(), la.cols(), |i, d| la[(i, d)] * q.weights[d].sqrt())
}

#[test]
fn eckart_young_against_dense_svd() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mass = dg_mass(2);
    let q = QuadratureSet::new(2, 6).unwrap();
    for trial in 0..50 {
        let r = 1 + trial % 4;
        let y = rnd(&mut rng, mass.rows(), 2 * r);
        let z = rnd(&mut rng, q.len(), 2 * r);
        let psi = y.matmul(&z.transpose());
        let t = svd_truncate(&y, &z, r, &mass, &q).unwrap();
        let err = weighted_frobenius(&psi.sub(&t.state.reconstruct()), &mass, &q);

        let wc = weighted_coordinates(&psi, &mass, &q);
        let dense = dense_svd(&wc).unwrap();
        let tail: f64 = dense.singular_values[r..].iter().map(|s| s * s).sum::<f64>().sqrt();
        let scale = dense.singular_values[0];
        assert!((err - tail).abs() < 1e-10 * scale, "trial {trial}: {err} vs {tail}");
        assert!((t.discarded - tail).abs() < 1e-10 * scale);
        for (a, b) in t.singular_values.iter().zip(&dense.singular_values) {
            assert!((a - b).abs() < 1e-10 * scale);
        }
        let (dx, dw) = t.state.orthonormality_defect(&mass, &q);
        assert!(dx < 1e-10 && dw < 1e-10);
    }
}

#[test]
fn truncation_is_idempotent_at_fixed_rank() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mass = dg_mass(2);
    let q = QuadratureSet::new(2, 4).unwrap();
    let st = random_state(&mut rng, &mass, &q, 3);
    let t = svd_truncate(&st.k(), &st.w.w, 3, &mass, &q).unwrap();
    let diff = weighted_frobenius(&st.reconstruct().sub(&t.state.reconstruct()), &mass, &q);
    assert!(diff < 1e-12 * weighted_frobenius(&st.reconstruct(), &mass, &q));
}

#[test]
fn truncation_accepts_more_columns_than_nodes() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mass = dg_mass(2);
    let q = QuadratureSet::new(1, 4).unwrap();
    let y = rnd(&mut rng, 16, 7);
    let z = rnd(&mut rng, 4, 7);
    let psi = y.matmul(&z.transpose());
    let t = svd_truncate(&y, &z, 4, &mass, &q).unwrap();
    assert!(weighted_frobenius(&psi.sub(&t.state.reconstruct()), &mass, &q) < 1e-12 * psi.max_abs());
    assert!(svd_truncate(&y, &z, 5, &mass, &q).is_err());
}

#[test]
fn deim_reproduces_span() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let q = QuadratureSet::new(4, 8).unwrap();
    assert_eq!(q.len(), 32);
    for _ in 0..100 {
        let r = rng.gen_range(1..=8);
        let w = orthonormalize(&rnd(&mut rng, 32, r), &q).unwrap().basis.w;
        let sel = deim_select(&w).unwrap();
        assert!(sel.condition.is_finite());
        let coef: Vec<f64> = (0..r).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g = w.matvec(&coef);
        let c = sel.interpolate(&sel.indices.iter().map(|&d| g[d]).collect::<Vec<_>>());
        let back = w.matvec(&c);
        let err = back.iter().zip(&g).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-10, "{err:e}");
    }
}

#[test]
fn two_factor_combination_matches_four_terms() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let mass = dg_mass(2);
    let q = QuadratureSet::new(2, 6).unwrap();
    let r = 3;
    let old = random_state(&mut rng, &mass, &q, r);
    // W0 itself, and a larger basis containing it
    let wider = orthonormalize(&old.w.w.hcat(&rnd(&mut rng, q.len(), 2)), &q).unwrap().basis.w;
    for v in [old.w.w.clone(), wider] {
        let k = rnd(&mut rng, 16, v.cols());
        let l = rnd(&mut rng, q.len(), r);
        let s = rnd(&mut rng, r, r);
        let (y, z) = combine_rank_2r(&old, &v, &k, &l, &s, &q).unwrap();
        let k0 = old.reconstruct().matmul(&Mat::from_fn(q.len(), v.cols(), |d, j| q.weights[d] * v[(d, j)]));
        let four = recombine(
            &old.reconstruct(),
            &old.x,
            &old.w.w,
            &v,
            &k.sub(&k0),
            &l.sub(&old.l()),
            &s.sub(&old.s),
        );
        let diff = y.matmul(&z.transpose()).sub(&four).max_abs();
        assert!(diff < 1e-12 * four.max_abs(), "{diff:e}");
    }
}

/// Orthonormal factor paths `t ↦ GS(A + tB)`.
struct Path {
    xa: Mat,
    xb: Mat,
    sa: Mat,
    sb: Mat,
    wa: Mat,
    wb: Mat,
}

impl Path {
    fn at(&self, t: f64, mass: &Csr, q: &QuadratureSet) -> DlrState {
        let lin = |a: &Mat, b: &Mat| {
            let mut m = a.clone();
            m.add_scaled(t, b);
            m
        };
        DlrState {
            x: spatial_orthonormalize(&lin(&self.xa, &self.xb), mass).q,
            s: lin(&self.sa, &self.sb),
            w: orthonormalize(&lin(&self.wa, &self.wb), q).unwrap().basis,
        }
    }
}

#[test]
fn time_derivative_recombination() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let mass = dg_mass(2);
    let q = QuadratureSet::new(2, 6).unwrap();
    let (n, nd, h) = (16, q.len(), 1e-6);
    for r in [1, 2, 4] {
        let p = Path {
            xa: rnd(&mut rng, n, r),
            xb: rnd(&mut rng, n, r),
            sa: rnd(&mut rng, r, r),
            sb: rnd(&mut rng, r, r),
            wa: rnd(&mut rng, nd, r),
            wb: rnd(&mut rng, nd, r),
        };
        let (plus, mid, minus) = (p.at(h, &mass, &q), p.at(0.0, &mass, &q), p.at(-h, &mass, &q));
        let fd = |a: &Mat, b: &Mat| {
            let mut d = a.sub(b);
            d.scale(0.5 / h);
            d
        };
        // factor derivatives, then ψ̇ = Ẋ S Wᵀ + X Ṡ Wᵀ + X S Ẇᵀ
        let (xd, sd, wd) = (fd(&plus.x, &minus.x), fd(&plus.s, &minus.s), fd(&plus.w.w, &minus.w.w));
        let mut psi_dot = xd.matmul(&mid.s).matmul(&mid.w.w.transpose());
        psi_dot.add_scaled(1.0, &mid.x.matmul(&sd).matmul(&mid.w.w.transpose()));
        psi_dot.add_scaled(1.0, &mid.x.matmul(&mid.s).matmul(&wd.transpose()));

        let dw = Mat::from_fn(nd, r, |d, j| q.weights[d] * mid.w.w[(d, j)]);
        let k_dot = psi_dot.matmul(&dw);
        let l_dot = psi_dot.transpose().matmul(&mass.matmul_dense(&mid.x));
        let s_dot = mid.x.transpose().matmul(&mass.matmul_dense(&psi_dot)).matmul(&dw);
        let rebuilt = recombine(&Mat::zeros(n, nd), &mid.x, &mid.w.w, &mid.w.w, &k_dot, &l_dot, &s_dot);

        let direct = fd(&plus.reconstruct(), &minus.reconstruct());
        let err = rebuilt.sub(&direct).max_abs() / direct.max_abs();
        assert!(err < 1e-8, "r = {r}: {err:e}");
    }
}

#[test]
fn pinned_truncation_keeps_constant_channel() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let mass = dg_mass(2);
    let q = QuadratureSet::new(2, 4).unwrap();
    let c = 1.0 / FOUR_PI.sqrt();
    for (k, r) in [(6, 3), (9, 4), (3, 3), (4, 1)] {
        let y = rnd(&mut rng, 16, k);
        let z = rnd(&mut rng, q.len(), k);
        let psi = y.matmul(&z.transpose());
        let t = pinned_truncate(&y, &z, r, &mass, &q, None).unwrap();
        assert!(t.state.w.constant_pinned);
        assert!(t.state.w.w.col(0).iter().all(|v| (v - c).abs() < 1e-14));
        let (dx, dw) = t.state.orthonormality_defect(&mass, &q);
        assert!(dx < 1e-10 && dw < 1e-10);
        // scalar flux untouched by the rounding
        let phi: Vec<f64> = (0..16).map(|i| (0..q.len()).map(|d| q.weights[d] * psi[(i, d)]).sum()).collect();
        let got = t.state.scalar_flux();
        for (a, b) in got.iter().zip(&phi) {
            assert!((a - b).abs() < 1e-12 * phi.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        }
        // the remainder is rounded optimally
        let err = weighted_frobenius(&psi.sub(&t.state.reconstruct()), &mass, &q);
        assert!((err - t.discarded).abs() < 1e-10 * psi.max_abs(), "{k} {r}: {err} {} {:?}", t.discarded, t.singular_values);
    }
}

#[test]
fn pinned_truncation_override_sets_constant_channel() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    let mass = dg_mass(2);
    let q = QuadratureSet::new(2, 4).unwrap();
    let y = rnd(&mut rng, 16, 4);
    let z = rnd(&mut rng, q.len(), 4);
    let kc: Vec<f64> = (0..16).map(|i| i as f64 * 0.1).collect();
    let t = pinned_truncate(&y, &z, 3, &mass, &q, Some(&kc)).unwrap();
    let phi = t.state.scalar_flux();
    for i in 0..16 {
        assert!((phi[i] - FOUR_PI.sqrt() * kc[i]).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn projected_streaming_is_skew(seed in 0u64..1000, r in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Grid::new(3, 3, [0.0, 0.0], [1.0, 1.0], DofFlavor::Discontinuous).unwrap();
        let ops = DgOperators::assemble(&g, &[1.0; 9], &[0.0; 9]).unwrap();
        let x = spatial_orthonormalize(&rnd(&mut rng, 36, r), &ops.mass).q;
        for k in [&ops.kx, &ops.ky] {
            let p = k.project(&x, &x);
            let mut sum = p.transpose();
            sum.add_scaled(1.0, &p);
            let skew = sum.max_abs();
            prop_assert!(skew < 1e-12);
        }
    }

    #[test]
    fn smooth_basis_is_orthonormal_and_pinned(np in 1usize..4, half in 1usize..5, r in 1usize..8) {
        let q = QuadratureSet::new(np, 2 * half).unwrap();
        prop_assume!(r <= q.len());
        if let Ok(b) = smooth_basis(&q, r) {
            prop_assert!(b.orthonormality_defect(&q) < 1e-10);
            prop_assert!(b.constant_pinned);
        }
    }

    #[test]
    fn deim_is_permutation_covariant(seed in 0u64..1000, r in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = QuadratureSet::new(2, 8).unwrap();
        let w = orthonormalize(&rnd(&mut rng, q.len(), r), &q).unwrap().basis.w;
        let mut perm: Vec<usize> = (0..q.len()).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        // row i of the permuted basis is row perm[i] of the original
        let wp = w.select_rows(&perm);
        let a = deim_select(&w).unwrap();
        let b = deim_select(&wp).unwrap();
        let mapped: Vec<usize> = b.indices.iter().map(|&i| perm[i]).collect();
        prop_assert_eq!(mapped, a.indices);
    }
}
