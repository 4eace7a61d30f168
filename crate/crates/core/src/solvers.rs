//! Preconditioned conjugate gradients for the SPD systems (DSA diffusion,
//! even-parity K step).

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::dense::{axpy, dot, norm2};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOptions {
    /// Relative residual target `‖b − Ax‖ / ‖b‖`.
    pub tol: f64,
    pub max_iters: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `A x = b` with `x` holding the initial guess on entry.
///
/// `apply(v, out)` writes `A v`; `precond(r, out)` writes `P⁻¹ r`.
pub fn pcg(
    what: &str,
    mut apply: impl FnMut(&[f64], &mut [f64]),
    mut precond: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    opts: CgOptions,
) -> Result<CgStats> {
    let n = b.len();
    if x.len() != n {
        return Err(Error::Contract("pcg: initial guess length differs from rhs".into()));
    }
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut rel = norm2(&r) / bnorm;
    if rel <= opts.tol {
        return Ok(CgStats {
            iterations: 0,
            relative_residual: rel,
        });
    }
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut history = Vec::new();
    for it in 1..=opts.max_iters {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Solver {
                what: fail_label(what, "operator not positive definite along search direction"),
                iterations: it,
                residual: rel,
                history,
            });
        }
        let alpha = rz / pap;
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        rel = norm2(&r) / bnorm;
        history.push(rel);
        if rel <= opts.tol {
            return Ok(CgStats {
                iterations: it,
                relative_residual: rel,
            });
        }
        if !rel.is_finite() {
            break;
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Solver {
        what: fail_label(what, "conjugate gradient did not converge"),
        iterations: history.len(),
        residual: rel,
        history,
    })
}

fn fail_label(what: &str, why: &str) -> String {
    let mut s = String::from(what);
    s.push_str(": ");
    s.push_str(why);
    s
}

/// Diagonal (Jacobi) preconditioner.
pub fn jacobi(diag: &[f64]) -> impl FnMut(&[f64], &mut [f64]) + '_ {
    move |r, z| {
        for i in 0..r.len() {
            z[i] = r[i] / diag[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::Csr;

    fn laplacian_1d(n: usize) -> Csr {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + 0.01 * i as f64));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        Csr::from_triplets(n, n, &t)
    }

    #[test]
    fn pcg_solves_spd() {
        let a = laplacian_1d(50);
        let b: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut x = vec![0.0; 50];
        let d = a.diagonal();
        let stats = pcg(
            "test",
            |v, out| a.matvec_into(v, out),
            jacobi(&d),
            &b,
            &mut x,
            CgOptions {
                tol: 1e-12,
                max_iters: 500,
            },
        )
        .unwrap();
        assert!(stats.iterations <= 50);
        let r = a.matvec(&x);
        for i in 0..50 {
            assert!((r[i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn pcg_reports_history_on_failure() {
        let a = laplacian_1d(50);
        let b = vec![1.0; 50];
        let mut x = vec![0.0; 50];
        let err = pcg(
            "capped",
            |v, out| a.matvec_into(v, out),
            |r, z| z.copy_from_slice(r),
            &b,
            &mut x,
            CgOptions {
                tol: 1e-14,
                max_iters: 3,
            },
        )
        .unwrap_err();
        match err {
            Error::Solver { history, .. } => assert_eq!(history.len(), 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
