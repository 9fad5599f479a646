//! Small dense linear-algebra kernels used by the solvers and diagnostics.
//!
//! Everything here operates on symmetric matrices of moderate size (the
//! feature dimension), so plain O(d^3) routines are sufficient and keep the
//! crate free of external LAPACK bindings.

use ndarray::{Array1, Array2};

/// Cholesky factorization of a symmetric positive-definite matrix.
///
/// Returns the lower-triangular factor, or `None` when a pivot falls below
/// a relative floor (the matrix is indefinite or numerically singular).
pub fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "cholesky requires a square matrix");
    let max_diag = (0..n).map(|i| a[[i, i]].abs()).fold(0.0_f64, f64::max);
    let floor = max_diag * 1e-13;
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= floor || !s.is_finite() {
                    return None;
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Some(l)
}

/// Solve `L L^T x = b` given a lower-triangular Cholesky factor.
pub fn cholesky_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Solve a symmetric positive-definite system `A x = b`.
pub fn solve_spd(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    cholesky(a).map(|l| cholesky_solve(&l, b))
}

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
///
/// Returns `(values, vectors)` with eigenvalues in descending order and the
/// corresponding eigenvectors as columns.
pub fn sym_eig(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "sym_eig requires a square matrix");
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);
    if n <= 1 {
        return (m.diag().to_owned(), v);
    }

    let off_norm = |m: &Array2<f64>| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += m[[i, j]] * m[[i, j]];
            }
        }
        s.sqrt()
    };
    let scale: f64 = (0..n).map(|i| m[[i, i]].abs()).fold(1e-300, f64::max);
    let tol = 1e-14 * scale.max(off_norm(&m));

    for _sweep in 0..100 {
        if off_norm(&m) <= tol {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].partial_cmp(&m[[i, i]]).unwrap());
    let values = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let mut vectors = Array2::<f64>::zeros((n, n));
    for (new, &old) in order.iter().enumerate() {
        for k in 0..n {
            vectors[[k, new]] = v[[k, old]];
        }
    }
    (values, vectors)
}

/// Minimum-norm solution of a symmetric positive-semidefinite system `A x = b`
/// via eigendecomposition, dropping eigenvalues below a relative cutoff.
pub fn min_norm_solve_psd(a: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let (vals, vecs) = sym_eig(a);
    let cutoff = vals[0].abs().max(1e-300) * 1e-12;
    let mut x = Array1::<f64>::zeros(b.len());
    for (k, &lam) in vals.iter().enumerate() {
        if lam > cutoff {
            let col = vecs.column(k);
            let coef = col.dot(b) / lam;
            x.scaled_add(coef, &col);
        }
    }
    x
}

/// Largest eigenvalue of `X^T X` (the squared spectral norm of `X`),
/// estimated by deterministic power iteration.
pub fn spectral_norm_sq(x: &Array2<f64>) -> f64 {
    let d = x.ncols();
    if d == 0 || x.nrows() == 0 {
        return 0.0;
    }
    // Fixed, mildly uneven start vector so the iteration is deterministic and
    // does not begin orthogonal to the leading eigenvector in symmetric cases.
    let mut v = Array1::from_iter((0..d).map(|j| 1.0 + 1e-3 * (j as f64 + 1.0)));
    let norm = v.dot(&v).sqrt();
    v.mapv_inplace(|e| e / norm);
    let mut lam = 0.0_f64;
    for _ in 0..200 {
        let xv = x.dot(&v);
        let w = x.t().dot(&xv);
        let norm = w.dot(&w).sqrt();
        if norm <= 1e-300 {
            return 0.0;
        }
        let next = w.mapv(|e| e / norm);
        let new_lam = {
            let xn = x.dot(&next);
            xn.dot(&xn)
        };
        let done = (new_lam - lam).abs() <= 1e-10 * new_lam.max(1.0);
        lam = new_lam;
        v = next;
        if done {
            break;
        }
    }
    lam
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn cholesky_solves_small_spd_system() {
        let a = array![[4.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]];
        let b = array![1.0, 2.0, 3.0];
        let x = solve_spd(&a, &b).unwrap();
        let r = a.dot(&x) - &b;
        assert!(r.iter().all(|e| e.abs() < 1e-12));
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(cholesky(&a).is_none());
    }

    #[test]
    fn jacobi_matches_closed_form_2x2() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let (vals, vecs) = sym_eig(&a);
        assert_abs_diff_eq!(vals[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1], 1.0, epsilon = 1e-12);
        // A v = lambda v for both columns.
        for k in 0..2 {
            let v = vecs.column(k).to_owned();
            let av = a.dot(&v);
            for i in 0..2 {
                assert_abs_diff_eq!(av[i], vals[k] * v[i], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn min_norm_handles_rank_deficiency() {
        // Rank-1 system: A = u u^T with u = [1, 1].
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        let b = array![2.0, 2.0];
        let x = min_norm_solve_psd(&a, &b);
        // Any solution satisfies x0 + x1 = 2; the minimum-norm one is [1, 1].
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(x[1], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn power_iteration_matches_jacobi() {
        let x = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let gram = x.t().dot(&x);
        let (vals, _) = sym_eig(&gram);
        let lam = spectral_norm_sq(&x);
        assert_abs_diff_eq!(lam, vals[0], epsilon = 1e-6 * vals[0]);
    }
}
