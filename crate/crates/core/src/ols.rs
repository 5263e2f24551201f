//! Ordinary least squares via the normal equations, shared by the
//! hedge-network weight solve and the polynomial regressions.
//!
//! The design matrices here are tall and very narrow (tens of thousands of
//! rows, at most a few dozen columns), so forming `X^T X` explicitly and
//! decomposing the small Gram matrix is both the fastest and the most
//! predictable route. A symmetric eigendecomposition with a relative
//! eigenvalue cutoff handles rank-deficient systems — duplicate strikes, or
//! a degenerate grid where every path carries the same spot — by returning
//! the minimum-norm solution instead of an arbitrary point on the solution
//! manifold, which keeps repeated solves deterministic and bounded. A
//! Cholesky factorisation would be marginally cheaper on full-rank systems
//! but silently yields garbage-norm solutions on semi-definite ones, so it
//! is deliberately not used.

use nalgebra::{DMatrix, DVector};

use crate::error::{numerical, Result};

/// Relative eigenvalue cutoff below which a Gram-matrix direction is treated
/// as null in the pseudo-inverse.
const RANK_TOL: f64 = 1e-12;

/// Solve `min_w ||y - X w||_2` through the normal equations, without an
/// intercept. Returns the minimum-norm solution when `X` is rank deficient:
/// `pinv(X^T X) X^T y` — the null space of `X^T X` equals that of `X`, so
/// this is the least-squares solution of minimal norm.
pub(crate) fn solve_least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    debug_assert_eq!(x.nrows(), y.len());
    let gram = x.tr_mul(x);
    let rhs = x.tr_mul(y);
    let eig = gram.symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if !max_ev.is_finite() {
        return Err(numerical("least squares: Gram matrix contains non-finite entries"));
    }
    let cut = RANK_TOL * max_ev.max(f64::MIN_POSITIVE);
    let p = eig.eigenvalues.len();
    let mut w = DVector::zeros(p);
    for i in 0..p {
        let ev = eig.eigenvalues[i];
        if ev.abs() > cut {
            let vi = eig.eigenvectors.column(i);
            w += vi * (vi.dot(&rhs) / ev);
        }
    }
    if w.iter().all(|v| v.is_finite()) {
        Ok(w)
    } else {
        Err(numerical("least squares: solve produced non-finite weights"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_coefficients() {
        // y = 2 x0 - 3 x1 with a well-conditioned 100x2 design.
        let n = 100;
        let mut x = DMatrix::zeros(n, 2);
        let mut y = DVector::zeros(n);
        for i in 0..n {
            let a = 0.1 + i as f64 / 25.0;
            let b = (i as f64 * 0.7).sin() + 2.0;
            x[(i, 0)] = a;
            x[(i, 1)] = b;
            y[i] = 2.0 * a - 3.0 * b;
        }
        let w = solve_least_squares(&x, &y).unwrap();
        assert!((w[0] - 2.0).abs() < 1e-10);
        assert!((w[1] + 3.0).abs() < 1e-10);
    }

    #[test]
    fn zero_targets_give_zero_weights() {
        let x = DMatrix::from_fn(10, 3, |i, j| (i + j + 1) as f64);
        let y = DVector::zeros(10);
        let w = solve_least_squares(&x, &y).unwrap();
        assert!(w.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicate_columns_fall_back_to_minimum_norm() {
        // Two identical columns: solutions form a line; the minimum-norm one
        // splits the coefficient evenly.
        let mut x = DMatrix::zeros(50, 2);
        let mut y = DVector::zeros(50);
        for i in 0..50 {
            let s = 0.5 + i as f64 / 10.0;
            x[(i, 0)] = s;
            x[(i, 1)] = s;
            y[i] = 4.0 * s;
        }
        let w = solve_least_squares(&x, &y).unwrap();
        assert!((w[0] - 2.0).abs() < 1e-8, "w = {w:?}");
        assert!((w[1] - 2.0).abs() < 1e-8);
        // Residual must still vanish.
        let res = &y - &x * &w;
        assert!(res.norm() < 1e-8);
    }

    #[test]
    fn rank_one_design_is_handled() {
        // Every row identical (sigma = 0 grids produce this).
        let x = DMatrix::from_fn(20, 3, |_, j| [1.0, 0.5, 2.0][j]);
        let y = DVector::from_element(20, 3.0);
        let w = solve_least_squares(&x, &y).unwrap();
        let fitted = &x * &w;
        assert!((fitted[0] - 3.0).abs() < 1e-10);
    }
}
