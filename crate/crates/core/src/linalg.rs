//! Small dense linear-algebra helpers: Cholesky factorization and
//! triangular solves for symmetric positive-definite systems.

use ndarray::{Array1, Array2};

/// Lower-triangular Cholesky factor of a symmetric matrix, or `None` if the
/// matrix is not (numerically) positive definite.
pub fn cholesky_lower(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return None;
        }
        let dsqrt = diag.sqrt();
        l[[j, j]] = dsqrt;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / dsqrt;
        }
    }
    Some(l)
}

/// Solves `L L^T x = b` given the lower Cholesky factor `L`.
pub fn cholesky_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    debug_assert_eq!(n, b.len());
    // Forward substitution: L y = b
    let mut y = b.clone();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    // Back substitution: L^T x = y
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    y
}

/// Cholesky with escalating diagonal jitter. Starts at `jitter0` and
/// multiplies by 10 until `jitter_max`; returns the factor and the jitter
/// actually applied (0.0 when the plain factorization succeeds).
pub fn cholesky_with_jitter(
    a: &Array2<f64>,
    jitter0: f64,
    jitter_max: f64,
) -> Option<(Array2<f64>, f64)> {
    if let Some(l) = cholesky_lower(a) {
        return Some((l, 0.0));
    }
    let n = a.nrows();
    let mut jitter = jitter0;
    while jitter <= jitter_max {
        let mut aj = a.clone();
        for i in 0..n {
            aj[[i, i]] += jitter;
        }
        if let Some(l) = cholesky_lower(&aj) {
            return Some((l, jitter));
        }
        jitter *= 10.0;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn cholesky_recovers_known_factor() {
        // A = L L^T with L = [[2,0],[1,3]]
        let a = array![[4.0, 2.0], [2.0, 10.0]];
        let l = cholesky_lower(&a).unwrap();
        assert_abs_diff_eq!(l[[0, 0]], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(l[[1, 0]], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(l[[1, 1]], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn solve_matches_direct_inverse() {
        let a = array![[4.0, 2.0, 0.5], [2.0, 10.0, 1.0], [0.5, 1.0, 6.0]];
        let b = array![1.0, -2.0, 3.0];
        let l = cholesky_lower(&a).unwrap();
        let x = cholesky_solve(&l, &b);
        let r = a.dot(&x) - &b;
        for v in r.iter() {
            assert!(v.abs() < 1e-12, "residual {v}");
        }
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(cholesky_lower(&a).is_none());
    }

    #[test]
    fn jitter_rescues_semidefinite() {
        // Rank-1 matrix, singular without jitter.
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(cholesky_lower(&a).is_none());
        let (_, jitter) = cholesky_with_jitter(&a, 1e-10, 1e-6).unwrap();
        assert!(jitter > 0.0);
    }
}
