//! Cubic B-spline basis systems: construction, evaluation, differentiation,
//! and penalized least-squares fitting of sampled curves.
//!
//! The basis is the single fixed representation shared by every curve
//! dimension. Knots are placed at the sampling points themselves, so a grid
//! of `T` points with spline order `k` yields `S = T + k - 2` basis
//! functions. Fitting is therefore under-determined and uses a small
//! roughness penalty to select a unique, smooth interpolant.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{cholesky_solve, cholesky_with_jitter};

#[derive(Error, Debug)]
pub enum BasisError {
    #[error("time grid must be strictly increasing")]
    InvalidGrid,
    #[error("need at least {min} grid points, got {got}")]
    TooFewPoints { got: usize, min: usize },
    #[error("spline order must be at least 2, got {0}")]
    InvalidOrder(usize),
    #[error("point {t} lies outside the basis domain [{lo}, {hi}]")]
    OutOfDomain { t: f64, lo: f64, hi: f64 },
    #[error("derivative order {r} requires spline order > {r}, got {order}")]
    DerivativeOrderTooHigh { r: usize, order: usize },
    #[error("expected length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("input contains a non-finite value")]
    NonFiniteInput,
    #[error("ridge penalty must be non-negative, got {0}")]
    InvalidRidge(f64),
    #[error("normal-equation factorization failed even with jitter {0}")]
    FactorizationFailed(f64),
    #[error("coefficient vector was built for a different basis")]
    BasisMismatch,
}

/// A fixed B-spline basis system over a closed interval.
///
/// `full_knots` carries the boundary knots with `order`-fold multiplicity;
/// the basis therefore spans `size = interior_knots.len() + order`
/// functions, forms a partition of unity on the domain, and is right-closed
/// (the last basis function equals 1 at the right endpoint).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BasisSystem {
    order: usize,
    interior_knots: Vec<f64>,
    full_knots: Vec<f64>,
    domain: (f64, f64),
    size: usize,
}

/// Coefficients of one curve in a [`BasisSystem`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CoefficientVector {
    pub values: Vec<f64>,
    /// Fingerprint of the basis these coefficients belong to.
    pub basis_id: u64,
}

/// Builds the basis for a sampling grid: interior knots at each interior
/// grid point, boundary knots repeated `order` times, hence
/// `S = T + order - 2`.
pub fn make_basis(time_grid: &[f64], order: usize) -> Result<BasisSystem, BasisError> {
    if order < 2 {
        return Err(BasisError::InvalidOrder(order));
    }
    let t = time_grid.len();
    if t < 2 {
        return Err(BasisError::TooFewPoints { got: t, min: 2 });
    }
    if time_grid.iter().any(|v| !v.is_finite()) {
        return Err(BasisError::NonFiniteInput);
    }
    if time_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(BasisError::InvalidGrid);
    }
    let lo = time_grid[0];
    let hi = time_grid[t - 1];
    let interior: Vec<f64> = time_grid[1..t - 1].to_vec();
    let mut full = Vec::with_capacity(2 * order + interior.len());
    full.extend(std::iter::repeat_n(lo, order));
    full.extend_from_slice(&interior);
    full.extend(std::iter::repeat_n(hi, order));
    let size = interior.len() + order;
    Ok(BasisSystem {
        order,
        interior_knots: interior,
        full_knots: full,
        domain: (lo, hi),
        size,
    })
}

impl BasisSystem {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of basis functions S.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.interior_knots
    }

    pub fn full_knots(&self) -> &[f64] {
        &self.full_knots
    }

    /// Stable identifier derived from order and knot layout, used to tie
    /// coefficient vectors back to the basis they were fitted in.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a over order and knot bit patterns.
        let mut h: u64 = 0xcbf29ce484222325;
        let mut mix = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        mix(&(self.order as u64).to_le_bytes());
        for k in &self.full_knots {
            mix(&k.to_bits().to_le_bytes());
        }
        h
    }

    fn check_domain(&self, t: f64) -> Result<(), BasisError> {
        let (lo, hi) = self.domain;
        if !t.is_finite() || t < lo || t > hi {
            return Err(BasisError::OutOfDomain { t, lo, hi });
        }
        Ok(())
    }

    fn check_deriv(&self, r: usize) -> Result<(), BasisError> {
        if r >= self.order {
            return Err(BasisError::DerivativeOrderTooHigh {
                r,
                order: self.order,
            });
        }
        Ok(())
    }

    /// Knot-span index mu with full_knots[mu] <= t < full_knots[mu+1];
    /// the right endpoint maps into the last non-degenerate span.
    fn find_span(&self, t: f64) -> usize {
        let p = self.order - 1;
        let n = self.size - 1; // highest basis index
        let u = &self.full_knots;
        if t >= u[n + 1] {
            return n;
        }
        let mut lo = p;
        let mut hi = n + 1;
        let mut mid = (lo + hi) / 2;
        while t < u[mid] || t >= u[mid + 1] {
            if t < u[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
            mid = (lo + hi) / 2;
        }
        mid
    }

    /// Values of the `order` basis functions that are nonzero at `t`,
    /// together with the index of the first one.
    pub fn eval_nonzero(&self, t: f64, deriv: usize) -> Result<(usize, Vec<f64>), BasisError> {
        self.check_domain(t)?;
        self.check_deriv(deriv)?;
        let span = self.find_span(t);
        let p = self.order - 1;
        let vals = if deriv == 0 {
            self.basis_funs(span, t)
        } else {
            self.ders_basis_funs(span, t, deriv)
        };
        Ok((span - p, vals))
    }

    /// Full length-S vector of basis (or basis-derivative) values at `t`.
    pub fn eval(&self, t: f64, deriv: usize) -> Result<Vec<f64>, BasisError> {
        let (first, vals) = self.eval_nonzero(t, deriv)?;
        let mut out = vec![0.0; self.size];
        out[first..first + vals.len()].copy_from_slice(&vals);
        Ok(out)
    }

    // Cox-de Boor triangular scheme for the p+1 nonzero functions at t.
    fn basis_funs(&self, span: usize, t: f64) -> Vec<f64> {
        let p = self.order - 1;
        let u = &self.full_knots;
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = t - u[span + 1 - j];
            right[j] = u[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        n
    }

    // Derivatives of the p+1 nonzero functions at t, returning only the
    // requested order. Standard two-row recurrence over the inverted
    // triangular table.
    fn ders_basis_funs(&self, span: usize, t: f64, nd: usize) -> Vec<f64> {
        let p = self.order - 1;
        let u = &self.full_knots;
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = t - u[span + 1 - j];
            right[j] = u[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![0.0; p + 1]; nd + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=nd {
                let mut d = 0.0;
                let rk = r as i64 - k as i64;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as i64 - 1 <= pk as i64 {
                    k - 1
                } else {
                    p - r
                };
                for j in j1..=j2 {
                    let idx = (rk + j as i64) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for k in 1..=nd {
            for j in 0..=p {
                ders[k][j] *= factor;
            }
            factor *= (p - k) as f64;
        }
        ders.swap_remove(nd)
    }

    /// Pointwise value of a fitted curve (or one of its derivatives).
    pub fn eval_coeffs_at(
        &self,
        coeffs: &CoefficientVector,
        t: f64,
        deriv: usize,
    ) -> Result<f64, BasisError> {
        if coeffs.values.len() != self.size {
            return Err(BasisError::DimensionMismatch {
                expected: self.size,
                got: coeffs.values.len(),
            });
        }
        if coeffs.basis_id != self.fingerprint() {
            return Err(BasisError::BasisMismatch);
        }
        let (first, vals) = self.eval_nonzero(t, deriv)?;
        Ok(vals
            .iter()
            .enumerate()
            .map(|(j, v)| v * coeffs.values[first + j])
            .sum())
    }
}

/// Evaluates a fitted curve on a grid: `x^(r)(t_j) = sum_s c_s phi_s^(r)(t_j)`.
pub fn eval_curve(
    basis: &BasisSystem,
    coeffs: &CoefficientVector,
    t_grid: &[f64],
    deriv: usize,
) -> Result<Vec<f64>, BasisError> {
    t_grid
        .iter()
        .map(|&t| basis.eval_coeffs_at(coeffs, t, deriv))
        .collect()
}

/// Collocation matrix in banded form: per grid point, the first nonzero
/// basis index and the `order` nonzero values.
struct BandedRows {
    first: Vec<usize>,
    vals: Vec<Vec<f64>>,
}

/// Penalized least-squares fitter for one (basis, grid, lambda) combination.
///
/// Solves min_c ||y - Phi c||^2 + lambda * c^T R c, where R is the
/// (normalized) roughness matrix of squared (order-1)-th-derivative jumps.
/// A plain coefficient-norm penalty would leave the fitted curve free to
/// oscillate between sampling points in the under-determined regime S > T;
/// the roughness penalty pins those degrees of freedom while lambda small
/// keeps the fit an interpolant. The factorization is computed once and
/// reused across curves.
pub struct RidgeFitter {
    basis: BasisSystem,
    grid_len: usize,
    lambda: f64,
    rows: BandedRows,
    normal: Array2<f64>,
    chol: Array2<f64>,
}

/// Default fit penalty: small enough to interpolate, large enough to pin
/// a unique solution of the under-determined system.
pub const DEFAULT_RIDGE: f64 = 1e-8;

impl RidgeFitter {
    pub fn new(basis: &BasisSystem, t_grid: &[f64], lambda: f64) -> Result<Self, BasisError> {
        if !(lambda >= 0.0) {
            return Err(BasisError::InvalidRidge(lambda));
        }
        let m = t_grid.len();
        if m < 1 {
            return Err(BasisError::TooFewPoints { got: m, min: 1 });
        }
        let s = basis.size();
        let k = basis.order();
        let mut first = Vec::with_capacity(m);
        let mut vals = Vec::with_capacity(m);
        for &t in t_grid {
            let (f, v) = basis.eval_nonzero(t, 0)?;
            first.push(f);
            vals.push(v);
        }
        let rows = BandedRows { first, vals };
        // Normal matrix Phi^T Phi, banded with bandwidth < order.
        let mut a = Array2::<f64>::zeros((s, s));
        for j in 0..m {
            let f = rows.first[j];
            let v = &rows.vals[j];
            for p in 0..v.len() {
                for q in 0..v.len() {
                    a[[f + p, f + q]] += v[p] * v[q];
                }
            }
        }
        // Roughness matrix: squared jumps of the (order-1)-th derivative
        // across interior knots. That derivative is piecewise constant, so
        // each jump is a linear functional of the coefficients evaluated at
        // adjacent span midpoints; the fit then selects the interpolant with
        // the most continuous top derivative (not-a-knot-like behavior) and
        // reproduces single polynomial pieces up to degree order-1 exactly.
        let mut pen = Array2::<f64>::zeros((s, s));
        let knots = &basis.full_knots;
        let mids: Vec<f64> = knots
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| 0.5 * (w[0] + w[1]))
            .collect();
        for pair in mids.windows(2) {
            let (f_a, d_a) = basis.eval_nonzero(pair[0], k - 1)?;
            let (f_b, d_b) = basis.eval_nonzero(pair[1], k - 1)?;
            // jump row: d_b scattered minus d_a scattered
            let lo = f_a.min(f_b);
            let hi = (f_a + d_a.len()).max(f_b + d_b.len());
            let mut row = vec![0.0; hi - lo];
            for (off, &v) in d_b.iter().enumerate() {
                row[f_b - lo + off] += v;
            }
            for (off, &v) in d_a.iter().enumerate() {
                row[f_a - lo + off] -= v;
            }
            for p in 0..row.len() {
                for q in 0..row.len() {
                    pen[[lo + p, lo + q]] += row[p] * row[q];
                }
            }
        }
        let max_diag = (0..s).map(|i| pen[[i, i]]).fold(0.0f64, f64::max);
        if max_diag > 0.0 {
            let scale = lambda / max_diag;
            for p in 0..s {
                for q in 0..s {
                    a[[p, q]] += scale * pen[[p, q]];
                }
            }
        }
        let (chol, _) =
            cholesky_with_jitter(&a, 1e-10, 1e-6).ok_or(BasisError::FactorizationFailed(1e-6))?;
        Ok(Self {
            basis: basis.clone(),
            grid_len: m,
            lambda,
            rows,
            normal: a,
            chol,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Fits one sampled curve, returning its coefficient vector.
    pub fn fit(&self, samples: &[f64]) -> Result<CoefficientVector, BasisError> {
        if samples.len() != self.grid_len {
            return Err(BasisError::DimensionMismatch {
                expected: self.grid_len,
                got: samples.len(),
            });
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(BasisError::NonFiniteInput);
        }
        let mut rhs = Array1::<f64>::zeros(self.basis.size());
        for (j, &yj) in samples.iter().enumerate() {
            let f = self.rows.first[j];
            for (off, &phi) in self.rows.vals[j].iter().enumerate() {
                rhs[f + off] += phi * yj;
            }
        }
        let mut c = cholesky_solve(&self.chol, &rhs);
        // One step of iterative refinement; the normal matrix is mildly
        // ill-conditioned for tiny lambda and derivative evaluation
        // amplifies coefficient error by 1/h^2.
        let residual = &rhs - &self.normal.dot(&c);
        c += &cholesky_solve(&self.chol, &residual);
        Ok(CoefficientVector {
            values: c.to_vec(),
            basis_id: self.basis.fingerprint(),
        })
    }

    /// Fits every row of an N x M matrix, returning N x S coefficients.
    pub fn fit_rows(&self, values: &Array2<f64>) -> Result<Array2<f64>, BasisError> {
        let n = values.nrows();
        let s = self.basis.size();
        let mut out = Array2::<f64>::zeros((n, s));
        for (i, row) in values.rows().into_iter().enumerate() {
            let c = self.fit(row.as_slice().expect("row-major input"))?;
            for (j, v) in c.values.iter().enumerate() {
                out[[i, j]] = *v;
            }
        }
        Ok(out)
    }
}

/// One-shot ridge fit of a sampled curve; prefer [`RidgeFitter`] when
/// fitting many curves on the same grid.
pub fn fit_curve(
    basis: &BasisSystem,
    t_grid: &[f64],
    samples: &[f64],
    ridge: f64,
) -> Result<CoefficientVector, BasisError> {
    RidgeFitter::new(basis, t_grid, ridge)?.fit(samples)
}

/// Equispaced grid of `n` points on [lo, hi].
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
        .collect()
}
