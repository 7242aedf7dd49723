//! Least-squares core via column-pivoted QR with explicit rank detection.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot tolerance for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug)]
pub struct LeastSquares {
    pub beta: DVector<f64>,
    /// (XᵀX)⁻¹, the bread of every sandwich covariance.
    pub xtx_inv: DMatrix<f64>,
    pub fitted: DVector<f64>,
    pub residuals: DVector<f64>,
}

/// Solves min ‖Xβ − y‖₂ and fails loudly on rank deficiency, naming the
/// columns the pivoting rejected.
pub fn solve_least_squares(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    names: &[String],
) -> Result<LeastSquares> {
    let n = x.nrows();
    let k = x.ncols();
    assert_eq!(names.len(), k, "one name per design column");
    if n <= k {
        return Err(Error::InsufficientObservations { n_obs: n, n_params: k });
    }

    let qr = x.clone().col_piv_qr();
    let r = qr.r();
    let p = qr.p();

    // Recover the permutation as explicit indices: permuted position j holds
    // original column perm[j].
    let mut perm: Vec<usize> = (0..k).collect();
    {
        let mut idx = DVector::from_iterator(k, 0..k);
        p.permute_rows(&mut idx);
        for j in 0..k {
            perm[j] = idx[j];
        }
    }

    let scale = r[(0, 0)].abs();
    if scale == 0.0 {
        return Err(Error::Collinear(names.to_vec()));
    }
    let deficient: Vec<String> = (0..k)
        .filter(|&j| r[(j, j)].abs() <= RANK_TOL * scale)
        .map(|j| names[perm[j]].clone())
        .collect();
    if !deficient.is_empty() {
        return Err(Error::Collinear(deficient));
    }

    // Thin-QR least squares: R βₚ = Qᵀy, then undo the column permutation.
    let qty = qr.q().transpose() * y;
    let beta_perm = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Collinear(names.to_vec()))?;
    let mut beta = DVector::zeros(k);
    for j in 0..k {
        beta[perm[j]] = beta_perm[j];
    }

    // (XᵀX)⁻¹ = P (RᵀR)⁻¹ Pᵀ with X P = Q R.
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Collinear(names.to_vec()))?;
    let w = &r_inv * r_inv.transpose();
    let mut xtx_inv = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            xtx_inv[(perm[i], perm[j])] = w[(i, j)];
        }
    }

    let fitted = x * &beta;
    let residuals = y - &fitted;
    Ok(LeastSquares { beta, xtx_inv, fitted, residuals })
}
