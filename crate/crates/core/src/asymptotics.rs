//! Sandwich covariance `F⁻¹ G F⁻¹` of a segment QMLE and Wald intervals.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::likelihood::{pointwise_scores, SegmentRef};
use crate::models::ModelFamily;

/// Largest condition number of F̂ accepted before inversion.
pub const MAX_CONDITION: f64 = 1e12;

/// Plug-in estimate of the asymptotic covariance of `√n_j (θ̂ − θ*)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichEstimate {
    pub f_hat: Vec<Vec<f64>>,
    pub g_hat: Vec<Vec<f64>>,
    pub cov: Vec<Vec<f64>>,
    pub n_j: usize,
    pub condition_f: f64,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let d = rows.len();
    DMatrix::from_fn(d, d, |i, j| rows[i][j])
}

/// Inverse of a symmetric matrix through its SVD, with the condition number.
fn checked_inverse(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let svd = m.clone().svd(true, true);
    let s = &svd.singular_values;
    let smax = s.max();
    let smin = s.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::DegenerateInformation { condition });
    }
    let inv = svd.pseudo_inverse(0.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok((inv, condition))
}

impl SandwichEstimate {
    /// Builds the estimate from F̂ and Ĝ directly.
    pub fn from_parts(f_hat: DMatrix<f64>, g_hat: DMatrix<f64>, n_j: usize) -> Result<Self> {
        let f = (&f_hat + f_hat.transpose()) * 0.5;
        let g = (&g_hat + g_hat.transpose()) * 0.5;
        let (f_inv, condition_f) = checked_inverse(&f)?;
        let cov = &f_inv * &g * &f_inv;
        let cov = (&cov + cov.transpose()) * 0.5;
        Ok(Self { f_hat: to_rows(&f), g_hat: to_rows(&g), cov: to_rows(&cov), n_j, condition_f })
    }

    pub fn dim(&self) -> usize {
        self.cov.len()
    }

    /// Standard errors `√(cov_ii / n_j)`.
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| (self.cov[i][i].max(0.0) / self.n_j as f64).sqrt()).collect()
    }

    /// `√n_j · cov^{−1/2} (θ̂ − θ)`, approximately standard normal per
    /// coordinate when θ is the true parameter.
    pub fn standardized(&self, theta_hat: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        let cov = from_rows(&self.cov);
        let eig = SymmetricEigen::new(cov);
        if eig.eigenvalues.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::DegenerateInformation { condition: f64::INFINITY });
        }
        let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
        let w = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
        let scale = (self.n_j as f64).sqrt();
        let diff = nalgebra::DVector::from_iterator(theta.len(), theta_hat.iter().zip(theta).map(|(a, b)| scale * (a - b)));
        Ok((w * diff).iter().copied().collect())
    }
}

/// F̂ = mean Hessian of q̂_s, Ĝ = mean outer product of ∇q̂_s over the
/// segment, both evaluated at θ̂.
pub fn sandwich_cov(family: ModelFamily, theta: &[f64], x: &[f64], seg: SegmentRef) -> Result<SandwichEstimate> {
    if seg.is_empty() || seg.hi > x.len() {
        return Err(Error::InvalidParameter(format!("segment ({}, {}] is not inside (0, {}]", seg.lo, seg.hi, x.len())));
    }
    let d = family.dim();
    let (grads, hess) = pointwise_scores(family, theta, x, seg)?;
    let nj = seg.len() as f64;
    let f_hat = DMatrix::from_row_slice(d, d, &hess) / nj;
    let mut g_hat = DMatrix::zeros(d, d);
    for g in &grads {
        for i in 0..d {
            for j in 0..d {
                g_hat[(i, j)] += g[i] * g[j];
            }
        }
    }
    g_hat /= nj;
    SandwichEstimate::from_parts(f_hat, g_hat, seg.len())
}

/// Per-coordinate intervals `θ̂_i ± z_{(1+level)/2} √(cov_ii / n_j)`.
pub fn confint(est: &SandwichEstimate, theta: &[f64], level: f64) -> Result<Vec<(f64, f64)>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("confidence level must lie in (0, 1), got {level}")));
    }
    if theta.len() != est.dim() {
        return Err(Error::InvalidParameter(format!("θ has {} entries, covariance is {}×{}", theta.len(), est.dim(), est.dim())));
    }
    let z = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.5 * (1.0 + level));
    Ok(theta.iter().zip(est.std_errors()).map(|(t, se)| (t - z * se, t + z * se)).collect())
}
