//! Computable Gaussian quasi-likelihood.
//!
//! `q̂_s(θ) = (X_s − f̂_θ^s)² / ĥ_θ^s + log ĥ_θ^s`, where the conditional moments
//! read the whole observed prefix `X_{s−1}, …, X_1` and zeros before it. The
//! terms never depend on how the sample is segmented, so segment contrasts are
//! additive and the cost table decomposes for dynamic programming.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::moments::{sweep, Moments, Order};
use crate::models::{ModelFamily, DEFAULT_VARIANCE_FLOOR};

/// Segment `T = {lo+1, …, hi}` in 1-based time, i.e. `x[lo..hi]` 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SegmentRef {
    pub lo: usize,
    pub hi: usize,
}

impl SegmentRef {
    pub fn new(lo: usize, hi: usize, n: usize) -> Result<Self> {
        if lo >= hi || hi > n {
            return Err(Error::InvalidParameter(format!(
                "segment ({lo}, {hi}] is not inside (0, {n}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn len(&self) -> usize {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }
}

#[inline]
fn check_variance(h: f64) {
    assert!(
        h.is_finite() && h >= DEFAULT_VARIANCE_FLOOR * (1.0 - 1e-9),
        "conditional variance {h} below the floor; θ is outside the admissible domain"
    );
}

#[inline]
fn q_term(x: f64, m: &Moments) -> f64 {
    check_variance(m.h);
    let e = x - m.f;
    e * e / m.h + m.h.ln()
}

/// Accumulates the gradient and Hessian of `q̂_s` into `grad`, `hess` (row-major).
#[inline]
pub(crate) fn accumulate_q_derivatives(x: f64, m: &Moments, grad: &mut [f64], hess: Option<&mut [f64]>) {
    check_variance(m.h);
    let d = grad.len();
    let e = x - m.f;
    let inv = 1.0 / m.h;
    let resid = inv * (1.0 - e * e * inv);
    for i in 0..d {
        grad[i] += -2.0 * e * inv * m.df[i] + resid * m.dh[i];
    }
    if let Some(hess) = hess {
        let c_ff = 2.0 * inv;
        let c_fh = 2.0 * e * inv * inv;
        let c_f2 = -2.0 * e * inv;
        let c_hh = 2.0 * e * e * inv * inv * inv - inv * inv;
        for i in 0..d {
            for j in 0..d {
                let ij = i * d + j;
                hess[ij] += c_ff * m.df[i] * m.df[j]
                    + c_fh * (m.df[i] * m.dh[j] + m.dh[i] * m.df[j])
                    + c_f2 * m.d2f[ij]
                    + c_hh * m.dh[i] * m.dh[j]
                    + resid * m.d2h[ij];
            }
        }
    }
}

/// `q̂_s(θ)` for 1-based `s`.
pub fn qhat(family: ModelFamily, theta: &[f64], x: &[f64], s: usize) -> Result<f64> {
    family.check_dim(theta)?;
    if s == 0 || s > x.len() {
        return Err(Error::InvalidParameter(format!("time index {s} outside 1..={}", x.len())));
    }
    let mut out = 0.0;
    sweep(family, theta, x, s - 1, s, Order::Value, |i, m| out = q_term(x[i], m));
    Ok(out)
}

/// `q̂_s(θ)` for every `s` in the segment, in time order.
pub fn qhat_values(family: ModelFamily, theta: &[f64], x: &[f64], seg: SegmentRef) -> Result<Vec<f64>> {
    family.check_dim(theta)?;
    let mut out = Vec::with_capacity(seg.len());
    sweep(family, theta, x, seg.lo, seg.hi, Order::Value, |i, m| out.push(q_term(x[i], m)));
    Ok(out)
}

/// `−2 L̂_n(T, θ) = Σ_{s∈T} q̂_s(θ)`; zero for an empty segment.
pub fn segment_contrast(family: ModelFamily, theta: &[f64], x: &[f64], seg: SegmentRef) -> Result<f64> {
    family.check_dim(theta)?;
    if seg.is_empty() {
        return Ok(0.0);
    }
    if seg.hi > x.len() {
        return Err(Error::InvalidParameter(format!("segment end {} beyond n = {}", seg.hi, x.len())));
    }
    let mut total = 0.0;
    sweep(family, theta, x, seg.lo, seg.hi, Order::Value, |i, m| total += q_term(x[i], m));
    Ok(total)
}

/// Contrast with its exact gradient and Hessian (row-major `d × d`).
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentScore {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<f64>,
}

pub fn segment_score(family: ModelFamily, theta: &[f64], x: &[f64], seg: SegmentRef) -> Result<SegmentScore> {
    family.check_dim(theta)?;
    if seg.hi > x.len() {
        return Err(Error::InvalidParameter(format!("segment end {} beyond n = {}", seg.hi, x.len())));
    }
    Ok(segment_score_unchecked(family, theta, x, seg, Order::Hessian))
}

pub(crate) fn segment_score_unchecked(
    family: ModelFamily,
    theta: &[f64],
    x: &[f64],
    seg: SegmentRef,
    order: Order,
) -> SegmentScore {
    let d = family.dim();
    let mut value = 0.0;
    let mut gradient = vec![0.0; d];
    let mut hessian = vec![0.0; d * d];
    sweep(family, theta, x, seg.lo, seg.hi, order, |i, m| {
        value += q_term(x[i], m);
        match order {
            Order::Value => {}
            Order::Gradient => accumulate_q_derivatives(x[i], m, &mut gradient, None),
            Order::Hessian => accumulate_q_derivatives(x[i], m, &mut gradient, Some(&mut hessian)),
        }
    });
    SegmentScore { value, gradient, hessian }
}

/// Per-observation gradients `∇q̂_s(θ)` and the summed Hessian over a segment.
pub fn pointwise_scores(
    family: ModelFamily,
    theta: &[f64],
    x: &[f64],
    seg: SegmentRef,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    family.check_dim(theta)?;
    let d = family.dim();
    let mut grads = Vec::with_capacity(seg.len());
    let mut hessian = vec![0.0; d * d];
    sweep(family, theta, x, seg.lo, seg.hi, Order::Hessian, |i, m| {
        let mut g = vec![0.0; d];
        accumulate_q_derivatives(x[i], m, &mut g, Some(&mut hessian));
        grads.push(g);
    });
    Ok((grads, hessian))
}

/// Prefix sums of lag statistics for the unit-variance autoregressive
/// families, whose contrast over any segment is a quadratic form in the lag
/// coefficients: `Σ X_s² − 2 φᵀ Σ z_s X_s + φᵀ (Σ z_s z_sᵀ) φ`.
#[derive(Debug, Clone)]
pub struct LagStats {
    lags: usize,
    // per prefix: [xx, zx (lags), zz upper triangle (lags·(lags+1)/2)]
    stride: usize,
    prefix: Vec<f64>,
}

impl LagStats {
    pub fn new(x: &[f64], lags: usize) -> Self {
        let tri = lags * (lags + 1) / 2;
        let stride = 1 + lags + tri;
        let mut prefix = vec![0.0; stride * (x.len() + 1)];
        let mut z = vec![0.0; lags];
        for i in 0..x.len() {
            for k in 1..=lags {
                z[k - 1] = if i >= k { x[i - k] } else { 0.0 };
            }
            let (prev, cur) = prefix.split_at_mut(stride * (i + 1));
            let prev = &prev[stride * i..];
            let cur = &mut cur[..stride];
            cur[0] = prev[0] + x[i] * x[i];
            for k in 0..lags {
                cur[1 + k] = prev[1 + k] + z[k] * x[i];
            }
            let mut idx = 1 + lags;
            for a in 0..lags {
                for b in a..lags {
                    cur[idx] = prev[idx] + z[a] * z[b];
                    idx += 1;
                }
            }
        }
        Self { lags, stride, prefix }
    }

    pub fn lags(&self) -> usize {
        self.lags
    }

    /// (Σ X², Σ z X, Σ z zᵀ as full row-major matrix) over `x[lo..hi]`.
    pub fn segment(&self, seg: SegmentRef) -> (f64, Vec<f64>, Vec<f64>) {
        let l = self.lags;
        let mut zx = vec![0.0; l];
        let mut zz = vec![0.0; l * l];
        let xx = self.segment_into(seg, &mut zx, &mut zz);
        (xx, zx, zz)
    }

    /// As [`LagStats::segment`], writing into caller buffers; returns Σ X².
    pub fn segment_into(&self, seg: SegmentRef, zx: &mut [f64], zz: &mut [f64]) -> f64 {
        let l = self.lags;
        let a = &self.prefix[self.stride * seg.lo..self.stride * (seg.lo + 1)];
        let b = &self.prefix[self.stride * seg.hi..self.stride * (seg.hi + 1)];
        for k in 0..l {
            zx[k] = b[1 + k] - a[1 + k];
        }
        let mut idx = 1 + l;
        for r in 0..l {
            for c in r..l {
                let v = b[idx] - a[idx];
                zz[r * l + c] = v;
                zz[c * l + r] = v;
                idx += 1;
            }
        }
        b[0] - a[0]
    }
}
