//! Per-segment quasi-maximum-likelihood fits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{segment_score_unchecked, LagStats, SegmentRef};
use crate::models::moments::{sweep, Order};
use crate::models::{ModelFamily, ParamDomain, ParamVector, CONTRACTION_LIMIT};
use crate::optim::{minimize, Eval, NewtonOptions, Objective};

/// Width of the zone below the contraction limit where the log barrier acts.
const BARRIER_WIDTH: f64 = 0.02;
/// Barrier weight per observation.
const BARRIER_WEIGHT: f64 = 1e-3;
/// Segments shorter than this get the wider set of deterministic GARCH starts.
const SHORT_SEGMENT: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Random interior starts on top of the warm (or moment-based) start.
    /// Ignored for families with a convex quadratic contrast.
    pub restarts: usize,
    pub grad_tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { restarts: 5, grad_tol: 1e-7, max_iter: 500, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentFit {
    pub theta: ParamVector,
    /// Σ_{s∈T} q̂_s(θ̂).
    pub cost: f64,
    pub converged: bool,
}

/// A series together with any precomputed statistics its family can use.
#[derive(Debug, Clone)]
pub struct PreparedSeries<'a> {
    pub family: ModelFamily,
    pub x: &'a [f64],
    stats: Option<LagStats>,
}

impl<'a> PreparedSeries<'a> {
    pub fn new(family: ModelFamily, x: &'a [f64]) -> Result<Self> {
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::Input(format!("series contains a non-finite value {v}")));
        }
        let stats = match family {
            ModelFamily::Ar { p } => Some(LagStats::new(x, p)),
            ModelFamily::RiemannianAr { lags } => Some(LagStats::new(x, lags)),
            _ => None,
        };
        Ok(Self { family, x, stats })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Σ_{s∈T} q̂_s(θ), via lag statistics when available.
    pub fn contrast(&self, theta: &[f64], seg: SegmentRef) -> f64 {
        self.objective(seg).value(theta)
    }

    fn objective(&self, seg: SegmentRef) -> SegmentObjective<'_> {
        match &self.stats {
            Some(stats) => {
                let (xx, zx, zz) = stats.segment(seg);
                SegmentObjective::Quadratic { family: self.family, xx, zx, zz }
            }
            None => SegmentObjective::Sweep { family: self.family, x: self.x, seg },
        }
    }
}

enum SegmentObjective<'a> {
    Sweep { family: ModelFamily, x: &'a [f64], seg: SegmentRef },
    Quadratic { family: ModelFamily, xx: f64, zx: Vec<f64>, zz: Vec<f64> },
}

/// Lag weights k^{−γ} and their first two γ-derivatives.
fn rar_weights(lags: usize, gamma: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut w = Vec::with_capacity(lags);
    let mut w1 = Vec::with_capacity(lags);
    let mut w2 = Vec::with_capacity(lags);
    for k in 1..=lags {
        let lk = (k as f64).ln();
        let v = (-gamma * lk).exp();
        w.push(v);
        w1.push(-lk * v);
        w2.push(lk * lk * v);
    }
    (w, w1, w2)
}

fn quad_form(a: &[f64], m: &[f64], b: &[f64]) -> f64 {
    let l = a.len();
    let mut s = 0.0;
    for i in 0..l {
        let mut row = 0.0;
        for j in 0..l {
            row += m[i * l + j] * b[j];
        }
        s += a[i] * row;
    }
    s
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Objective for SegmentObjective<'_> {
    fn dim(&self) -> usize {
        match self {
            SegmentObjective::Sweep { family, .. } | SegmentObjective::Quadratic { family, .. } => family.dim(),
        }
    }

    fn value(&self, theta: &[f64]) -> f64 {
        match self {
            SegmentObjective::Sweep { family, x, seg } => {
                let mut total = 0.0;
                sweep(*family, theta, x, seg.lo, seg.hi, Order::Value, |i, m| {
                    let e = x[i] - m.f;
                    total += e * e / m.h + m.h.ln();
                });
                total
            }
            SegmentObjective::Quadratic { family, xx, zx, zz } => match *family {
                ModelFamily::Ar { .. } => xx - 2.0 * dot(theta, zx) + quad_form(theta, zz, theta),
                ModelFamily::RiemannianAr { lags } => {
                    let (w, _, _) = rar_weights(lags, theta[1]);
                    xx - 2.0 * theta[0] * dot(&w, zx) + theta[0] * theta[0] * quad_form(&w, zz, &w)
                }
                _ => unreachable!("lag statistics exist only for autoregressive families"),
            },
        }
    }

    fn eval(&self, theta: &[f64]) -> Eval {
        match self {
            SegmentObjective::Sweep { family, x, seg } => {
                let s = segment_score_unchecked(*family, theta, x, *seg, Order::Hessian);
                Eval { value: s.value, grad: s.gradient, hess: s.hessian }
            }
            SegmentObjective::Quadratic { family, xx, zx, zz } => match *family {
                ModelFamily::Ar { p } => {
                    let mut grad = vec![0.0; p];
                    for i in 0..p {
                        let row: f64 = (0..p).map(|j| zz[i * p + j] * theta[j]).sum();
                        grad[i] = 2.0 * (row - zx[i]);
                    }
                    Eval {
                        value: self.value(theta),
                        grad,
                        hess: zz.iter().map(|v| 2.0 * v).collect(),
                    }
                }
                ModelFamily::RiemannianAr { lags } => {
                    let (w, w1, w2) = rar_weights(lags, theta[1]);
                    let t = theta[0];
                    let u = dot(&w, zx);
                    let u1 = dot(&w1, zx);
                    let u2 = dot(&w2, zx);
                    let v = quad_form(&w, zz, &w);
                    let v1 = 2.0 * quad_form(&w1, zz, &w);
                    let v2 = 2.0 * (quad_form(&w2, zz, &w) + quad_form(&w1, zz, &w1));
                    let value = xx - 2.0 * t * u + t * t * v;
                    let grad = vec![-2.0 * u + 2.0 * t * v, -2.0 * t * u1 + t * t * v1];
                    let h12 = -2.0 * u1 + 2.0 * t * v1;
                    let hess = vec![2.0 * v, h12, h12, -2.0 * t * u2 + t * t * v2];
                    Eval { value, grad, hess }
                }
                _ => unreachable!("lag statistics exist only for autoregressive families"),
            },
        }
    }
}

/// Adds the contraction barrier and rejects points outside Θ(r).
struct Constrained<'a, O: Objective> {
    inner: &'a O,
    domain: &'a ParamDomain,
    weight: f64,
}

impl<O: Objective> Constrained<'_, O> {
    fn zone(&self, theta: &[f64]) -> Option<f64> {
        let b = self.domain.family.beta0(theta, self.domain.moment_norm);
        if !(b < CONTRACTION_LIMIT) {
            return None;
        }
        let start = CONTRACTION_LIMIT - BARRIER_WIDTH;
        Some(((b - start) / BARRIER_WIDTH).max(0.0))
    }

    fn feasible(&self, theta: &[f64]) -> bool {
        self.domain.contains(theta)
    }
}

impl<O: Objective> Objective for Constrained<'_, O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, theta: &[f64]) -> f64 {
        if !self.feasible(theta) {
            return f64::INFINITY;
        }
        let Some(u) = self.zone(theta) else { return f64::INFINITY };
        let barrier = if u > 0.0 { self.weight * (-(1.0 - u).ln() - u) } else { 0.0 };
        self.inner.value(theta) + barrier
    }

    fn eval(&self, theta: &[f64]) -> Eval {
        if !self.feasible(theta) {
            let d = self.dim();
            return Eval { value: f64::INFINITY, grad: vec![0.0; d], hess: vec![0.0; d * d] };
        }
        let mut ev = self.inner.eval(theta);
        if let Some(u) = self.zone(theta) {
            if u > 0.0 {
                let d = self.dim();
                let (g, h) = self.domain.family.contraction_derivatives(theta, self.domain.moment_norm);
                let c1 = self.weight * u / (1.0 - u) / BARRIER_WIDTH;
                let c2 = self.weight / ((1.0 - u) * (1.0 - u)) / (BARRIER_WIDTH * BARRIER_WIDTH);
                ev.value += self.weight * (-(1.0 - u).ln() - u);
                for i in 0..d {
                    ev.grad[i] += c1 * g[i];
                    for j in 0..d {
                        ev.hess[i * d + j] += c2 * g[i] * g[j] + c1 * h[i * d + j];
                    }
                }
            }
        }
        ev
    }
}

fn cell_seed(seed: u64, seg: SegmentRef) -> u64 {
    // splitmix64 over (seed, lo, hi)
    let mut z = seed ^ (seg.lo as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (seg.hi as u64).rotate_left(32);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn segment_moments(x: &[f64]) -> (f64, f64) {
    let n = x.len().max(1) as f64;
    let m1 = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    let m2 = x.iter().map(|v| v * v).sum::<f64>() / n;
    (m1, m2)
}

/// Moment-based starting point for a segment.
pub(crate) fn default_start(domain: &ParamDomain, x: &[f64]) -> Vec<f64> {
    let (m1, m2) = segment_moments(x);
    let mut theta = match domain.family {
        ModelFamily::Ar { p } => vec![0.0; p],
        ModelFamily::RiemannianAr { .. } => {
            let num: f64 = x.windows(2).map(|w| w[0] * w[1]).sum();
            let den: f64 = x.iter().map(|v| v * v).sum();
            let rho = if den > 0.0 { (num / den).clamp(-0.5, 0.5) } else { 0.0 };
            vec![rho, 2.0]
        }
        ModelFamily::Arch { q } => {
            // Yule–Walker flavour on squares: lag autocorrelations of X²
            let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
            let var: f64 = sq.iter().map(|v| (v - m2) * (v - m2)).sum();
            let mut theta = vec![0.0; q + 1];
            if var > 0.0 {
                for k in 1..=q {
                    let cov: f64 = (k..sq.len()).map(|i| (sq[i] - m2) * (sq[i - k] - m2)).sum();
                    theta[k] = (cov / var).clamp(0.0, 0.9 / q as f64);
                }
            }
            let s: f64 = theta[1..].iter().sum();
            theta[0] = m2 * (1.0 - s);
            theta
        }
        ModelFamily::Garch { p, q } => {
            let mut theta = vec![0.0; 1 + q + p];
            if m2 > 0.0 {
                for k in 1..=q {
                    theta[k] = 0.1 / q as f64;
                }
                for k in 1..=p {
                    theta[q + k] = 0.8 / p as f64;
                }
            }
            theta[0] = 0.1 * m2;
            theta
        }
        ModelFamily::Tarch { q } => {
            let mut theta = vec![0.0; 1 + 2 * q];
            if m1 > 0.0 {
                for k in 1..=2 * q {
                    theta[k] = 0.1 / q as f64;
                }
            }
            theta[0] = 0.8 * m2.sqrt();
            theta
        }
    };
    domain.project(&mut theta);
    domain.shrink_to(&mut theta, 0.9);
    theta
}

/// Deterministic starts beyond [`default_start`] for GARCH, whose contrast is
/// often multimodal on short segments: near-constant variance, moderate and
/// high persistence.
fn extra_starts(domain: &ParamDomain, x: &[f64]) -> Vec<Vec<f64>> {
    let (_, m2) = segment_moments(x);
    let ModelFamily::Garch { p, q } = domain.family else {
        return Vec::new();
    };
    let start = |a0: f64, a: f64, b: f64| {
        let mut theta = vec![a0 * m2];
        theta.extend(std::iter::repeat(a / q as f64).take(q));
        theta.extend(std::iter::repeat(b / p as f64).take(p));
        theta
    };
    let mut out = vec![start(0.9, 0.05, 0.05), start(0.95, 0.01, 0.0), start(0.4, 0.05, 0.5), start(0.02, 0.03, 0.95)];
    for (i, theta) in out.iter_mut().enumerate() {
        domain.project(theta);
        domain.shrink_to(theta, if i == 3 { 0.975 } else { 0.9 });
    }
    out
}

/// GARCH starts at the `keep` best points of a coarse (Σa, Σb) grid, with a0
/// matched to the sample second moment.
fn garch_grid_starts(domain: &ParamDomain, objective: &SegmentObjective<'_>, x: &[f64], keep: usize) -> Vec<Vec<f64>> {
    let ModelFamily::Garch { p, q } = domain.family else {
        return Vec::new();
    };
    let (_, m2) = segment_moments(x);
    let mut scored: Vec<(f64, Vec<f64>)> = Vec::new();
    for a in [0.0, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.6] {
        for b in [0.0, 0.2, 0.4, 0.6, 0.75, 0.85, 0.9, 0.95, 0.98] {
            if a + b > 0.985 {
                continue;
            }
            let mut theta = vec![m2 * (1.0 - a - b)];
            theta.extend(std::iter::repeat(a / q as f64).take(q));
            theta.extend(std::iter::repeat(b / p as f64).take(p));
            domain.project(&mut theta);
            domain.shrink_to(&mut theta, 0.975);
            let v = objective.value(&theta);
            if v.is_finite() {
                scored.push((v, theta));
            }
        }
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    scored.into_iter().take(keep).map(|(_, theta)| theta).collect()
}

/// RiemannianAR start from the profiled contrast: for fixed γ the contrast is
/// quadratic in the scale, so a grid over γ finds the best basin cheaply.
fn rar_profile_start(domain: &ParamDomain, lags: usize, xx: f64, zx: &[f64], zz: &[f64]) -> Option<Vec<f64>> {
    let (lo, hi) = (domain.lower[1], domain.upper[1].min(10.0));
    let steps = 40;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for i in 0..=steps {
        let gamma = lo + (hi - lo) * i as f64 / steps as f64;
        let (w, _, _) = rar_weights(lags, gamma);
        let den = quad_form(&w, zz, &w);
        if !(den > 0.0) {
            continue;
        }
        let mut theta = vec![dot(&w, zx) / den, gamma];
        domain.project(&mut theta);
        domain.shrink_to(&mut theta, 0.95);
        let s = theta[0];
        let cost = xx - 2.0 * s * dot(&w, zx) + s * s * den;
        if best.as_ref().map_or(true, |(c, _)| cost < *c) {
            best = Some((cost, theta));
        }
    }
    best.map(|(_, theta)| theta)
}

fn random_start(domain: &ParamDomain, x: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (_, m2) = segment_moments(x);
    let scale = m2.max(1e-4);
    let mut theta: Vec<f64> = domain
        .lower
        .iter()
        .zip(&domain.upper)
        .map(|(l, u)| {
            let pad = 0.05 * (u - l);
            rng.gen_range(l + pad..u - pad)
        })
        .collect();
    match domain.family {
        ModelFamily::Arch { .. } | ModelFamily::Garch { .. } => theta[0] = scale * rng.gen_range(0.05..1.0),
        ModelFamily::Tarch { .. } => theta[0] = scale.sqrt() * rng.gen_range(0.2..1.0),
        ModelFamily::RiemannianAr { .. } => theta[1] = rng.gen_range(1.1..4.0),
        ModelFamily::Ar { .. } => {}
    }
    domain.project(&mut theta);
    let target = rng.gen_range(0.1..0.9);
    domain.shrink_to(&mut theta, target);
    theta
}

/// Closed-form minimizer of a quadratic AR contrast when it lies in the box
/// and strictly inside the barrier-free part of Θ(r).
fn quadratic_interior_solution(domain: &ParamDomain, xx: f64, zx: &[f64], zz: &[f64]) -> Option<(Vec<f64>, f64)> {
    let p = zx.len();
    let phi = if p == 1 {
        if !(zz[0] > 0.0) {
            return None;
        }
        vec![zx[0] / zz[0]]
    } else {
        let m = nalgebra::DMatrix::from_row_slice(p, p, zz);
        let chol = m.cholesky()?;
        let sol = chol.solve(&nalgebra::DVector::from_column_slice(zx));
        sol.iter().copied().collect()
    };
    if !phi.iter().all(|v| v.is_finite()) || !domain.in_box(&phi) {
        return None;
    }
    if domain.family.beta0(&phi, domain.moment_norm) >= CONTRACTION_LIMIT - BARRIER_WIDTH {
        return None;
    }
    let cost = xx - 2.0 * dot(&phi, zx) + quad_form(&phi, zz, &phi);
    Some((phi, cost))
}

/// QMLE on one segment: box-constrained Newton from the warm start (if any),
/// moment-based starts and `opts.restarts` random interior starts; the best
/// local minimum wins, ties going to the earlier start.
pub fn fit_segment(
    prepared: &PreparedSeries<'_>,
    domain: &ParamDomain,
    seg: SegmentRef,
    warm_start: Option<&[f64]>,
    opts: &FitOptions,
) -> Result<SegmentFit> {
    if domain.family != prepared.family {
        return Err(Error::Config(format!(
            "domain is for {} but the series is prepared for {}",
            domain.family, prepared.family
        )));
    }
    if seg.is_empty() || seg.hi > prepared.n() {
        return Err(Error::InvalidParameter(format!("segment ({}, {}] is not inside (0, {}]", seg.lo, seg.hi, prepared.n())));
    }
    if let Some(w) = warm_start {
        domain.family.check_dim(w)?;
    }
    let objective = prepared.objective(seg);

    if let SegmentObjective::Quadratic { family: ModelFamily::Ar { .. }, xx, zx, zz } = &objective {
        if let Some((phi, cost)) = quadratic_interior_solution(domain, *xx, zx, zz) {
            return Ok(SegmentFit { theta: ParamVector(phi), cost, converged: true });
        }
    }

    let constrained = Constrained { inner: &objective, domain, weight: BARRIER_WEIGHT * seg.len() as f64 };
    let newton = NewtonOptions { grad_tol: opts.grad_tol, scale: seg.len() as f64, max_iter: opts.max_iter };
    let data = &prepared.x[seg.lo..seg.hi];

    // The warm start is tried in addition to the moment-based start, never
    // instead of it, so a warm-started fit is never worse than a cold one.
    let mut starts = Vec::with_capacity(2 + opts.restarts);
    if let Some(w) = warm_start.filter(|w| constrained.value(w).is_finite()) {
        starts.push(w.to_vec());
    }
    starts.push(default_start(domain, data));
    if seg.len() < SHORT_SEGMENT {
        starts.extend(extra_starts(domain, data));
        starts.extend(garch_grid_starts(domain, &objective, data, 2));
    }
    if let SegmentObjective::Quadratic { family: ModelFamily::RiemannianAr { lags }, xx, zx, zz } = &objective {
        starts.extend(rar_profile_start(domain, *lags, *xx, zx, zz));
    }
    if !domain.family.is_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(opts.seed, seg));
        for _ in 0..opts.restarts {
            starts.push(random_start(domain, data, &mut rng));
        }
    }

    let mut best: Option<(f64, Vec<f64>, bool)> = None;
    for start in &starts {
        let m = minimize(&constrained, &domain.lower, &domain.upper, start, &newton);
        if !m.value.is_finite() {
            continue;
        }
        let better = match &best {
            None => true,
            Some((v, _, _)) => m.value < *v,
        };
        if better {
            best = Some((m.value, m.x, m.converged));
        }
    }
    let (_, theta, converged) = best.unwrap_or_else(|| {
        let s = default_start(domain, data);
        (f64::INFINITY, s, false)
    });
    let cost = objective.value(&theta);
    Ok(SegmentFit { theta: ParamVector(theta), cost, converged })
}
