use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dp::{chain_dp, dp_segment_beta, dp_segment_fixed, DpSolution};
use super::fit::{fit_segment, FitOptions, PreparedSeries, SegmentFit};
use super::penalty::PenaltySchedule;
use super::table::{build_cost_table, default_grid, SegmentCostTable, TableOptions};
use crate::asymptotics::{confint, sandwich_cov};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Exec};
use crate::likelihood::SegmentRef;
use crate::models::{ModelFamily, ParamDomain, ParamVector};

/// Version tag written into every serialized result.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectOptions {
    pub penalty: PenaltySchedule,
    pub k_max: usize,
    /// Defaults to max(10, 2d).
    pub min_len: Option<usize>,
    /// Candidate grid step; defaults to 1 up to n = 2000, then ⌈n/2000⌉.
    pub grid: Option<usize>,
    /// Re-optimize the breaks at unit resolution inside ±Δ windows.
    pub refine: bool,
    /// Known-K mode.
    pub k_fixed: Option<usize>,
    pub level: f64,
    /// Compute sandwich covariances and intervals per segment.
    pub inference: bool,
    pub fit: FitOptions,
    pub exec: Exec,
}

impl Default for DetectOptions {
    fn default() -> Self {
        Self {
            penalty: PenaltySchedule::SqrtN,
            k_max: 5,
            min_len: None,
            grid: None,
            refine: true,
            k_fixed: None,
            level: 0.95,
            inference: true,
            fit: FitOptions::default(),
            exec: Exec::Parallel,
        }
    }
}

pub fn default_min_len(family: ModelFamily) -> usize {
    10.max(2 * family.dim())
}

/// One estimated segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentEstimate {
    pub lo: usize,
    pub hi: usize,
    pub theta: ParamVector,
    pub cost: f64,
    pub converged: bool,
    pub on_boundary: bool,
    /// Sandwich covariance of √n_j(θ̂ − θ*); absent when F̂ is degenerate.
    pub cov: Option<Vec<Vec<f64>>>,
    pub conf_int: Option<Vec<(f64, f64)>>,
    pub condition_f: Option<f64>,
    pub inference_error: Option<String>,
}

/// Output of [`detect`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationResult {
    pub schema_version: u32,
    pub family: ModelFamily,
    pub n: usize,
    pub k_hat: usize,
    pub t_hat: Vec<usize>,
    pub tau_hat: Vec<f64>,
    pub theta_hat: Vec<ParamVector>,
    /// Ĵ_n at the optimum.
    pub contrast: f64,
    /// Ĵ_n + β_n·K̂ (equal to the contrast in known-K mode).
    pub penalized: f64,
    pub penalty: PenaltySchedule,
    pub beta: f64,
    pub k_max: usize,
    pub k_fixed: Option<usize>,
    pub min_len: usize,
    pub grid: usize,
    pub refined: bool,
    pub level: f64,
    /// Best grid contrast for each K = 1..=K_max.
    pub profile: Vec<Option<f64>>,
    pub cells: usize,
    pub nonconverged_cells: usize,
    pub all_converged: bool,
    pub segments: Vec<SegmentEstimate>,
}

/// Exact re-optimization of the breaks over `±grid` windows around the grid
/// solution, holding K̂ fixed; cells are fitted on demand and warm-started from
/// the grid fit of the corresponding segment.
fn refine(
    prepared: &PreparedSeries<'_>,
    domain: &ParamDomain,
    table: &SegmentCostTable,
    breaks: &[usize],
    opts: &DetectOptions,
) -> Result<(Vec<usize>, f64, BTreeMap<(usize, usize), SegmentFit>)> {
    let n = table.n;
    let grid = table.grid;
    let mut layers = vec![vec![0]];
    for &b in breaks {
        let lo = b.saturating_sub(grid).max(1);
        let hi = (b + grid).min(n - 1);
        layers.push((lo..=hi).collect());
    }
    layers.push(vec![n]);
    let mut ends = vec![0];
    ends.extend_from_slice(breaks);
    ends.push(n);

    let mut wanted = Vec::new();
    for j in 0..layers.len() - 1 {
        for &a in &layers[j] {
            for &b in &layers[j + 1] {
                if b >= a + table.min_len {
                    wanted.push((j, a, b));
                }
            }
        }
    }
    let fits = map_indexed(opts.exec, wanted.len(), |i| {
        let (j, a, b) = wanted[i];
        let warm = table.get(ends[j], ends[j + 1]).map(|c| c.theta);
        fit_segment(prepared, domain, SegmentRef { lo: a, hi: b }, warm, &opts.fit)
    });
    let mut cache = BTreeMap::new();
    for (&(_, a, b), fit) in wanted.iter().zip(fits) {
        cache.insert((a, b), fit?);
    }
    let (path, total) = chain_dp(&layers, |a, b| cache.get(&(a, b)).map(|f| f.cost))
        .ok_or_else(|| Error::Infeasible("refinement windows admit no segmentation".into()))?;
    Ok((path[1..path.len() - 1].to_vec(), total, cache))
}

/// Penalized-contrast break detection: cost table, DP over (K, t), optional
/// refinement, then per-segment inference.
pub fn detect(x: &[f64], domain: &ParamDomain, opts: &DetectOptions) -> Result<SegmentationResult> {
    let family = domain.family;
    let n = x.len();
    opts.penalty.validate()?;
    let min_len = opts.min_len.unwrap_or_else(|| default_min_len(family));
    let grid = opts.grid.unwrap_or_else(|| default_grid(n));
    let k_max = opts.k_fixed.unwrap_or(opts.k_max);
    if k_max == 0 {
        return Err(Error::Config("K_max must be ≥ 1".into()));
    }
    if n < k_max * min_len {
        return Err(Error::Config(format!("n = {n} is shorter than K_max·min_len = {}", k_max * min_len)));
    }
    let prepared = PreparedSeries::new(family, x)?;
    let table = build_cost_table(&prepared, domain, &TableOptions { min_len, grid, fit: opts.fit, warm_start: true, exec: opts.exec })?;
    let beta = opts.penalty.beta(n);
    let dp: DpSolution = match opts.k_fixed {
        Some(k) => dp_segment_fixed(&table, k)?,
        None => dp_segment_beta(&table, opts.k_max, beta)?,
    };

    let mut breaks = dp.breaks.clone();
    let mut contrast = dp.contrast;
    let mut refined_cells = BTreeMap::new();
    let refined = opts.refine && grid > 1 && !breaks.is_empty();
    if refined {
        let (b, total, cache) = refine(&prepared, domain, &table, &breaks, opts)?;
        breaks = b;
        contrast = total;
        refined_cells = cache;
    }

    let mut ends = vec![0];
    ends.extend_from_slice(&breaks);
    ends.push(n);
    let mut segments = Vec::with_capacity(ends.len() - 1);
    for w in ends.windows(2) {
        let (theta, cost, converged) = match refined_cells.get(&(w[0], w[1])) {
            Some(f) => (f.theta.clone(), f.cost, f.converged),
            None => {
                let c = table
                    .get(w[0], w[1])
                    .ok_or_else(|| Error::Infeasible(format!("segment ({}, {}] missing from the cost table", w[0], w[1])))?;
                (ParamVector(c.theta.to_vec()), c.cost, c.converged)
            }
        };
        segments.push(SegmentEstimate {
            lo: w[0],
            hi: w[1],
            on_boundary: domain.on_boundary(&theta),
            theta,
            cost,
            converged,
            cov: None,
            conf_int: None,
            condition_f: None,
            inference_error: None,
        });
    }
    if opts.inference {
        let inferred = map_indexed(opts.exec, segments.len(), |i| {
            let s = &segments[i];
            sandwich_cov(family, &s.theta, x, SegmentRef { lo: s.lo, hi: s.hi })
                .and_then(|est| confint(&est, &s.theta, opts.level).map(|ci| (est, ci)))
        });
        for (s, inf) in segments.iter_mut().zip(inferred) {
            match inf {
                Ok((est, ci)) => {
                    s.condition_f = Some(est.condition_f);
                    s.cov = Some(est.cov);
                    s.conf_int = Some(ci);
                }
                Err(Error::DegenerateInformation { condition }) => {
                    s.condition_f = Some(condition);
                    s.inference_error = Some(Error::DegenerateInformation { condition }.to_string());
                }
                Err(e) => s.inference_error = Some(e.to_string()),
            }
        }
    }

    let k_hat = segments.len();
    let penalized = if opts.k_fixed.is_some() { contrast } else { contrast + beta * k_hat as f64 };
    let all_converged = segments.iter().all(|s| s.converged);
    Ok(SegmentationResult {
        schema_version: SCHEMA_VERSION,
        family,
        n,
        k_hat,
        tau_hat: breaks.iter().map(|&b| b as f64 / n as f64).collect(),
        t_hat: breaks,
        theta_hat: segments.iter().map(|s| s.theta.clone()).collect(),
        contrast,
        penalized,
        penalty: opts.penalty,
        beta: if opts.k_fixed.is_some() { 0.0 } else { beta },
        k_max,
        k_fixed: opts.k_fixed,
        min_len,
        grid,
        refined,
        level: opts.level,
        profile: dp.profile,
        cells: table.len(),
        nonconverged_cells: table.nonconverged(),
        all_converged,
        segments,
    })
}
