use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{PenaltySchedule, SegmentEstimate, SegmentationResult, SCHEMA_VERSION};
use crate::simulate::BreakModel;

/// Detection quality of one run against the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunScore {
    pub k_hat: usize,
    pub k_star: usize,
    pub k_correct: bool,
    /// Elementwise max |t̂ − t*| when K̂ = K*, max_j min_k |t̂_k − t*_j|
    /// otherwise, and n when exactly one of the break vectors is empty.
    pub distance: usize,
    /// Set when `distance` comes from the empty-vector convention.
    pub distance_flagged: bool,
    /// `distance / n`.
    pub tau_distance: f64,
    /// Index of the estimated segment holding each true regime's midpoint.
    pub matched_segment: Vec<usize>,
    /// θ̂ − θ* for each true regime.
    pub theta_error: Vec<Vec<f64>>,
    /// Whether each interval of the matched segment covers θ*; `None` when
    /// no interval was produced.
    pub covered: Vec<Option<Vec<bool>>>,
}

/// Break distance with the conventions of [`RunScore::distance`].
pub fn break_distance(t_hat: &[usize], t_star: &[usize], n: usize) -> (usize, bool) {
    let gap = |a: usize, b: usize| a.abs_diff(b);
    match (t_hat.is_empty(), t_star.is_empty()) {
        (true, true) => (0, false),
        (true, false) | (false, true) => (n, true),
        _ if t_hat.len() == t_star.len() => (t_hat.iter().zip(t_star).map(|(a, b)| gap(*a, *b)).max().unwrap(), false),
        _ => {
            let d = t_star
                .iter()
                .map(|&y| t_hat.iter().map(|&x| gap(x, y)).min().unwrap())
                .max()
                .unwrap();
            (d, false)
        }
    }
}

/// Scores a segmentation against the model that generated the series.
pub fn score(result: &SegmentationResult, truth: &BreakModel, n: usize) -> Result<RunScore> {
    if result.n != n {
        return Err(Error::Input(format!("result covers n = {} but the truth is for n = {n}", result.n)));
    }
    if result.family != truth.family {
        return Err(Error::Input(format!("result is for {} but the truth is {}", result.family, truth.family)));
    }
    let bounds = truth.regime_bounds(n)?;
    let t_star = &bounds[1..bounds.len() - 1];
    let (distance, distance_flagged) = break_distance(&result.t_hat, t_star, n);

    let mut matched_segment = Vec::with_capacity(truth.k_star());
    let mut theta_error = Vec::with_capacity(truth.k_star());
    let mut covered = Vec::with_capacity(truth.k_star());
    for (j, theta_star) in truth.thetas.iter().enumerate() {
        // 1-based midpoint of {t*_{j−1}+1, …, t*_j}
        let mid = (bounds[j] + 1 + bounds[j + 1]) / 2;
        let k = result
            .segments
            .iter()
            .position(|s| s.lo < mid && mid <= s.hi)
            .ok_or_else(|| Error::Input(format!("no estimated segment contains t = {mid}")))?;
        let seg: &SegmentEstimate = &result.segments[k];
        matched_segment.push(k);
        theta_error.push(seg.theta.iter().zip(theta_star.iter()).map(|(a, b)| a - b).collect());
        covered.push(
            seg.conf_int
                .as_ref()
                .map(|ci| ci.iter().zip(theta_star.iter()).map(|((lo, hi), t)| lo <= t && t <= hi).collect()),
        );
    }
    Ok(RunScore {
        k_hat: result.k_hat,
        k_star: truth.k_star(),
        k_correct: result.k_hat == truth.k_star(),
        distance,
        distance_flagged,
        tau_distance: distance as f64 / n as f64,
        matched_segment,
        theta_error,
        covered,
    })
}

/// The segmentation that reports the truth exactly (no intervals).
pub fn oracle_result(truth: &BreakModel, n: usize) -> Result<SegmentationResult> {
    let bounds = truth.regime_bounds(n)?;
    let segments: Vec<SegmentEstimate> = bounds
        .windows(2)
        .zip(&truth.thetas)
        .map(|(w, theta)| SegmentEstimate {
            lo: w[0],
            hi: w[1],
            theta: theta.clone(),
            cost: 0.0,
            converged: true,
            on_boundary: false,
            cov: None,
            conf_int: None,
            condition_f: None,
            inference_error: None,
        })
        .collect();
    let t_hat = bounds[1..bounds.len() - 1].to_vec();
    Ok(SegmentationResult {
        schema_version: SCHEMA_VERSION,
        family: truth.family,
        n,
        k_hat: truth.k_star(),
        tau_hat: t_hat.iter().map(|&t| t as f64 / n as f64).collect(),
        t_hat,
        theta_hat: truth.thetas.clone(),
        contrast: 0.0,
        penalized: 0.0,
        penalty: PenaltySchedule::Custom(0.0),
        beta: 0.0,
        k_max: truth.k_star(),
        k_fixed: Some(truth.k_star()),
        min_len: 1,
        grid: 1,
        refined: false,
        level: 0.95,
        profile: Vec::new(),
        cells: 0,
        nonconverged_cells: 0,
        all_converged: true,
        segments,
    })
}
