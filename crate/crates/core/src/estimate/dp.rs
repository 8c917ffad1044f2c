use serde::{Deserialize, Serialize};

use super::penalty::PenaltySchedule;
use super::table::SegmentCostTable;
use crate::error::{Error, Result};

/// Optimal segmentation over a cost table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpSolution {
    pub k_hat: usize,
    /// Interior breaks t̂_1 < … < t̂_{K̂−1} (observation counts).
    pub breaks: Vec<usize>,
    /// Unpenalized contrast at the optimum.
    pub contrast: f64,
    /// contrast + β·K̂ (equal to contrast in known-K mode).
    pub penalized: f64,
    pub beta: f64,
    /// Best unpenalized contrast for each K = 1..=K_max; `None` when no
    /// admissible segmentation with K segments exists.
    pub profile: Vec<Option<f64>>,
}

/// Suffix tables: `best[k-1][a]` is the least cost of covering
/// `(positions[a], n]` with exactly `k` segments, `next[k-1][a]` the smallest
/// position index of the first break attaining it.
struct Suffix {
    best: Vec<Vec<f64>>,
    next: Vec<Vec<usize>>,
}

fn suffix_tables(table: &SegmentCostTable, k_max: usize) -> Suffix {
    let m = table.positions.len();
    let last = m - 1;
    let mut best = Vec::with_capacity(k_max);
    let mut next = Vec::with_capacity(k_max);
    let one: Vec<f64> = (0..m).map(|a| table.cost_at(a, last).unwrap_or(f64::INFINITY)).collect();
    best.push(one);
    next.push(vec![last; m]);
    for k in 2..=k_max {
        let prev = &best[k - 2];
        let mut cur = vec![f64::INFINITY; m];
        let mut arg = vec![usize::MAX; m];
        for a in 0..last {
            let first = table.first_right(a);
            let row = table.row(a);
            let mut v = f64::INFINITY;
            let mut at = usize::MAX;
            for b in first..last {
                let tail = prev[b];
                if tail == f64::INFINITY {
                    continue;
                }
                let c = row[b - first] + tail;
                if c < v {
                    v = c;
                    at = b;
                }
            }
            cur[a] = v;
            arg[a] = at;
        }
        best.push(cur);
        next.push(arg);
    }
    Suffix { best, next }
}

fn reconstruct(table: &SegmentCostTable, suffix: &Suffix, k: usize) -> Vec<usize> {
    let mut breaks = Vec::with_capacity(k - 1);
    let mut a = 0;
    for j in (2..=k).rev() {
        a = suffix.next[j - 1][a];
        breaks.push(table.positions[a]);
    }
    breaks
}

fn check(table: &SegmentCostTable, k_max: usize) -> Result<()> {
    if k_max == 0 {
        return Err(Error::Config("K_max must be ≥ 1".into()));
    }
    if table.positions.len() < 2 {
        return Err(Error::Infeasible("empty cost table".into()));
    }
    Ok(())
}

/// Exact minimizer of `contrast + β·K` over grid-aligned segmentations with
/// `1 ≤ K ≤ k_max`. Ties go to the smaller K, then to the lexicographically
/// smallest break vector.
pub fn dp_segment_beta(table: &SegmentCostTable, k_max: usize, beta: f64) -> Result<DpSolution> {
    check(table, k_max)?;
    let suffix = suffix_tables(table, k_max);
    let profile: Vec<Option<f64>> = suffix.best.iter().map(|b| Some(b[0]).filter(|v| v.is_finite())).collect();
    let mut choice: Option<(usize, f64, f64)> = None;
    for (i, c) in profile.iter().enumerate() {
        let Some(c) = *c else { continue };
        let k = i + 1;
        let pen = c + beta * k as f64;
        if choice.map_or(true, |(_, _, p)| pen < p) {
            choice = Some((k, c, pen));
        }
    }
    let (k_hat, contrast, penalized) =
        choice.ok_or_else(|| Error::Infeasible(format!("no segmentation with segments ≥ {} observations", table.min_len)))?;
    Ok(DpSolution { k_hat, breaks: reconstruct(table, &suffix, k_hat), contrast, penalized, beta, profile })
}

pub fn dp_segment(table: &SegmentCostTable, k_max: usize, penalty: PenaltySchedule) -> Result<DpSolution> {
    dp_segment_beta(table, k_max, penalty.beta(table.n))
}

/// Known-K mode: best segmentation with exactly `k` segments. The penalty
/// is a constant here and plays no role.
pub fn dp_segment_fixed(table: &SegmentCostTable, k: usize) -> Result<DpSolution> {
    check(table, k)?;
    let suffix = suffix_tables(table, k);
    let contrast = suffix.best[k - 1][0];
    if !contrast.is_finite() {
        return Err(Error::Infeasible(format!("no segmentation into {k} segments of length ≥ {}", table.min_len)));
    }
    let profile = suffix.best.iter().map(|b| Some(b[0]).filter(|v| v.is_finite())).collect();
    Ok(DpSolution { k_hat: k, breaks: reconstruct(table, &suffix, k), contrast, penalized: contrast, beta: 0.0, profile })
}

/// Least-cost path through consecutive layers of candidate positions, where
/// `layers[0]` and the last layer hold the two fixed end points and
/// `cost(a, b)` prices the segment between consecutive choices (`None` if
/// inadmissible). Ties go to the lexicographically smallest path.
pub fn chain_dp<F>(layers: &[Vec<usize>], mut cost: F) -> Option<(Vec<usize>, f64)>
where
    F: FnMut(usize, usize) -> Option<f64>,
{
    let depth = layers.len();
    if depth < 2 {
        return None;
    }
    // best[j][i]: least cost from layers[j][i] to the end
    let mut best: Vec<Vec<f64>> = vec![Vec::new(); depth];
    let mut arg: Vec<Vec<usize>> = vec![Vec::new(); depth];
    best[depth - 1] = vec![0.0; layers[depth - 1].len()];
    for j in (0..depth - 1).rev() {
        let mut cur = vec![f64::INFINITY; layers[j].len()];
        let mut at = vec![usize::MAX; layers[j].len()];
        for (i, &a) in layers[j].iter().enumerate() {
            for (l, &b) in layers[j + 1].iter().enumerate() {
                let tail = best[j + 1][l];
                if b <= a || tail == f64::INFINITY {
                    continue;
                }
                let Some(c) = cost(a, b) else { continue };
                // the final segment has no tail; adding 0.0 leaves it unchanged
                let v = if j + 2 == depth { c } else { c + tail };
                if v < cur[i] {
                    cur[i] = v;
                    at[i] = l;
                }
            }
        }
        best[j] = cur;
        arg[j] = at;
    }
    let total = best[0][0];
    if !total.is_finite() {
        return None;
    }
    let mut path = Vec::with_capacity(depth);
    let mut i = 0;
    path.push(layers[0][0]);
    for j in 0..depth - 1 {
        i = arg[j][i];
        path.push(layers[j + 1][i]);
    }
    Some((path, total))
}
