use serde::{Deserialize, Serialize};

use super::fit::{fit_segment, FitOptions, PreparedSeries};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Exec};
use crate::likelihood::SegmentRef;
use crate::models::ParamDomain;

/// Candidate break positions `{kΔ : kΔ < n} ∪ {n}`.
pub fn grid_positions(n: usize, step: usize) -> Vec<usize> {
    let step = step.max(1);
    let mut p: Vec<usize> = (0..n).step_by(step).collect();
    p.push(n);
    p
}

/// Default grid step: 1 up to n = 2000, then ⌈n/2000⌉.
pub fn default_grid(n: usize) -> usize {
    if n <= 2000 {
        1
    } else {
        n.div_ceil(2000)
    }
}

/// Minimized segment contrasts over all grid-aligned segments that are at
/// least `min_len` long.
///
/// Storage is one row per left end, covering the admissible right ends in
/// ascending order, with the fitted parameters packed in a flat buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentCostTable {
    pub n: usize,
    pub min_len: usize,
    pub grid: usize,
    pub positions: Vec<usize>,
    dim: usize,
    /// first admissible right-end index for each left-end index
    row_start: Vec<usize>,
    /// offset of each row in the flat buffers
    row_offset: Vec<usize>,
    cost: Vec<f64>,
    theta: Vec<f64>,
    converged: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell<'a> {
    pub seg: SegmentRef,
    pub cost: f64,
    pub theta: &'a [f64],
    pub converged: bool,
}

impl SegmentCostTable {
    fn layout(n: usize, min_len: usize, grid: usize) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
        let positions = grid_positions(n, grid);
        let m = positions.len();
        let mut row_start = Vec::with_capacity(m);
        let mut row_offset = Vec::with_capacity(m + 1);
        let mut total = 0;
        for a in 0..m {
            let first = positions.partition_point(|&p| p < positions[a] + min_len.max(1));
            row_start.push(first);
            row_offset.push(total);
            total += m.saturating_sub(first);
        }
        row_offset.push(total);
        (positions, row_start, row_offset)
    }

    /// A table from an arbitrary cost function, with no fitted parameters.
    /// Used for DP tests and for callers that bring their own costs.
    pub fn from_costs<F>(n: usize, min_len: usize, grid: usize, mut cost: F) -> Self
    where
        F: FnMut(usize, usize) -> f64,
    {
        let (positions, row_start, row_offset) = Self::layout(n, min_len, grid);
        let mut costs = Vec::with_capacity(*row_offset.last().unwrap());
        for a in 0..positions.len() {
            for b in row_start[a]..positions.len() {
                costs.push(cost(positions[a], positions[b]));
            }
        }
        let cells = costs.len();
        Self {
            n,
            min_len,
            grid,
            positions,
            dim: 0,
            row_start,
            row_offset,
            cost: costs,
            theta: Vec::new(),
            converged: vec![true; cells],
        }
    }

    pub fn len(&self) -> usize {
        self.cost.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cost.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn slot(&self, a: usize, b: usize) -> Option<usize> {
        if a >= self.positions.len() || b >= self.positions.len() || b < self.row_start[a] {
            return None;
        }
        Some(self.row_offset[a] + b - self.row_start[a])
    }

    /// Cost of the segment between position indices `a < b`, if admissible.
    #[inline]
    pub fn cost_at(&self, a: usize, b: usize) -> Option<f64> {
        self.slot(a, b).map(|s| self.cost[s])
    }

    /// First admissible right-end index for left-end index `a`.
    #[inline]
    pub fn first_right(&self, a: usize) -> usize {
        self.row_start[a]
    }

    /// Costs of row `a`, indexed from [`SegmentCostTable::first_right`].
    #[inline]
    pub fn row(&self, a: usize) -> &[f64] {
        &self.cost[self.row_offset[a]..self.row_offset[a + 1]]
    }

    /// Cell for the segment `x[lo..hi]`, if it is on the grid and admissible.
    pub fn get(&self, lo: usize, hi: usize) -> Option<Cell<'_>> {
        let a = self.positions.binary_search(&lo).ok()?;
        let b = self.positions.binary_search(&hi).ok()?;
        let s = self.slot(a, b)?;
        Some(Cell {
            seg: SegmentRef { lo, hi },
            cost: self.cost[s],
            theta: if self.dim == 0 { &[] } else { &self.theta[s * self.dim..(s + 1) * self.dim] },
            converged: self.converged[s],
        })
    }

    /// Number of cells whose optimizer did not report convergence.
    pub fn nonconverged(&self) -> usize {
        self.converged.iter().filter(|c| !**c).count()
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell<'_>> + '_ {
        (0..self.positions.len()).flat_map(move |a| {
            (self.row_start[a]..self.positions.len()).map(move |b| self.get(self.positions[a], self.positions[b]).unwrap())
        })
    }
}

/// Options for [`build_cost_table`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableOptions {
    pub min_len: usize,
    pub grid: usize,
    pub fit: FitOptions,
    pub warm_start: bool,
    pub exec: Exec,
}

/// Fits every admissible grid-aligned segment. Rows (fixed left end) are
/// independent work items; within a row each cell is warm-started from the
/// previous right end, so the table is identical for any worker count.
pub fn build_cost_table(prepared: &PreparedSeries<'_>, domain: &ParamDomain, opts: &TableOptions) -> Result<SegmentCostTable> {
    let n = prepared.n();
    let d = domain.dim();
    if opts.min_len < d + 2 {
        return Err(Error::Config(format!("min_len {} must be at least d + 2 = {}", opts.min_len, d + 2)));
    }
    if opts.grid == 0 {
        return Err(Error::Config("grid step must be ≥ 1".into()));
    }
    if n < opts.min_len {
        return Err(Error::Infeasible(format!("n = {n} is shorter than min_len = {}", opts.min_len)));
    }
    let (positions, row_start, row_offset) = SegmentCostTable::layout(n, opts.min_len, opts.grid);
    let m = positions.len();

    let rows: Vec<Result<Vec<(f64, Vec<f64>, bool)>>> = map_indexed(opts.exec, m, |a| {
        let mut out = Vec::with_capacity(m - row_start[a]);
        let mut warm: Option<Vec<f64>> = None;
        for b in row_start[a]..m {
            let seg = SegmentRef { lo: positions[a], hi: positions[b] };
            let start = if opts.warm_start { warm.as_deref() } else { None };
            let fit = fit_segment(prepared, domain, seg, start, &opts.fit)?;
            warm = Some(fit.theta.0.clone());
            out.push((fit.cost, fit.theta.0, fit.converged));
        }
        Ok(out)
    });

    let total = row_offset[m];
    let mut cost = Vec::with_capacity(total);
    let mut theta = Vec::with_capacity(total * d);
    let mut converged = Vec::with_capacity(total);
    for row in rows {
        for (c, t, ok) in row? {
            cost.push(c);
            theta.extend_from_slice(&t);
            converged.push(ok);
        }
    }
    Ok(SegmentCostTable {
        n,
        min_len: opts.min_len,
        grid: opts.grid,
        positions,
        dim: d,
        row_start,
        row_offset,
        cost,
        theta,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{InnovationLaw, ModelFamily};
    use crate::simulate::{simulate_stationary, SimulationSpec};

    #[test]
    fn grid_positions_include_both_ends() {
        assert_eq!(grid_positions(10, 3), vec![0, 3, 6, 9, 10]);
        assert_eq!(grid_positions(9, 3), vec![0, 3, 6, 9]);
        assert_eq!(grid_positions(7, 7), vec![0, 7]);
        assert_eq!(default_grid(2000), 1);
        assert_eq!(default_grid(4000), 2);
        assert_eq!(default_grid(4001), 3);
    }

    #[test]
    fn cell_count_matches_combinatorics() {
        let t = SegmentCostTable::from_costs(100, 10, 1, |_, _| 0.0);
        assert_eq!(t.len(), 4186);
        assert_eq!(t.len(), (100 - 10 + 1) * (100 - 10 + 2) / 2);
        let t = SegmentCostTable::from_costs(100, 10, 100, |_, _| 0.0);
        assert_eq!(t.len(), 1);
        assert!(t.get(0, 100).is_some());
    }

    #[test]
    fn lookup_round_trips() {
        let t = SegmentCostTable::from_costs(30, 4, 2, |lo, hi| (lo * 100 + hi) as f64);
        for c in t.cells() {
            assert_eq!(c.cost, (c.seg.lo * 100 + c.seg.hi) as f64);
            assert!(c.seg.len() >= 4);
        }
        assert!(t.get(0, 2).is_none());
        assert!(t.get(1, 10).is_none());
    }

    #[test]
    fn fitted_table_is_deterministic_across_executors() {
        let f: ModelFamily = "arch(1)".parse().unwrap();
        let x = simulate_stationary(&SimulationSpec::new(f, vec![0.5, 0.3], 120, 2)).unwrap();
        let prep = PreparedSeries::new(f, &x).unwrap();
        let dom = ParamDomain::new(f, 2.0, InnovationLaw::Gaussian).unwrap();
        let mut opts = TableOptions { min_len: 20, grid: 10, fit: FitOptions::default(), warm_start: true, exec: Exec::Sequential };
        let a = build_cost_table(&prep, &dom, &opts).unwrap();
        opts.exec = Exec::Parallel;
        let b = build_cost_table(&prep, &dom, &opts).unwrap();
        assert_eq!(a, b);
    }
}
