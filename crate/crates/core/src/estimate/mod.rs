//! Per-segment QMLE, the segment cost table and penalized-contrast
//! segmentation by dynamic programming.

mod detect;
mod dp;
mod fit;
mod penalty;
mod table;

pub use detect::{default_min_len, detect, DetectOptions, SegmentEstimate, SegmentationResult, SCHEMA_VERSION};
pub use dp::{chain_dp, dp_segment, dp_segment_beta, dp_segment_fixed, DpSolution};
pub use fit::{fit_segment, FitOptions, PreparedSeries, SegmentFit};
pub use penalty::PenaltySchedule;
pub use table::{build_cost_table, default_grid, grid_positions, Cell, SegmentCostTable, TableOptions};
