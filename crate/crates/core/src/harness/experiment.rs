use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, OrderStatistics};

use super::config::{ExperimentConfig, Metric};
use super::score::{score, RunScore};
use crate::error::Result;
use crate::estimate::{detect, PenaltySchedule, SegmentationResult, SCHEMA_VERSION};
use crate::exec::{map_indexed, Exec};
use crate::simulate::simulate_piecewise;

/// Outcome of one simulate → detect → score cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub n: usize,
    pub penalty: PenaltySchedule,
    pub rep: usize,
    pub seed: u64,
    pub error: Option<String>,
    pub t_hat: Vec<usize>,
    pub score: Option<RunScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub count: usize,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q90: f64,
    pub max: f64,
    pub mean: f64,
}

impl Quantiles {
    /// `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let mut data = Data::new(values.to_vec());
        Some(Self {
            count: values.len(),
            min: data.quantile(0.0),
            q25: data.quantile(0.25),
            median: data.median(),
            q75: data.quantile(0.75),
            q90: data.quantile(0.9),
            max: data.quantile(1.0),
            mean,
        })
    }
}

/// Per-regime parameter accuracy across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeAccuracy {
    pub bias: Vec<f64>,
    pub rmse: Vec<f64>,
    /// Share of intervals covering θ*, per coordinate, over runs that
    /// produced intervals.
    pub coverage: Option<Vec<f64>>,
}

/// Aggregates for one (n, penalty) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub n: usize,
    pub penalty: PenaltySchedule,
    pub beta: f64,
    pub replications: usize,
    pub failures: usize,
    pub freq_k_star: Option<f64>,
    pub k_histogram: Option<BTreeMap<usize, usize>>,
    pub distance: Option<Quantiles>,
    /// Break distance over the runs with K̂ = K*.
    pub distance_k_star: Option<Quantiles>,
    pub tau_distance_k_star: Option<Quantiles>,
    pub regimes: Option<Vec<RegimeAccuracy>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub cells: Vec<CellSummary>,
}

/// Wall-clock seconds per replication for one cell; kept apart from the
/// report so that the report is a pure function of the configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub n: usize,
    pub penalty: PenaltySchedule,
    pub seconds: Option<Quantiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub runs: Vec<RunRecord>,
    pub timing: Vec<CellTiming>,
}

/// Simulates, detects and scores a single replication.
pub fn run_once(config: &ExperimentConfig, n: usize, penalty: PenaltySchedule, rep: usize) -> (RunRecord, Option<SegmentationResult>) {
    let seed = config.seed.wrapping_add(rep as u64);
    let attempt = || -> Result<(SegmentationResult, RunScore)> {
        let domain = config.domain()?;
        let sample = simulate_piecewise(&config.model, n, config.sim, seed)?;
        let result = detect(&sample.x, &domain, &config.detect_options(penalty))?;
        let s = score(&result, &config.model, n)?;
        Ok((result, s))
    };
    match attempt() {
        Ok((result, s)) => (
            RunRecord { n, penalty, rep, seed, error: None, t_hat: result.t_hat.clone(), score: Some(s) },
            Some(result),
        ),
        Err(e) => (RunRecord { n, penalty, rep, seed, error: Some(e.to_string()), t_hat: Vec::new(), score: None }, None),
    }
}

/// Aggregates the runs of one cell.
pub fn summarize(config: &ExperimentConfig, n: usize, penalty: PenaltySchedule, runs: &[RunRecord]) -> CellSummary {
    let ok: Vec<&RunScore> = runs.iter().filter_map(|r| r.score.as_ref()).collect();
    let hit: Vec<&RunScore> = ok.iter().copied().filter(|s| s.k_correct).collect();
    let mut cell = CellSummary {
        n,
        penalty,
        beta: penalty.beta(n),
        replications: runs.len(),
        failures: runs.len() - ok.len(),
        freq_k_star: None,
        k_histogram: None,
        distance: None,
        distance_k_star: None,
        tau_distance_k_star: None,
        regimes: None,
    };
    if config.wants(Metric::KHat) && !ok.is_empty() {
        cell.freq_k_star = Some(hit.len() as f64 / ok.len() as f64);
        let mut hist = BTreeMap::new();
        for s in &ok {
            *hist.entry(s.k_hat).or_insert(0) += 1;
        }
        cell.k_histogram = Some(hist);
    }
    if config.wants(Metric::Distance) {
        let all: Vec<f64> = ok.iter().map(|s| s.distance as f64).collect();
        let given: Vec<f64> = hit.iter().map(|s| s.distance as f64).collect();
        let tau: Vec<f64> = hit.iter().map(|s| s.tau_distance).collect();
        cell.distance = Quantiles::of(&all);
        cell.distance_k_star = Quantiles::of(&given);
        cell.tau_distance_k_star = Quantiles::of(&tau);
    }
    if (config.wants(Metric::Theta) || config.wants(Metric::Coverage)) && !ok.is_empty() {
        let regimes = config
            .model
            .thetas
            .iter()
            .enumerate()
            .map(|(j, theta)| {
                let d = theta.len();
                let m = ok.len() as f64;
                let mut bias = vec![0.0; d];
                let mut sq = vec![0.0; d];
                for s in &ok {
                    for i in 0..d {
                        bias[i] += s.theta_error[j][i];
                        sq[i] += s.theta_error[j][i] * s.theta_error[j][i];
                    }
                }
                let with_ci: Vec<&Vec<bool>> = ok.iter().filter_map(|s| s.covered[j].as_ref()).collect();
                let coverage = (config.wants(Metric::Coverage) && !with_ci.is_empty()).then(|| {
                    (0..d)
                        .map(|i| with_ci.iter().filter(|c| c[i]).count() as f64 / with_ci.len() as f64)
                        .collect()
                });
                if config.wants(Metric::Theta) {
                    RegimeAccuracy {
                        bias: bias.iter().map(|b| b / m).collect(),
                        rmse: sq.iter().map(|v| (v / m).sqrt()).collect(),
                        coverage,
                    }
                } else {
                    RegimeAccuracy { bias: Vec::new(), rmse: Vec::new(), coverage }
                }
            })
            .collect();
        cell.regimes = Some(regimes);
    }
    cell
}

/// Runs every (n, penalty) cell of the experiment. Replications execute
/// concurrently under `exec`; aggregation is an ordered reduction by
/// replication index, so the report does not depend on the worker count.
pub fn run_experiment(config: &ExperimentConfig, exec: Exec) -> Result<ExperimentOutput> {
    config.validate()?;
    let mut runs = Vec::new();
    let mut cells = Vec::new();
    let mut timing = Vec::new();
    for &n in &config.n {
        for &penalty in &config.penalties {
            let out = map_indexed(exec, config.replications, |rep| {
                let start = Instant::now();
                let (record, _) = run_once(config, n, penalty, rep);
                (record, start.elapsed().as_secs_f64())
            });
            let (cell_runs, secs): (Vec<RunRecord>, Vec<f64>) = out.into_iter().unzip();
            cells.push(summarize(config, n, penalty, &cell_runs));
            timing.push(CellTiming { n, penalty, seconds: Quantiles::of(&secs) });
            runs.extend(cell_runs);
        }
    }
    Ok(ExperimentOutput {
        report: ExperimentReport { schema_version: SCHEMA_VERSION, config: config.clone(), cells },
        runs,
        timing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Settings;

    fn config(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_settings(&Settings::from_toml_str(text).unwrap()).unwrap()
    }

    #[test]
    fn single_replication_bookkeeping() {
        let cfg = config("family = \"ar(1)\"\ntheta = [[0.0]]\nn = 200\nreplications = 1\nseed = 3");
        let out = run_experiment(&cfg, Exec::Sequential).unwrap();
        assert_eq!(out.runs.len(), 1);
        let cell = &out.report.cells[0];
        assert_eq!(cell.replications, 1);
        let hist = cell.k_histogram.as_ref().unwrap();
        assert_eq!(hist.values().sum::<usize>(), 1);
    }

    #[test]
    fn report_is_deterministic_and_recomputable() {
        let cfg = config("family = \"ar(1)\"\ntheta = [[0.2], [0.7]]\ntau = [0.5]\nn = 300\nreplications = 3\nseed = 5");
        let a = run_experiment(&cfg, Exec::Parallel).unwrap();
        let b = run_experiment(&cfg, Exec::Sequential).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.runs, b.runs);
        let again = summarize(&cfg, 300, PenaltySchedule::SqrtN, &a.runs);
        assert_eq!(again, a.report.cells[0]);
    }

    #[test]
    fn quantiles_are_monotone() {
        let q = Quantiles::of(&[5.0, 1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!(q.min <= q.q25 && q.q25 <= q.median && q.median <= q.q75 && q.q75 <= q.q90 && q.q90 <= q.max);
        assert_eq!(q.median, 3.0);
        assert_eq!(q.mean, 3.0);
        assert!(Quantiles::of(&[]).is_none());
    }

    #[test]
    fn metric_selection_drops_sections() {
        let cfg = config("family = \"ar(1)\"\ntheta = [[0.3]]\nn = 150\nmetrics = [\"k_hat\"]");
        let out = run_experiment(&cfg, Exec::Sequential).unwrap();
        let cell = &out.report.cells[0];
        assert!(cell.freq_k_star.is_some());
        assert!(cell.distance.is_none() && cell.regimes.is_none());
    }
}
