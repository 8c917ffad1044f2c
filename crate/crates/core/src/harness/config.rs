use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{DetectOptions, FitOptions, PenaltySchedule};
use crate::exec::Exec;
use crate::models::{InnovationLaw, ModelFamily, ParamDomain};
use crate::simulate::{BreakModel, SimOptions, DEFAULT_BURN_IN};

/// A scalar or a list in the config file (`n = 2000` or `n = [1000, 2000]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// Every setting the subcommands understand. All fields are optional so the
/// same shape serves for command-line flags and for the `--config` file; file
/// values take precedence over flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub family: Option<String>,
    /// One parameter vector per regime.
    pub theta: Option<Vec<Vec<f64>>>,
    pub tau: Option<Vec<f64>>,
    pub n: Option<OneOrMany<usize>>,
    pub penalty: Option<OneOrMany<String>>,
    pub r: Option<f64>,
    pub innovation: Option<String>,
    #[serde(alias = "K_max")]
    pub k_max: Option<usize>,
    pub min_len: Option<usize>,
    pub grid: Option<usize>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub burn_in: Option<usize>,
    pub zero_past: Option<bool>,
    pub restarts: Option<usize>,
    pub refine: Option<bool>,
    pub level: Option<f64>,
    #[serde(alias = "K_fixed")]
    pub k_fixed: Option<usize>,
    pub metrics: Option<Vec<Metric>>,
}

/// Report sections of a Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    KHat,
    Distance,
    Theta,
    Coverage,
}

pub const ALL_METRICS: [Metric; 4] = [Metric::KHat, Metric::Distance, Metric::Theta, Metric::Coverage];

macro_rules! overlay {
    ($base:ident, $top:ident, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl Settings {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config file: {}", e.message())))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// `self` with every field set in `top` replaced by `top`'s value.
    pub fn overlaid(mut self, top: &Settings) -> Settings {
        overlay!(
            self, top, family, theta, tau, n, penalty, r, innovation, k_max, min_len, grid, replications, seed, burn_in,
            zero_past, restarts, refine, level, k_fixed, metrics
        );
        self
    }

    pub fn family(&self) -> Result<ModelFamily> {
        self.family.as_deref().ok_or_else(|| Error::Config("missing `family`".into()))?.parse()
    }

    pub fn innovation(&self) -> Result<InnovationLaw> {
        self.innovation.as_deref().map_or(Ok(InnovationLaw::Gaussian), str::parse)
    }

    pub fn r(&self) -> f64 {
        self.r.unwrap_or(2.0)
    }

    pub fn domain(&self) -> Result<ParamDomain> {
        ParamDomain::new(self.family()?, self.r(), self.innovation()?)
    }

    pub fn penalties(&self) -> Result<Vec<PenaltySchedule>> {
        match &self.penalty {
            None => Ok(vec![PenaltySchedule::default()]),
            Some(p) => p.to_vec().iter().map(|s| s.parse()).collect(),
        }
    }

    pub fn ns(&self) -> Result<Vec<usize>> {
        let ns = self.n.as_ref().ok_or_else(|| Error::Config("missing `n`".into()))?.to_vec();
        if ns.is_empty() || ns.contains(&0) {
            return Err(Error::Config("`n` must be a positive integer or a non-empty list of them".into()));
        }
        Ok(ns)
    }

    pub fn model(&self) -> Result<BreakModel> {
        let theta = self.theta.clone().ok_or_else(|| Error::Config("missing `theta`".into()))?;
        let family = self.family()?;
        for t in &theta {
            family.check_dim(t)?;
        }
        BreakModel::new(family, theta, self.tau.clone().unwrap_or_default(), self.innovation()?, self.r())
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions { burn_in: self.burn_in.unwrap_or(DEFAULT_BURN_IN), zero_past: self.zero_past.unwrap_or(false) }
    }

    /// Detection options for one penalty schedule.
    pub fn detect_options(&self, penalty: PenaltySchedule, exec: Exec) -> Result<DetectOptions> {
        let level = self.level.unwrap_or(0.95);
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Config(format!("`level` must lie in (0, 1), got {level}")));
        }
        let defaults = DetectOptions::default();
        Ok(DetectOptions {
            penalty,
            k_max: self.k_max.unwrap_or(defaults.k_max),
            min_len: self.min_len,
            grid: self.grid,
            refine: self.refine.unwrap_or(true),
            k_fixed: self.k_fixed,
            level,
            inference: true,
            fit: FitOptions { restarts: self.restarts.unwrap_or(defaults.fit.restarts), ..defaults.fit },
            exec,
        })
    }
}

/// Resolved Monte Carlo configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: BreakModel,
    pub n: Vec<usize>,
    pub penalties: Vec<PenaltySchedule>,
    pub replications: usize,
    /// Replication `i` uses seed `seed + i`.
    pub seed: u64,
    pub sim: SimOptions,
    pub k_max: usize,
    pub min_len: Option<usize>,
    pub grid: Option<usize>,
    pub refine: bool,
    pub k_fixed: Option<usize>,
    pub restarts: usize,
    pub level: f64,
    pub metrics: Vec<Metric>,
}

impl ExperimentConfig {
    pub fn from_settings(s: &Settings) -> Result<Self> {
        let replications = s.replications.unwrap_or(1);
        if replications == 0 {
            return Err(Error::Config("`replications` must be ≥ 1".into()));
        }
        let base = s.detect_options(PenaltySchedule::default(), Exec::Sequential)?;
        let mut metrics = s.metrics.clone().unwrap_or_else(|| ALL_METRICS.to_vec());
        metrics.sort();
        metrics.dedup();
        let cfg = Self {
            model: s.model()?,
            n: s.ns()?,
            penalties: s.penalties()?,
            replications,
            seed: s.seed.unwrap_or(0),
            sim: s.sim_options(),
            k_max: base.k_max,
            min_len: base.min_len,
            grid: base.grid,
            refine: base.refine,
            k_fixed: base.k_fixed,
            restarts: base.fit.restarts,
            level: base.level,
            metrics,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.replications == 0 {
            return Err(Error::Config("`replications` must be ≥ 1".into()));
        }
        if self.n.is_empty() || self.penalties.is_empty() {
            return Err(Error::Config("need at least one `n` and one `penalty`".into()));
        }
        for p in &self.penalties {
            p.validate()?;
        }
        for &n in &self.n {
            self.model.true_breaks(n)?;
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<ParamDomain> {
        ParamDomain::new(self.model.family, self.model.r, self.model.innovation)
    }

    pub fn detect_options(&self, penalty: PenaltySchedule) -> DetectOptions {
        let d = DetectOptions::default();
        DetectOptions {
            penalty,
            k_max: self.k_max,
            min_len: self.min_len,
            grid: self.grid,
            refine: self.refine,
            k_fixed: self.k_fixed,
            level: self.level,
            inference: true,
            fit: FitOptions { restarts: self.restarts, ..d.fit },
            exec: Exec::Sequential,
        }
    }

    pub fn wants(&self, m: Metric) -> bool {
        self.metrics.contains(&m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
family = "ar(1)"
theta = [[0.2], [0.7]]
tau = [0.5]
n = [1000, 2000]
penalty = ["sqrt_n", "bic"]
r = 2.0
innovation = "gaussian"
K_max = 4
min_len = 20
grid = 2
replications = 3
seed = 9
"#;

    #[test]
    fn parses_the_documented_schema() {
        let s = Settings::from_toml_str(EXAMPLE).unwrap();
        let cfg = ExperimentConfig::from_settings(&s).unwrap();
        assert_eq!(cfg.n, vec![1000, 2000]);
        assert_eq!(cfg.penalties, vec![PenaltySchedule::SqrtN, PenaltySchedule::Bic]);
        assert_eq!(cfg.k_max, 4);
        assert_eq!(cfg.min_len, Some(20));
        assert_eq!(cfg.model.k_star(), 2);
        assert_eq!(cfg.metrics, ALL_METRICS.to_vec());
    }

    #[test]
    fn file_overrides_flags() {
        let flags = Settings { n: Some(OneOrMany::One(50)), seed: Some(1), ..Default::default() };
        let file = Settings::from_toml_str("n = 80").unwrap();
        let merged = flags.overlaid(&file);
        assert_eq!(merged.ns().unwrap(), vec![80]);
        assert_eq!(merged.seed, Some(1));
    }

    #[test]
    fn errors_are_specific() {
        assert!(matches!(Settings::from_toml_str("bogus = 1"), Err(Error::Config(_))));
        let s = Settings::from_toml_str("family = \"foo(1)\"\ntheta=[[0.1]]\nn=10").unwrap();
        assert!(matches!(s.model(), Err(Error::UnknownFamily(_))));
        let s = Settings::from_toml_str("family = \"arch(1)\"\ntheta=[[1.0, 0.7]]\nr = 4.0\nn=10").unwrap();
        assert!(matches!(s.model(), Err(Error::Domain(_))));
    }
}
