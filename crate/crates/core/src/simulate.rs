//! Piecewise simulation of the break model.
//!
//! A single path is grown forward: regime 1 runs from a zero past through a
//! burn-in, and at each break the next parameter takes over the *same* path,
//! reading the full history through its own conditional mean and variance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::moments::{Moments, MomentSweep, Order};
use crate::models::{InnovationLaw, ModelFamily, ParamDomain, ParamVector};

pub const DEFAULT_BURN_IN: usize = 500;

/// iid unit-variance innovations, deterministic in `seed`.
pub fn sample_innovations(law: InnovationLaw, count: usize, seed: u64) -> Result<Vec<f64>> {
    law.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(match law {
        InnovationLaw::Gaussian => (0..count).map(|_| StandardNormal.sample(&mut rng)).collect(),
        InnovationLaw::StudentT { nu } => {
            let t = StudentT::new(nu).map_err(|e| Error::Config(format!("student-t: {e}")))?;
            let scale = ((nu - 2.0) / nu).sqrt();
            (0..count).map(|_| scale * t.sample(&mut rng)).collect()
        }
    })
}

/// Ground truth of a break problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakModel {
    pub family: ModelFamily,
    /// Break fractions τ*, strictly increasing in (0, 1).
    pub tau: Vec<f64>,
    /// One parameter per regime.
    pub thetas: Vec<ParamVector>,
    #[serde(default)]
    pub innovation: InnovationLaw,
    /// Moment order used for the contraction test.
    #[serde(default = "default_r")]
    pub r: f64,
}

fn default_r() -> f64 {
    2.0
}

impl BreakModel {
    pub fn new(family: ModelFamily, thetas: Vec<Vec<f64>>, tau: Vec<f64>, innovation: InnovationLaw, r: f64) -> Result<Self> {
        let model = Self { family, tau, thetas: thetas.into_iter().map(ParamVector).collect(), innovation, r };
        model.validate()?;
        Ok(model)
    }

    pub fn k_star(&self) -> usize {
        self.thetas.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.thetas.is_empty() {
            return Err(Error::Config("a break model needs at least one regime".into()));
        }
        if self.tau.len() + 1 != self.thetas.len() {
            return Err(Error::Config(format!(
                "{} regimes need {} break fractions, got {}",
                self.thetas.len(),
                self.thetas.len() - 1,
                self.tau.len()
            )));
        }
        let mut prev = 0.0;
        for &t in &self.tau {
            if !(t > prev && t < 1.0) {
                return Err(Error::Config(format!("break fractions must be strictly increasing in (0,1): {:?}", self.tau)));
            }
            prev = t;
        }
        let domain = ParamDomain::new(self.family, self.r, self.innovation)?;
        for theta in &self.thetas {
            domain.validate(theta)?;
        }
        for w in self.thetas.windows(2) {
            let dist: f64 = w[0].iter().zip(w[1].iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if dist == 0.0 {
                return Err(Error::Config("consecutive regimes must have distinct parameters".into()));
            }
        }
        Ok(())
    }

    /// t*_j = ⌊n τ*_j⌋; errors unless strictly increasing inside (0, n).
    pub fn true_breaks(&self, n: usize) -> Result<Vec<usize>> {
        let breaks: Vec<usize> = self.tau.iter().map(|t| (n as f64 * t).floor() as usize).collect();
        let mut prev = 0;
        for &b in &breaks {
            if b <= prev || b >= n {
                return Err(Error::Config(format!("n = {n} is too short to place breaks at {:?}", self.tau)));
            }
            prev = b;
        }
        Ok(breaks)
    }

    /// Regime boundaries (0, t*_1, …, n).
    pub fn regime_bounds(&self, n: usize) -> Result<Vec<usize>> {
        let mut b = vec![0];
        b.extend(self.true_breaks(n)?);
        b.push(n);
        Ok(b)
    }
}

/// An observed path with generation metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSample {
    pub x: Vec<f64>,
    pub n: usize,
    pub true_breaks: Option<Vec<usize>>,
    pub seed: u64,
    pub burn_in: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub burn_in: usize,
    /// Start the path from X_t = 0 for t ≤ 0 instead of a burned-in past.
    pub zero_past: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { burn_in: DEFAULT_BURN_IN, zero_past: false }
    }
}

/// Grows `path` over `range` with parameter `theta`, replaying the full
/// history first so recursive families see the new parameter's state.
fn extend_path(family: ModelFamily, theta: &[f64], path: &mut Vec<f64>, noise: &[f64], end: usize) {
    let start = path.len();
    let mut sweep = MomentSweep::new(family, theta, Order::Value);
    let mut m = Moments::new(family.dim());
    if family.is_recursive() {
        for i in 0..start {
            sweep.eval(path, i, &mut m);
        }
    }
    for i in start..end {
        sweep.eval(path, i, &mut m);
        path.push(m.f + m.h.sqrt() * noise[i]);
    }
}

/// Simulates `n` observations of the break model.
pub fn simulate_piecewise(model: &BreakModel, n: usize, opts: SimOptions, seed: u64) -> Result<SeriesSample> {
    model.validate()?;
    if n == 0 {
        return Err(Error::Config("n must be positive".into()));
    }
    let burn_in = if opts.zero_past { 0 } else { opts.burn_in };
    if !opts.zero_past && burn_in < model.family.lag_horizon() {
        return Err(Error::Config(format!(
            "burn-in {burn_in} is shorter than the lag horizon {}",
            model.family.lag_horizon()
        )));
    }
    let bounds = model.regime_bounds(n)?;
    let noise = sample_innovations(model.innovation, burn_in + n, seed)?;
    let mut path = Vec::with_capacity(burn_in + n);
    for (j, theta) in model.thetas.iter().enumerate() {
        extend_path(model.family, theta, &mut path, &noise, burn_in + bounds[j + 1]);
    }
    if let Some(v) = path.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("simulated path diverged ({v})")));
    }
    let true_breaks = bounds[1..bounds.len() - 1].to_vec();
    Ok(SeriesSample {
        x: path.split_off(burn_in),
        n,
        true_breaks: Some(true_breaks),
        seed,
        burn_in,
    })
}

/// Parameters of a single-regime simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub family: ModelFamily,
    pub theta: Vec<f64>,
    pub n: usize,
    pub seed: u64,
    pub burn_in: usize,
    pub innovation: InnovationLaw,
}

impl SimulationSpec {
    pub fn new(family: ModelFamily, theta: Vec<f64>, n: usize, seed: u64) -> Self {
        Self { family, theta, n, seed, burn_in: DEFAULT_BURN_IN, innovation: InnovationLaw::Gaussian }
    }
}

/// Plain stationary simulation: one parameter, burn-in discarded.
pub fn simulate_stationary(spec: &SimulationSpec) -> Result<Vec<f64>> {
    let domain = ParamDomain::new(spec.family, 2.0, spec.innovation)?;
    domain.validate(&spec.theta)?;
    let total = spec.burn_in + spec.n;
    let noise = sample_innovations(spec.innovation, total, spec.seed)?;
    let mut sweep = MomentSweep::new(spec.family, &spec.theta, Order::Value);
    let mut m = Moments::new(spec.family.dim());
    let mut path = Vec::with_capacity(total);
    for (i, e) in noise.iter().enumerate() {
        sweep.eval(&path, i, &mut m);
        path.push(m.f + m.h.sqrt() * e);
    }
    Ok(path.split_off(spec.burn_in))
}
