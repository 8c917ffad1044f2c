//! Detection of multiple structural breaks in causal time series by
//! minimizing a penalized Gaussian quasi-likelihood contrast.
//!
//! The crate covers the AR, Riemannian-decay AR, ARCH, GARCH and TARCH
//! families: simulation of piecewise paths, per-segment QMLE, exact dynamic
//! programming over segmentations, sandwich-covariance inference and a Monte
//! Carlo harness with a command-line front end.

pub mod asymptotics;
pub mod error;
pub mod estimate;
pub mod exec;
pub mod harness;
pub mod likelihood;
pub mod models;
pub mod optim;
pub mod simulate;

pub use error::{Error, Result};
pub use estimate::{detect, DetectOptions, PenaltySchedule, SegmentationResult};
pub use models::{InnovationLaw, ModelFamily, ParamDomain, ParamVector};
pub use simulate::{simulate_piecewise, BreakModel, SeriesSample, SimOptions};
