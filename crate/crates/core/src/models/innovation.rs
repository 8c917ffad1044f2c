use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Law of the unit-variance innovations ξ_t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum InnovationLaw {
    Gaussian,
    /// Student-t with `nu` degrees of freedom, rescaled by √((ν−2)/ν) to unit variance.
    StudentT { nu: f64 },
}

impl Default for InnovationLaw {
    fn default() -> Self {
        InnovationLaw::Gaussian
    }
}

impl InnovationLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InnovationLaw::Gaussian => Ok(()),
            InnovationLaw::StudentT { nu } if nu.is_finite() && nu > 2.0 => Ok(()),
            InnovationLaw::StudentT { nu } => Err(Error::Config(format!(
                "student-t innovations need nu > 2 for a finite variance, got {nu}"
            ))),
        }
    }

    /// E|ξ_0|^r, infinite when the moment does not exist.
    pub fn abs_moment(&self, r: f64) -> f64 {
        let half_r = 0.5 * r;
        match *self {
            // 2^{r/2} Γ((r+1)/2) / √π
            InnovationLaw::Gaussian => {
                (half_r * 2f64.ln() + ln_gamma(0.5 * (r + 1.0)) - 0.5 * std::f64::consts::PI.ln())
                    .exp()
            }
            InnovationLaw::StudentT { nu } => {
                if r >= nu {
                    return f64::INFINITY;
                }
                // E|T|^r = ν^{r/2} Γ((r+1)/2) Γ((ν−r)/2) / (√π Γ(ν/2)), then rescale by ((ν−2)/ν)^{r/2}.
                let log_t = half_r * nu.ln() + ln_gamma(0.5 * (r + 1.0)) + ln_gamma(0.5 * (nu - r))
                    - 0.5 * std::f64::consts::PI.ln()
                    - ln_gamma(0.5 * nu);
                let log_scale = half_r * ((nu - 2.0) / nu).ln();
                (log_t + log_scale).exp()
            }
        }
    }

    /// ‖ξ_0‖_r = (E|ξ_0|^r)^{1/r}.
    pub fn moment_norm(&self, r: f64) -> f64 {
        self.abs_moment(r).powf(1.0 / r)
    }
}

impl fmt::Display for InnovationLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InnovationLaw::Gaussian => write!(f, "gaussian"),
            InnovationLaw::StudentT { nu } => write!(f, "student-t({nu})"),
        }
    }
}

impl FromStr for InnovationLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        if t == "gaussian" || t == "normal" {
            return Ok(InnovationLaw::Gaussian);
        }
        let inner = t
            .strip_prefix("student-t(")
            .or_else(|| t.strip_prefix("t("))
            .and_then(|rest| rest.strip_suffix(')'))
            .ok_or_else(|| Error::Config(format!("unknown innovation law `{s}`")))?;
        let nu: f64 = inner
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad degrees of freedom in `{s}`")))?;
        let law = InnovationLaw::StudentT { nu };
        law.validate()?;
        Ok(law)
    }
}
