use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-segment price β_n = n / v_n in the penalized contrast.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum PenaltySchedule {
    /// β_n = √n.
    #[default]
    SqrtN,
    /// β_n = log n.
    Bic,
    /// β_n = n / log n.
    Heavy,
    /// Fixed β_n.
    Custom(f64),
}

impl PenaltySchedule {
    pub fn beta(&self, n: usize) -> f64 {
        let nf = n as f64;
        match *self {
            PenaltySchedule::SqrtN => nf.sqrt(),
            PenaltySchedule::Bic => nf.ln(),
            PenaltySchedule::Heavy => nf / nf.ln(),
            PenaltySchedule::Custom(b) => b,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PenaltySchedule::Custom(b) if !(b >= 0.0 && b.is_finite()) => {
                Err(Error::Config(format!("custom penalty must be finite and ≥ 0, got {b}")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for PenaltySchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PenaltySchedule::SqrtN => write!(f, "sqrt_n"),
            PenaltySchedule::Bic => write!(f, "bic"),
            PenaltySchedule::Heavy => write!(f, "heavy"),
            PenaltySchedule::Custom(b) => write!(f, "custom({b})"),
        }
    }
}

impl FromStr for PenaltySchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let p = match t.as_str() {
            "sqrt_n" | "sqrtn" | "sqrt" => PenaltySchedule::SqrtN,
            "bic" | "log" => PenaltySchedule::Bic,
            "heavy" => PenaltySchedule::Heavy,
            other => {
                let inner = other
                    .strip_prefix("custom(")
                    .and_then(|r| r.strip_suffix(')'))
                    .unwrap_or(other);
                let b: f64 = inner.parse().map_err(|_| Error::Config(format!("unknown penalty `{s}`")))?;
                PenaltySchedule::Custom(b)
            }
        };
        p.validate()?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules() {
        assert_eq!(PenaltySchedule::SqrtN.beta(100), 10.0);
        assert!((PenaltySchedule::Bic.beta(1000) - 1000f64.ln()).abs() < 1e-12);
        assert!((PenaltySchedule::Heavy.beta(1000) - 1000.0 / 1000f64.ln()).abs() < 1e-9);
        assert_eq!(PenaltySchedule::Custom(3.5).beta(10), 3.5);
    }

    #[test]
    fn built_in_schedules_grow_sublinearly() {
        for p in [PenaltySchedule::SqrtN, PenaltySchedule::Bic, PenaltySchedule::Heavy] {
            let (a, b) = (p.beta(1_000), p.beta(1_000_000));
            assert!(b > a, "{p}");
            assert!(b / 1e6 < a / 1e3, "{p}");
        }
    }

    #[test]
    fn parsing() {
        assert_eq!("sqrt_n".parse::<PenaltySchedule>().unwrap(), PenaltySchedule::SqrtN);
        assert_eq!("custom(2.5)".parse::<PenaltySchedule>().unwrap(), PenaltySchedule::Custom(2.5));
        assert_eq!("7".parse::<PenaltySchedule>().unwrap(), PenaltySchedule::Custom(7.0));
        assert!("aic".parse::<PenaltySchedule>().is_err());
        assert!("custom(-1)".parse::<PenaltySchedule>().is_err());
    }
}
