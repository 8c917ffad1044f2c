//! Parametric model families: conditional mean and variance maps, their
//! θ-derivatives, and the Lipschitz contraction test that defines the
//! stationarity domain Θ(r).
//!
//! Parameter layouts:
//!
//! | family            | θ                                           |
//! |-------------------|---------------------------------------------|
//! | `ar(p)`           | (φ_1, …, φ_p)                               |
//! | `rar(L)`          | (scale, decay γ) with φ_k = scale·k^{−γ}, k ≤ L |
//! | `arch(q)`         | (ψ_0, ψ_1, …, ψ_q)                          |
//! | `garch(p,q)`      | (a_0, a_1, …, a_q, b_1, …, b_p)             |
//! | `tarch(q)`        | (b_0, b⁺_1, …, b⁺_q, b⁻_1, …, b⁻_q)        |

mod innovation;
pub mod moments;

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use innovation::InnovationLaw;
use moments::{Moments, MomentSweep, Order};

/// Default truncation lag for infinite-order families.
pub const DEFAULT_TRUNCATION: usize = 50;
/// Default variance floor h̲.
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-8;
/// Iterates are kept at `beta0 < CONTRACTION_LIMIT`.
pub const CONTRACTION_LIMIT: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ModelFamily {
    Ar { p: usize },
    RiemannianAr { lags: usize },
    Arch { q: usize },
    /// `p` GARCH lags on σ², `q` ARCH lags on X².
    Garch { p: usize, q: usize },
    Tarch { q: usize },
}

impl ModelFamily {
    pub fn dim(&self) -> usize {
        match *self {
            ModelFamily::Ar { p } => p,
            ModelFamily::RiemannianAr { .. } => 2,
            ModelFamily::Arch { q } => q + 1,
            ModelFamily::Garch { p, q } => 1 + q + p,
            ModelFamily::Tarch { q } => 1 + 2 * q,
        }
    }

    /// Number of past values the family reads; `None` for GARCH, whose
    /// variance recursion has unbounded memory.
    pub fn max_lag(&self) -> Option<usize> {
        match *self {
            ModelFamily::Ar { p } => Some(p),
            ModelFamily::RiemannianAr { lags } => Some(lags),
            ModelFamily::Arch { q } | ModelFamily::Tarch { q } => Some(q),
            ModelFamily::Garch { .. } => None,
        }
    }

    /// Lag horizon used for burn-in checks.
    pub fn lag_horizon(&self) -> usize {
        match *self {
            ModelFamily::Garch { p, q } => p.max(q),
            _ => self.max_lag().unwrap_or(0),
        }
    }

    pub fn is_recursive(&self) -> bool {
        matches!(self, ModelFamily::Garch { .. })
    }

    /// f_θ ≡ 0.
    pub fn is_volatility(&self) -> bool {
        matches!(self, ModelFamily::Arch { .. } | ModelFamily::Garch { .. } | ModelFamily::Tarch { .. })
    }

    /// Contrast is a convex quadratic in θ (known unit variance, linear mean).
    pub fn is_quadratic(&self) -> bool {
        matches!(self, ModelFamily::Ar { .. })
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            ModelFamily::Ar { p } => p >= 1,
            ModelFamily::RiemannianAr { lags } => lags >= 1,
            ModelFamily::Arch { q } | ModelFamily::Tarch { q } => q >= 1,
            ModelFamily::Garch { p, q } => p >= 1 && q >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::UnknownFamily(format!("{self} (orders must be ≥ 1)")))
        }
    }

    /// Coordinates that carry lag weights (scaled when shrinking toward the
    /// contraction region); the others are constants or shape parameters.
    pub fn lag_coordinates(&self) -> Vec<usize> {
        match *self {
            ModelFamily::Ar { p } => (0..p).collect(),
            ModelFamily::RiemannianAr { .. } => vec![0],
            _ => (1..self.dim()).collect(),
        }
    }

    pub fn check_dim(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::InvalidParameter(format!(
                "{self} expects {} parameters, got {}",
                self.dim(),
                theta.len()
            )));
        }
        if let Some(v) = theta.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite parameter {v}")));
        }
        Ok(())
    }

    /// The constant term must keep h_θ above the floor for every past.
    fn check_floor(&self, theta: &[f64], floor: f64) -> Result<()> {
        match *self {
            ModelFamily::Arch { .. } if theta[0] < floor => Err(Error::Domain(format!(
                "ψ_0 = {} is below the variance floor {floor}",
                theta[0]
            ))),
            ModelFamily::Garch { p, q } => {
                if theta[0] < floor {
                    return Err(Error::Domain(format!(
                        "a_0 = {} is below the variance floor {floor}",
                        theta[0]
                    )));
                }
                let bsum: f64 = theta[1 + q..1 + q + p].iter().sum();
                if bsum >= 1.0 || theta[1..].iter().any(|&v| v < 0.0) {
                    return Err(Error::Domain(format!(
                        "GARCH weights must be nonnegative with Σb < 1 (Σb = {bsum})"
                    )));
                }
                Ok(())
            }
            ModelFamily::Arch { .. } | ModelFamily::Tarch { .. } if theta[1..].iter().any(|&v| v < 0.0) => {
                Err(Error::Domain("lag weights must be nonnegative".into()))
            }
            ModelFamily::Tarch { .. } if theta[0] <= 0.0 || theta[0] * theta[0] < floor => Err(Error::Domain(
                format!("b_0² = {} is below the variance floor {floor}", theta[0] * theta[0]),
            )),
            ModelFamily::RiemannianAr { .. } if theta[1] <= 1.0 => Err(Error::Domain(format!(
                "decay exponent must exceed 1, got {}",
                theta[1]
            ))),
            _ => Ok(()),
        }
    }

    /// Moments on a reversed past `past[0] = X_{s−1}, past[1] = X_{s−2}, …`
    /// zero-padded beyond its length.
    fn moments_on_past(&self, theta: &[f64], past: &[f64], order: Order) -> Moments {
        let keep = match self.max_lag() {
            Some(l) => past.len().min(l),
            None => past.len(),
        };
        let forward: Vec<f64> = past[..keep].iter().rev().copied().collect();
        let mut m = Moments::new(self.dim());
        let mut sweep = MomentSweep::new(*self, theta, order);
        if self.is_recursive() {
            for i in 0..=forward.len() {
                sweep.eval(&forward, i, &mut m);
            }
        } else {
            sweep.eval(&forward, forward.len(), &mut m);
        }
        m
    }

    /// f_θ on a reversed, zero-padded past.
    pub fn conditional_mean(&self, theta: &[f64], past: &[f64]) -> Result<f64> {
        self.check_dim(theta)?;
        Ok(self.moments_on_past(theta, past, Order::Value).f)
    }

    /// h_θ = M_θ² on a reversed, zero-padded past.
    pub fn conditional_variance(&self, theta: &[f64], past: &[f64]) -> Result<f64> {
        self.conditional_variance_floored(theta, past, DEFAULT_VARIANCE_FLOOR)
    }

    pub fn conditional_variance_floored(&self, theta: &[f64], past: &[f64], floor: f64) -> Result<f64> {
        self.check_dim(theta)?;
        self.check_floor(theta, floor)?;
        Ok(self.moments_on_past(theta, past, Order::Value).h)
    }

    /// First and second θ-derivatives of f_θ and h_θ on a reversed past.
    pub fn mean_var_derivatives(&self, domain: &ParamDomain, theta: &[f64], past: &[f64]) -> Result<Derivatives> {
        self.check_dim(theta)?;
        self.check_floor(theta, domain.variance_floor)?;
        let m = self.moments_on_past(theta, past, Order::Hessian);
        Ok(Derivatives {
            df: m.df,
            dh: m.dh,
            d2f: m.d2f,
            d2h: m.d2h,
            on_boundary: domain.on_boundary(theta),
        })
    }

    /// Nelson–Cao ARCH(∞) weights (ψ_0, ψ_1, …, ψ_len) of a GARCH parameter.
    pub fn garch_arch_weights(p: usize, q: usize, theta: &[f64], len: usize) -> Vec<f64> {
        let bsum: f64 = theta[1 + q..1 + q + p].iter().sum();
        let mut psi = vec![0.0; len + 1];
        psi[0] = theta[0] / (1.0 - bsum);
        for k in 1..=len {
            let mut v = if k <= q { theta[k] } else { 0.0 };
            for i in 1..=p.min(k - 1) {
                v += theta[q + i] * psi[k - i];
            }
            psi[k] = v;
        }
        psi
    }

    /// `beta0` of [`ModelFamily::contraction`] without materializing the tail.
    pub fn beta0(&self, theta: &[f64], moment_norm: f64) -> f64 {
        let m2 = moment_norm * moment_norm;
        match *self {
            ModelFamily::Ar { .. } => theta.iter().map(|v| v.abs()).sum(),
            ModelFamily::RiemannianAr { lags } => {
                theta[0].abs() * (1..=lags).map(|k| (k as f64).powf(-theta[1])).sum::<f64>()
            }
            ModelFamily::Arch { q } => m2 * theta[1..=q].iter().sum::<f64>(),
            ModelFamily::Garch { p, q } => {
                m2 * theta[1..=q].iter().sum::<f64>() + theta[1 + q..1 + q + p].iter().sum::<f64>()
            }
            ModelFamily::Tarch { q } => moment_norm * (1..=q).map(|k| theta[k].max(theta[q + k])).sum::<f64>(),
        }
    }

    /// Lipschitz contraction coefficient β^{(0)} (or β̃^{(0)} for ARCH-type
    /// variance maps) at θ, with `moment_norm = (E|ξ_0|^r)^{1/r}`.
    pub fn contraction(&self, theta: &[f64], moment_norm: f64) -> ContractionReport {
        let m2 = moment_norm * moment_norm;
        let (beta0, tail, is_arch_type) = match *self {
            ModelFamily::Ar { .. } => {
                let tail: Vec<f64> = theta.iter().map(|v| v.abs()).collect();
                (tail.iter().sum(), tail, false)
            }
            ModelFamily::RiemannianAr { lags } => {
                let tail: Vec<f64> =
                    (1..=lags).map(|k| theta[0].abs() * (k as f64).powf(-theta[1])).collect();
                (tail.iter().sum(), tail, false)
            }
            ModelFamily::Arch { q } => {
                let tail = theta[1..=q].to_vec();
                (m2 * tail.iter().sum::<f64>(), tail, true)
            }
            ModelFamily::Garch { p, q } => {
                let asum: f64 = theta[1..=q].iter().sum();
                let bsum: f64 = theta[1 + q..1 + q + p].iter().sum();
                let tail = if bsum < 1.0 {
                    Self::garch_arch_weights(p, q, theta, DEFAULT_TRUNCATION)[1..].to_vec()
                } else {
                    Vec::new()
                };
                (m2 * asum + bsum, tail, true)
            }
            ModelFamily::Tarch { q } => {
                let tail: Vec<f64> = (1..=q).map(|k| theta[k].max(theta[q + k])).collect();
                (moment_norm * tail.iter().sum::<f64>(), tail, false)
            }
        };
        ContractionReport {
            beta0,
            coefficient_tail: tail,
            is_arch_type,
            in_domain: beta0 < 1.0,
        }
    }

    /// Gradient and Hessian (row-major) of `beta0` in θ, used by the
    /// contraction barrier. Piecewise-linear families use a subgradient at kinks.
    pub fn contraction_derivatives(&self, theta: &[f64], moment_norm: f64) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let mut g = vec![0.0; d];
        let mut h = vec![0.0; d * d];
        let m2 = moment_norm * moment_norm;
        match *self {
            ModelFamily::Ar { p } => {
                for k in 0..p {
                    g[k] = signum0(theta[k]);
                }
            }
            ModelFamily::RiemannianAr { lags } => {
                let (mut s, mut s1, mut s2) = (0.0, 0.0, 0.0);
                for k in 1..=lags {
                    let lk = (k as f64).ln();
                    let w = (-theta[1] * lk).exp();
                    s += w;
                    s1 -= lk * w;
                    s2 += lk * lk * w;
                }
                let sg = signum0(theta[0]);
                g[0] = sg * s;
                g[1] = theta[0].abs() * s1;
                h[1] = sg * s1;
                h[2] = sg * s1;
                h[3] = theta[0].abs() * s2;
            }
            ModelFamily::Arch { q } => {
                for k in 1..=q {
                    g[k] = m2;
                }
            }
            ModelFamily::Garch { p, q } => {
                for k in 1..=q {
                    g[k] = m2;
                }
                for k in 1..=p {
                    g[q + k] = 1.0;
                }
            }
            ModelFamily::Tarch { q } => {
                for k in 1..=q {
                    if theta[k] >= theta[q + k] {
                        g[k] = moment_norm;
                    } else {
                        g[q + k] = moment_norm;
                    }
                }
            }
        }
        (g, h)
    }
}

fn signum0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ModelFamily::Ar { p } => write!(f, "ar({p})"),
            ModelFamily::RiemannianAr { lags } => write!(f, "rar({lags})"),
            ModelFamily::Arch { q } => write!(f, "arch({q})"),
            ModelFamily::Garch { p, q } => write!(f, "garch({p},{q})"),
            ModelFamily::Tarch { q } => write!(f, "tarch({q})"),
        }
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_ascii_lowercase();
        let (name, args) = match t.find('(') {
            Some(open) if t.ends_with(')') => (&t[..open], &t[open + 1..t.len() - 1]),
            None => (t.as_str(), ""),
            _ => return Err(Error::UnknownFamily(s.to_string())),
        };
        let nums: Vec<usize> = if args.is_empty() {
            Vec::new()
        } else {
            args.split(',')
                .map(|a| a.parse::<usize>().map_err(|_| Error::UnknownFamily(s.to_string())))
                .collect::<Result<_>>()?
        };
        let fam = match (name, nums.as_slice()) {
            ("ar", [p]) => ModelFamily::Ar { p: *p },
            ("rar" | "riemannian-ar", []) => ModelFamily::RiemannianAr { lags: DEFAULT_TRUNCATION },
            ("rar" | "riemannian-ar", [l]) => ModelFamily::RiemannianAr { lags: *l },
            ("arch", [q]) => ModelFamily::Arch { q: *q },
            ("garch", [p, q]) => ModelFamily::Garch { p: *p, q: *q },
            ("tarch", [q]) => ModelFamily::Tarch { q: *q },
            _ => return Err(Error::UnknownFamily(s.to_string())),
        };
        fam.validate()?;
        Ok(fam)
    }
}

impl From<ModelFamily> for String {
    fn from(f: ModelFamily) -> String {
        f.to_string()
    }
}

impl TryFrom<String> for ModelFamily {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// A parameter point θ ∈ R^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn new(family: ModelFamily, values: Vec<f64>) -> Result<Self> {
        family.check_dim(&values)?;
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Compact box intersected with the contraction region, plus the variance
/// floor h̲ on the conditional variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDomain {
    pub family: ModelFamily,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Moment order r.
    pub r: f64,
    pub variance_floor: f64,
    /// (E|ξ_0|^r)^{1/r} under the configured innovation law.
    pub moment_norm: f64,
}

impl ParamDomain {
    /// Default box for a family under the given innovation law and moment order.
    pub fn new(family: ModelFamily, r: f64, law: InnovationLaw) -> Result<Self> {
        family.validate()?;
        law.validate()?;
        if !(r >= 1.0) {
            return Err(Error::Config(format!("moment order r must be ≥ 1, got {r}")));
        }
        let moment_norm = law.moment_norm(r);
        if !moment_norm.is_finite() {
            return Err(Error::Config(format!("E|ξ|^{r} is infinite under {law}")));
        }
        let d = family.dim();
        let (lower, upper) = match family {
            ModelFamily::Ar { p } => (vec![-0.99; p], vec![0.99; p]),
            ModelFamily::RiemannianAr { .. } => (vec![-0.99, 1.05], vec![0.99, 8.0]),
            ModelFamily::Arch { .. } | ModelFamily::Garch { .. } => {
                let mut lo = vec![0.0; d];
                let mut hi = vec![0.999; d];
                lo[0] = 1e-6;
                hi[0] = 10.0;
                (lo, hi)
            }
            ModelFamily::Tarch { .. } => {
                let mut lo = vec![0.0; d];
                let mut hi = vec![0.999; d];
                // b_0² ≥ h̲
                lo[0] = DEFAULT_VARIANCE_FLOOR.sqrt();
                hi[0] = 10.0;
                (lo, hi)
            }
        };
        Ok(Self {
            family,
            lower,
            upper,
            r,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
            moment_norm,
        })
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let d = self.family.dim();
        if lower.len() != d || upper.len() != d || lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::Config("box bounds must satisfy lower < upper coordinatewise".into()));
        }
        self.lower = lower;
        self.upper = upper;
        self.family.check_floor(&self.lower, self.variance_floor)?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contraction(&self, theta: &[f64]) -> ContractionReport {
        self.family.contraction(theta, self.moment_norm)
    }

    pub fn in_box(&self, theta: &[f64]) -> bool {
        theta.iter().zip(&self.lower).zip(&self.upper).all(|((v, l), u)| v >= l && v <= u)
    }

    /// In the box, above the variance floor, and inside Θ(r).
    pub fn contains(&self, theta: &[f64]) -> bool {
        self.family.check_dim(theta).is_ok()
            && self.in_box(theta)
            && self.family.check_floor(theta, self.variance_floor).is_ok()
            && self.family.beta0(theta, self.moment_norm) < CONTRACTION_LIMIT
    }

    pub fn on_boundary(&self, theta: &[f64]) -> bool {
        theta.iter().zip(&self.lower).zip(&self.upper).any(|((v, l), u)| {
            let tol = 1e-9 * (u - l);
            *v <= l + tol || *v >= u - tol
        })
    }

    /// Errors unless θ is admissible for simulation/estimation.
    pub fn validate(&self, theta: &[f64]) -> Result<()> {
        self.family.check_dim(theta)?;
        self.family.check_floor(theta, self.variance_floor)?;
        let rep = self.contraction(theta);
        if !rep.in_domain {
            return Err(Error::Domain(format!(
                "θ = {theta:?} fails the contraction test (beta0 = {:.6} ≥ 1) for r = {}",
                rep.beta0, self.r
            )));
        }
        Ok(())
    }

    pub fn project(&self, theta: &mut [f64]) {
        for ((v, l), u) in theta.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *u);
        }
    }

    /// Rescales the lag coordinates so that `beta0 ≤ target` (no-op if already).
    pub fn shrink_to(&self, theta: &mut [f64], target: f64) {
        let beta0 = self.family.beta0(theta, self.moment_norm);
        if beta0 <= target || beta0 == 0.0 {
            return;
        }
        let c = target / beta0;
        for i in self.family.lag_coordinates() {
            theta[i] *= c;
        }
        // GARCH: Σb also rescaled above, keeps the recursion stationary.
        self.project(theta);
    }
}

/// Verdict of the contraction test at a single θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub beta0: f64,
    pub coefficient_tail: Vec<f64>,
    pub is_arch_type: bool,
    pub in_domain: bool,
}

/// θ-derivatives of (f_θ, h_θ); matrices row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivatives {
    pub df: Vec<f64>,
    pub dh: Vec<f64>,
    pub d2f: Vec<f64>,
    pub d2h: Vec<f64>,
    pub on_boundary: bool,
}
