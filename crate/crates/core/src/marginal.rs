//! The marginal error laws used by the simulation design.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF, Normal, StudentsT};

use crate::error::{GeeeError, Result};

/// Closed set of marginal laws with finite second moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum MarginalLaw {
    Normal { mean: f64, variance: f64 },
    StudentT { dof: f64 },
    ChiSquared { dof: f64 },
}

impl MarginalLaw {
    pub fn standard_normal() -> Self {
        MarginalLaw::Normal {
            mean: 0.0,
            variance: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MarginalLaw::Normal { mean, variance } => {
                if !(mean.is_finite() && variance.is_finite() && variance > 0.0) {
                    return Err(GeeeError::InvalidInput(format!(
                        "normal law needs finite mean and positive variance, got ({mean}, {variance})"
                    )));
                }
            }
            MarginalLaw::StudentT { dof } => {
                // the expectile needs a finite second moment
                if !(dof.is_finite() && dof > 2.0) {
                    return Err(GeeeError::InvalidInput(format!(
                        "student t law needs more than 2 degrees of freedom, got {dof}"
                    )));
                }
            }
            MarginalLaw::ChiSquared { dof } => {
                if !(dof.is_finite() && dof > 0.0) {
                    return Err(GeeeError::InvalidInput(format!(
                        "chi-square law needs positive degrees of freedom, got {dof}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match *self {
            MarginalLaw::Normal { mean, .. } => mean,
            MarginalLaw::StudentT { .. } => 0.0,
            MarginalLaw::ChiSquared { dof } => dof,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            MarginalLaw::Normal { variance, .. } => variance,
            MarginalLaw::StudentT { dof } => dof / (dof - 2.0),
            MarginalLaw::ChiSquared { dof } => 2.0 * dof,
        }
    }

    pub fn pdf(&self, y: f64) -> f64 {
        match *self {
            MarginalLaw::Normal { mean, variance } => normal(mean, variance).pdf(y),
            MarginalLaw::StudentT { dof } => student(dof).pdf(y),
            MarginalLaw::ChiSquared { dof } => {
                if y < 0.0 {
                    0.0
                } else {
                    chi_squared(dof).pdf(y)
                }
            }
        }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        match *self {
            MarginalLaw::Normal { mean, variance } => normal(mean, variance).cdf(y),
            MarginalLaw::StudentT { dof } => student(dof).cdf(y),
            MarginalLaw::ChiSquared { dof } => {
                if y <= 0.0 {
                    0.0
                } else {
                    chi_squared(dof).cdf(y)
                }
            }
        }
    }

    /// Inverse distribution function, `u` in `(0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            MarginalLaw::Normal { mean, variance } => normal(mean, variance).inverse_cdf(u),
            MarginalLaw::StudentT { dof } => student(dof).inverse_cdf(u),
            MarginalLaw::ChiSquared { dof } => chi_squared(dof).inverse_cdf(u),
        }
    }

    /// `E[(Y - m)+]` in closed form.
    pub fn upper_partial_moment(&self, m: f64) -> f64 {
        match *self {
            MarginalLaw::Normal { mean, variance } => {
                let sd = variance.sqrt();
                let z = (m - mean) / sd;
                let std = normal(0.0, 1.0);
                sd * (std.pdf(z) - z * std.sf(z))
            }
            MarginalLaw::StudentT { dof } => {
                // int_m^inf t f(t) dt = (dof + m^2) / (dof - 1) * f(m)
                let law = student(dof);
                (dof + m * m) / (dof - 1.0) * law.pdf(m) - m * law.sf(m)
            }
            MarginalLaw::ChiSquared { dof } => {
                if m <= 0.0 {
                    return dof - m;
                }
                // int_m^inf y f_k(y) dy = k * P(chi2_{k+2} > m)
                dof * chi_squared(dof + 2.0).sf(m) - m * chi_squared(dof).sf(m)
            }
        }
    }

    pub fn is_symmetric(&self) -> bool {
        !matches!(self, MarginalLaw::ChiSquared { .. })
    }
}

impl fmt::Display for MarginalLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            MarginalLaw::Normal { mean, variance } => write!(f, "normal({mean},{variance})"),
            MarginalLaw::StudentT { dof } => write!(f, "student_t({dof})"),
            MarginalLaw::ChiSquared { dof } => write!(f, "chi_squared({dof})"),
        }
    }
}

impl std::str::FromStr for MarginalLaw {
    type Err = GeeeError;

    /// Accepts `normal`, `normal(mean,variance)`, `t3`/`student_t(3)` and
    /// `chisq3`/`chi_squared(3)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let bad = || GeeeError::InvalidInput(format!("unknown marginal law `{s}`"));
        let args = |name: &str| -> Option<Vec<f64>> {
            let rest = s.strip_prefix(name)?;
            let inner = rest.strip_prefix('(')?.strip_suffix(')')?;
            inner.split(',').map(|v| v.trim().parse::<f64>().ok()).collect()
        };

        let law = if s == "normal" {
            MarginalLaw::standard_normal()
        } else if let Some(a) = args("normal") {
            match a.as_slice() {
                [mean, variance] => MarginalLaw::Normal {
                    mean: *mean,
                    variance: *variance,
                },
                _ => return Err(bad()),
            }
        } else if let Some(dof) = s.strip_prefix("chisq").and_then(|d| d.parse().ok()) {
            MarginalLaw::ChiSquared { dof }
        } else if let Some(a) = args("chi_squared") {
            match a.as_slice() {
                [dof] => MarginalLaw::ChiSquared { dof: *dof },
                _ => return Err(bad()),
            }
        } else if let Some(a) = args("student_t") {
            match a.as_slice() {
                [dof] => MarginalLaw::StudentT { dof: *dof },
                _ => return Err(bad()),
            }
        } else if let Some(dof) = s.strip_prefix('t').and_then(|d| d.parse().ok()) {
            MarginalLaw::StudentT { dof }
        } else {
            return Err(bad());
        };
        law.validate()?;
        Ok(law)
    }
}

fn normal(mean: f64, variance: f64) -> Normal {
    Normal::new(mean, variance.sqrt()).expect("validated normal parameters")
}

fn student(dof: f64) -> StudentsT {
    StudentsT::new(0.0, 1.0, dof).expect("validated student t parameters")
}

fn chi_squared(dof: f64) -> ChiSquared {
    ChiSquared::new(dof).expect("validated chi-square parameters")
}
