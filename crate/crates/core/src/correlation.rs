//! Working correlation structures and the moment estimators of their
//! nuisance parameters.
//!
//! All estimators work on the expectile-weighted residuals
//! `e_it = psi_tau(r_it) * r_it`. Residual vectors are ordered by occasion,
//! and time positions are 1-based ranks within a subject.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GeeeError, Result};
use crate::expectile::{check_weight, Asymmetry};

/// Distance kept from the positive-definiteness boundary when clamping.
pub const CLAMP_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    Independence,
    Exchangeable,
    Ar1,
    Unstructured,
}

impl CorrelationKind {
    /// Canonical order, also used to break QIC ties.
    pub const ALL: [CorrelationKind; 4] = [
        CorrelationKind::Independence,
        CorrelationKind::Exchangeable,
        CorrelationKind::Ar1,
        CorrelationKind::Unstructured,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            CorrelationKind::Independence => "Ind",
            CorrelationKind::Exchangeable => "Exc",
            CorrelationKind::Ar1 => "AR1",
            CorrelationKind::Unstructured => "Un",
        }
    }

    pub fn rank(self) -> usize {
        self as usize
    }
}

impl fmt::Display for CorrelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for CorrelationKind {
    type Err = GeeeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ind" | "independence" => Ok(CorrelationKind::Independence),
            "exc" | "exch" | "exchangeable" => Ok(CorrelationKind::Exchangeable),
            "ar1" | "ar" => Ok(CorrelationKind::Ar1),
            "un" | "unstructured" => Ok(CorrelationKind::Unstructured),
            other => Err(GeeeError::InvalidInput(format!(
                "unknown correlation structure `{other}` (expected ind, exc, ar1 or un)"
            ))),
        }
    }
}

/// Correlation parameters: none, a shared scalar, or a symmetric table
/// indexed by time positions.
#[derive(Debug, Clone, PartialEq)]
pub enum CorrelationParams {
    None,
    Scalar(f64),
    Table(DMatrix<f64>),
}

/// A working correlation structure with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkingCorrelationSpec {
    kind: CorrelationKind,
    params: CorrelationParams,
    max_cluster_size: usize,
}

impl WorkingCorrelationSpec {
    pub fn independence(max_cluster_size: usize) -> Self {
        Self {
            kind: CorrelationKind::Independence,
            params: CorrelationParams::None,
            max_cluster_size,
        }
    }

    pub fn exchangeable(alpha: f64, max_cluster_size: usize) -> Result<Self> {
        Self::scalar(CorrelationKind::Exchangeable, alpha, max_cluster_size)
    }

    pub fn ar1(alpha: f64, max_cluster_size: usize) -> Result<Self> {
        Self::scalar(CorrelationKind::Ar1, alpha, max_cluster_size)
    }

    fn scalar(kind: CorrelationKind, alpha: f64, max_cluster_size: usize) -> Result<Self> {
        let (lo, hi) = scalar_bounds(kind, max_cluster_size);
        if !(alpha > lo && alpha < hi) {
            return Err(GeeeError::InvalidInput(format!(
                "{kind} parameter {alpha} outside ({lo}, {hi})"
            )));
        }
        Ok(Self {
            kind,
            params: CorrelationParams::Scalar(alpha),
            max_cluster_size,
        })
    }

    /// Symmetric table with unit diagonal and off-diagonals in `(-1, 1)`,
    /// sized by the largest cluster.
    pub fn unstructured(table: DMatrix<f64>) -> Result<Self> {
        let m = table.nrows();
        if m == 0 || table.ncols() != m {
            return Err(GeeeError::Dimension("unstructured table must be square".into()));
        }
        for t in 0..m {
            if table[(t, t)] != 1.0 {
                return Err(GeeeError::InvalidInput("unstructured table needs a unit diagonal".into()));
            }
            for s in 0..t {
                let a = table[(t, s)];
                if a != table[(s, t)] {
                    return Err(GeeeError::InvalidInput("unstructured table must be symmetric".into()));
                }
                if !(a > -1.0 && a < 1.0) {
                    return Err(GeeeError::InvalidInput(format!(
                        "unstructured correlation {a} at ({}, {}) outside (-1, 1)",
                        s + 1,
                        t + 1
                    )));
                }
            }
        }
        Ok(Self {
            kind: CorrelationKind::Unstructured,
            params: CorrelationParams::Table(table),
            max_cluster_size: m,
        })
    }

    pub fn kind(&self) -> CorrelationKind {
        self.kind
    }

    pub fn params(&self) -> &CorrelationParams {
        &self.params
    }

    pub fn max_cluster_size(&self) -> usize {
        self.max_cluster_size
    }

    /// The scalar parameter for exchangeable and AR1 structures.
    pub fn alpha(&self) -> Option<f64> {
        match self.params {
            CorrelationParams::Scalar(a) => Some(a),
            _ => None,
        }
    }

    /// `R_i(alpha)` for a cluster of size `m`.
    pub fn build_correlation(&self, m: usize) -> Result<DMatrix<f64>> {
        if m == 0 {
            return Err(GeeeError::Dimension("cluster size must be positive".into()));
        }
        if m > self.max_cluster_size {
            return Err(GeeeError::Dimension(format!(
                "cluster of size {m} exceeds the maximum {}",
                self.max_cluster_size
            )));
        }
        Ok(match (&self.params, self.kind) {
            (CorrelationParams::Scalar(a), CorrelationKind::Exchangeable) => {
                DMatrix::from_fn(m, m, |t, s| if t == s { 1.0 } else { *a })
            }
            (CorrelationParams::Scalar(a), CorrelationKind::Ar1) => {
                DMatrix::from_fn(m, m, |t, s| a.powi(t.abs_diff(s) as i32))
            }
            (CorrelationParams::Table(table), _) => table.view((0, 0), (m, m)).into_owned(),
            _ => DMatrix::identity(m, m),
        })
    }
}

fn scalar_bounds(kind: CorrelationKind, max_cluster_size: usize) -> (f64, f64) {
    match kind {
        CorrelationKind::Exchangeable if max_cluster_size >= 2 => {
            (-1.0 / (max_cluster_size as f64 - 1.0), 1.0)
        }
        CorrelationKind::Exchangeable => (f64::NEG_INFINITY, 1.0),
        _ => (-1.0, 1.0),
    }
}

fn clamp_into(value: f64, lo: f64, hi: f64) -> (f64, bool) {
    if value <= lo {
        (lo + CLAMP_MARGIN, true)
    } else if value >= hi {
        (hi - CLAMP_MARGIN, true)
    } else {
        (value, false)
    }
}

/// Divisors applied by the nuisance estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DofRecord {
    /// `N - p`.
    pub sigma2_divisor: f64,
    /// `N1 - p` (exchangeable), `N2 - p` (AR1) or `N - p` (unstructured).
    pub alpha_divisor: Option<f64>,
}

/// Nuisance parameters of the working covariance `sigma2 * R(alpha)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceEstimates {
    pub sigma2: f64,
    pub correlation: WorkingCorrelationSpec,
    pub dof: DofRecord,
    /// Whether the raw moment estimate of alpha had to be clamped.
    pub alpha_clamped: bool,
}

fn weighted_residuals(tau: Asymmetry, residuals: &[DVector<f64>]) -> Vec<DVector<f64>> {
    residuals
        .iter()
        .map(|r| r.map(|e| check_weight(tau, e) * e))
        .collect()
}

fn total_obs(residuals: &[DVector<f64>]) -> usize {
    residuals.iter().map(|r| r.len()).sum()
}

/// `sigma2 = sum psi(r)^2 r^2 / (N - p)`.
pub fn estimate_sigma2(tau: Asymmetry, residuals: &[DVector<f64>], p: usize) -> Result<f64> {
    let n_obs = total_obs(residuals);
    if n_obs <= p {
        return Err(GeeeError::DegreesOfFreedom(format!(
            "N - p = {n_obs} - {p} is not positive"
        )));
    }
    let ss: f64 = residuals
        .iter()
        .flat_map(|r| r.iter())
        .map(|&e| {
            let w = check_weight(tau, e) * e;
            w * w
        })
        .sum();
    Ok(ss / (n_obs - p) as f64)
}

/// Unclamped moment estimate of the correlation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RawAlpha {
    pub params: CorrelationParams,
    pub divisor: Option<f64>,
}

/// The moment estimators of alpha before clamping.
///
/// `max_cluster_size` sizes the unstructured table; positions beyond a
/// subject's cluster size contribute nothing.
pub fn raw_alpha(
    kind: CorrelationKind,
    tau: Asymmetry,
    residuals: &[DVector<f64>],
    sigma2: f64,
    p: usize,
    max_cluster_size: usize,
) -> Result<RawAlpha> {
    if kind == CorrelationKind::Independence {
        return Ok(RawAlpha {
            params: CorrelationParams::None,
            divisor: None,
        });
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(GeeeError::InvalidInput(format!(
            "scale estimate must be positive, got {sigma2}"
        )));
    }

    let weighted = weighted_residuals(tau, residuals);
    let p = p as f64;
    let dof_error = |name: &str, count: f64| {
        GeeeError::DegreesOfFreedom(format!(
            "{kind} correlation needs {name} - p > 0, got {count} - {p}"
        ))
    };

    match kind {
        CorrelationKind::Exchangeable => {
            let pairs: f64 = weighted
                .iter()
                .map(|e| (e.len() * e.len().saturating_sub(1) / 2) as f64)
                .sum();
            let divisor = pairs - p;
            if divisor <= 0.0 {
                return Err(dof_error("N1", pairs));
            }
            let cross: f64 = weighted
                .iter()
                .map(|e| {
                    // sum over t < s of e_t e_s
                    let mut acc = 0.0;
                    for t in 0..e.len() {
                        for s in t + 1..e.len() {
                            acc += e[t] * e[s];
                        }
                    }
                    acc
                })
                .sum();
            Ok(RawAlpha {
                params: CorrelationParams::Scalar(cross / (divisor * sigma2)),
                divisor: Some(divisor),
            })
        }
        CorrelationKind::Ar1 => {
            let pairs: f64 = weighted.iter().map(|e| e.len().saturating_sub(1) as f64).sum();
            let divisor = pairs - p;
            if divisor <= 0.0 {
                return Err(dof_error("N2", pairs));
            }
            let lag1: f64 = weighted
                .iter()
                .map(|e| (1..e.len()).map(|t| e[t - 1] * e[t]).sum::<f64>())
                .sum();
            Ok(RawAlpha {
                params: CorrelationParams::Scalar(lag1 / (divisor * sigma2)),
                divisor: Some(divisor),
            })
        }
        CorrelationKind::Unstructured => {
            let n_obs = total_obs(residuals) as f64;
            let divisor = n_obs - p;
            if divisor <= 0.0 {
                return Err(dof_error("N", n_obs));
            }
            let size = max_cluster_size.max(weighted.iter().map(|e| e.len()).max().unwrap_or(0));
            let mut table = DMatrix::<f64>::identity(size, size);
            for t in 0..size {
                for s in t + 1..size {
                    let sum: f64 = weighted
                        .iter()
                        .filter(|e| e.len() > s)
                        .map(|e| e[t] * e[s])
                        .sum();
                    let a = sum / (divisor * sigma2);
                    table[(t, s)] = a;
                    table[(s, t)] = a;
                }
            }
            Ok(RawAlpha {
                params: CorrelationParams::Table(table),
                divisor: Some(divisor),
            })
        }
        CorrelationKind::Independence => unreachable!(),
    }
}

/// Moment estimate of alpha clamped into the valid parameter range.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaEstimate {
    pub correlation: WorkingCorrelationSpec,
    pub divisor: Option<f64>,
    pub clamped: bool,
}

pub fn estimate_alpha(
    kind: CorrelationKind,
    tau: Asymmetry,
    residuals: &[DVector<f64>],
    sigma2: f64,
    p: usize,
    max_cluster_size: usize,
) -> Result<AlphaEstimate> {
    let raw = raw_alpha(kind, tau, residuals, sigma2, p, max_cluster_size)?;
    let (correlation, clamped) = match raw.params {
        CorrelationParams::None => (WorkingCorrelationSpec::independence(max_cluster_size), false),
        CorrelationParams::Scalar(a) => {
            let (lo, hi) = scalar_bounds(kind, max_cluster_size);
            let (a, clamped) = clamp_into(a, lo, hi);
            let spec = WorkingCorrelationSpec {
                kind,
                params: CorrelationParams::Scalar(a),
                max_cluster_size,
            };
            (spec, clamped)
        }
        CorrelationParams::Table(mut table) => {
            let mut clamped = false;
            let m = table.nrows();
            for t in 0..m {
                for s in t + 1..m {
                    let (a, c) = clamp_into(table[(t, s)], -1.0, 1.0);
                    clamped |= c;
                    table[(t, s)] = a;
                    table[(s, t)] = a;
                }
            }
            (WorkingCorrelationSpec::unstructured(table)?, clamped)
        }
    };
    Ok(AlphaEstimate {
        correlation,
        divisor: raw.divisor,
        clamped,
    })
}
