//! Asymmetric least squares primitives.
//!
//! The asymmetric square loss `rho_tau(t) = |tau - 1(t <= 0)| * t^2` weights
//! positive deviations by `tau` and non-positive ones by `1 - tau`. Its
//! minimiser over a location parameter is the `tau`-expectile; at
//! `tau = 0.5` this is the mean.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{GeeeError, Result};
use crate::marginal::MarginalLaw;

/// Relative step size at which the fixed-point expectile iteration stops.
const FIXED_POINT_TOL: f64 = 1e-12;
const FIXED_POINT_MAX_ITER: usize = 10_000;

/// An asymmetry level strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Asymmetry(f64);

impl Asymmetry {
    pub fn new(tau: f64) -> Result<Self> {
        if tau.is_finite() && tau > 0.0 && tau < 1.0 {
            Ok(Self(tau))
        } else {
            Err(GeeeError::InvalidInput(format!(
                "asymmetry level must lie in (0, 1), got {tau}"
            )))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Asymmetry {
    type Error = GeeeError;
    fn try_from(tau: f64) -> Result<Self> {
        Self::new(tau)
    }
}

impl From<Asymmetry> for f64 {
    fn from(tau: Asymmetry) -> f64 {
        tau.0
    }
}

impl fmt::Display for Asymmetry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Strictly increasing asymmetry levels together with the positive weights
/// that control their relative influence in a joint fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymmetrySequence {
    taus: Vec<Asymmetry>,
    weights: Vec<f64>,
}

impl AsymmetrySequence {
    pub fn new(taus: Vec<Asymmetry>, weights: Vec<f64>) -> Result<Self> {
        if taus.is_empty() {
            return Err(GeeeError::InvalidInput(
                "at least one asymmetry level is required".into(),
            ));
        }
        if taus.len() != weights.len() {
            return Err(GeeeError::Dimension(format!(
                "{} asymmetry levels but {} weights",
                taus.len(),
                weights.len()
            )));
        }
        if taus.windows(2).any(|w| w[0].value() >= w[1].value()) {
            return Err(GeeeError::InvalidInput(
                "asymmetry levels must be strictly increasing".into(),
            ));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(GeeeError::InvalidInput(format!(
                "weights must be positive and finite, got {w}"
            )));
        }
        Ok(Self { taus, weights })
    }

    /// Equal unit weights.
    pub fn uniform(taus: Vec<Asymmetry>) -> Result<Self> {
        let weights = vec![1.0; taus.len()];
        Self::new(taus, weights)
    }

    pub fn from_values(values: &[f64]) -> Result<Self> {
        let taus = values
            .iter()
            .map(|&t| Asymmetry::new(t))
            .collect::<Result<Vec<_>>>()?;
        Self::uniform(taus)
    }

    pub fn single(tau: Asymmetry) -> Self {
        Self {
            taus: vec![tau],
            weights: vec![1.0],
        }
    }

    pub fn taus(&self) -> &[Asymmetry] {
        &self.taus
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Asymmetry, f64)> + '_ {
        self.taus.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Check function `psi_tau(t)`: `tau` for `t > 0`, `1 - tau` for `t <= 0`.
#[inline]
pub fn check_weight(tau: Asymmetry, t: f64) -> f64 {
    if t > 0.0 {
        tau.0
    } else {
        1.0 - tau.0
    }
}

/// Asymmetric square loss `psi_tau(t) * t^2`.
#[inline]
pub fn loss(tau: Asymmetry, t: f64) -> f64 {
    check_weight(tau, t) * t * t
}

/// Derivative of [`loss`] with respect to `t`.
#[inline]
pub fn loss_derivative(tau: Asymmetry, t: f64) -> f64 {
    2.0 * check_weight(tau, t) * t
}

/// Empirical `tau`-expectile: the minimiser of `sum rho_tau(y_i - theta)`.
///
/// Solved through the weighted-mean self-consistency identity
/// `m = sum psi(y_i - m) y_i / sum psi(y_i - m)`, started at the sample mean.
pub fn sample_expectile(tau: Asymmetry, values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(GeeeError::InvalidInput("empty sample".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(GeeeError::InvalidInput("sample contains non-finite values".into()));
    }

    let mut m = values.iter().sum::<f64>() / values.len() as f64;
    for _ in 0..FIXED_POINT_MAX_ITER {
        let (num, den) = values.iter().fold((0.0, 0.0), |(num, den), &y| {
            let w = check_weight(tau, y - m);
            (num + w * y, den + w)
        });
        let next = num / den;
        let done = (next - m).abs() < FIXED_POINT_TOL * (1.0 + m.abs());
        m = next;
        if done {
            return Ok(m);
        }
    }
    Err(GeeeError::Numerical(format!(
        "expectile fixed point did not settle after {FIXED_POINT_MAX_ITER} iterations"
    )))
}

/// Population `tau`-expectile of a marginal law.
///
/// Root of `tau E[(Y - m)+] = (1 - tau) E[(m - Y)+]`, using the closed-form
/// upper partial moment of the law and bracketed bisection.
pub fn distribution_expectile(tau: Asymmetry, marginal: &MarginalLaw) -> Result<f64> {
    let mean = marginal.mean();
    let t = tau.value();
    // E[(m - Y)+] = E[(Y - m)+] - (mean - m)
    let first_order = |m: f64| {
        let upper = marginal.upper_partial_moment(m);
        t * upper - (1.0 - t) * (upper - mean + m)
    };

    if (t - 0.5).abs() < f64::EPSILON {
        return Ok(mean);
    }

    // first_order is strictly decreasing in m
    let scale = marginal.variance().sqrt().max(1.0);
    let mut lo = mean - scale;
    let mut hi = mean + scale;
    let mut expansions = 0;
    while first_order(lo) < 0.0 || first_order(hi) > 0.0 {
        let width = hi - lo;
        lo -= width;
        hi += width;
        expansions += 1;
        if expansions > 60 {
            return Err(GeeeError::Numerical(format!(
                "expectile root not bracketed for tau={tau}"
            )));
        }
    }

    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if first_order(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * (1.0 + mid.abs()) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Density of the asymmetric normal distribution with location `mu`,
/// squared scale `sigma2` and asymmetry `tau`.
pub fn and_density(u: f64, mu: f64, sigma2: f64, tau: Asymmetry) -> Result<f64> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(GeeeError::InvalidInput(format!(
            "scale must be positive, got sigma2={sigma2}"
        )));
    }
    let t = tau.value();
    let sigma = sigma2.sqrt();
    let norm = 2.0 / (PI * sigma2).sqrt() * (t * (1.0 - t)).sqrt() / (t.sqrt() + (1.0 - t).sqrt());
    Ok(norm * (-loss(tau, (u - mu) / sigma)).exp())
}
