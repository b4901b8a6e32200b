//! Robust (sandwich) covariance of GEEE estimates and Wald intervals.
//!
//! For the stacked coefficient vector of a fit over `q` levels,
//!
//! ```text
//! D1 = N^-1 sum_i (W (x) X_i)' V_i^-1 Psi_i (I_q (x) X_i)
//! D0 = N^-1 sum_i (W (x) X_i)' V_i^-1 Psi_i e_i e_i' Psi_i V_i^-1 (W (x) X_i)
//! cov(beta) = D1^-1 D0 D1^-T / N
//! ```
//!
//! where `V_i` is block-diagonal across levels. The independence variant
//! replaces every `V_i` by the identity.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::LongitudinalDataset;
use crate::error::{GeeeError, Result};
use crate::expectile::check_weight;
use crate::fit::GeeeFit;
use crate::linalg::{checked_inverse, spd_inverse, symmetrize, CONDITION_WARNING};

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichCovariance {
    /// `D1`, `pq x pq`.
    pub bread: DMatrix<f64>,
    /// `D0`, `pq x pq`.
    pub meat: DMatrix<f64>,
    pub vcov: DMatrix<f64>,
    pub se: DVector<f64>,
    pub bread_condition: f64,
}

impl SandwichCovariance {
    pub fn ill_conditioned(&self) -> bool {
        self.bread_condition > CONDITION_WARNING
    }

    /// The `p x p` diagonal block belonging to level `k`.
    pub fn block(&self, k: usize, p: usize) -> DMatrix<f64> {
        self.vcov.view((k * p, k * p), (p, p)).into_owned()
    }
}

/// Sandwich covariance with identity working covariance.
pub fn sandwich_independence(fit: &GeeeFit, data: &LongitudinalDataset) -> Result<SandwichCovariance> {
    sandwich(fit, data, false)
}

/// Sandwich covariance with the fitted working covariance `sigma2 R(alpha)`.
pub fn sandwich_general(fit: &GeeeFit, data: &LongitudinalDataset) -> Result<SandwichCovariance> {
    sandwich(fit, data, true)
}

fn sandwich(fit: &GeeeFit, data: &LongitudinalDataset, working: bool) -> Result<SandwichCovariance> {
    let p = data.n_covariates();
    let q = fit.blocks.len();
    if fit.n_covariates != p || fit.n_obs != data.n_obs() {
        return Err(GeeeError::Dimension("fit does not belong to this dataset".into()));
    }
    for b in &fit.blocks {
        if b.residuals.len() != data.n_subjects() {
            return Err(GeeeError::Dimension("fit residuals do not match the subjects".into()));
        }
    }

    // V_i^{-1} per level and cluster size
    let mut inverses: Vec<Vec<Option<DMatrix<f64>>>> = Vec::with_capacity(q);
    for b in &fit.blocks {
        let mut per_size = vec![None; data.max_cluster_size() + 1];
        for m in data.cluster_sizes() {
            if per_size[m].is_some() {
                continue;
            }
            let vinv = if working {
                let r = b.nuisance.correlation.build_correlation(m)?;
                let rinv = spd_inverse(&r).map_err(|_| {
                    GeeeError::Numerical("working covariance is not invertible".into())
                })?;
                rinv / b.nuisance.sigma2
            } else {
                DMatrix::identity(m, m)
            };
            per_size[m] = Some(vinv);
        }
        inverses.push(per_size);
    }

    let dim = p * q;
    let mut bread = DMatrix::zeros(dim, dim);
    let mut meat = DMatrix::zeros(dim, dim);
    let mut g = DVector::zeros(dim);
    for (i, s) in data.subjects().iter().enumerate() {
        for (k, b) in fit.blocks.iter().enumerate() {
            let r = &b.residuals[i];
            let vinv = inverses[k][s.len()].as_ref().expect("cluster size cached");
            let mut left = s.design.transpose() * vinv * b.weight;
            for (t, mut col) in left.column_iter_mut().enumerate() {
                col *= check_weight(b.tau, r[t]);
            }
            let mut bread_block = bread.view_mut((k * p, k * p), (p, p));
            bread_block += &left * &s.design;
            g.rows_mut(k * p, p).copy_from(&(&left * r));
        }
        meat.ger(1.0, &g, &g, 1.0);
    }
    let n = data.n_obs() as f64;
    bread /= n;
    meat /= n;

    let (bread_inv, bread_condition) = checked_inverse(&bread, "sandwich bread")?;
    let vcov = symmetrize(&(&bread_inv * &meat * bread_inv.transpose() / n));
    let se = DVector::from_iterator(dim, vcov.diagonal().iter().map(|v| v.max(0.0).sqrt()));
    Ok(SandwichCovariance {
        bread,
        meat,
        vcov,
        se,
        bread_condition,
    })
}

/// Estimate, standard error and normal-theory interval of one coefficient.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientInterval {
    pub tau: f64,
    pub index: usize,
    pub estimate: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
}

/// `estimate -/+ z_{(1+level)/2} se` for every stacked coefficient.
pub fn wald_interval(
    fit: &GeeeFit,
    cov: &SandwichCovariance,
    level: f64,
) -> Result<Vec<CoefficientInterval>> {
    let z = normal_critical_value(level)?;
    let p = fit.n_covariates;
    if cov.se.len() != fit.n_params() {
        return Err(GeeeError::Dimension("covariance does not match the fit".into()));
    }
    let mut out = Vec::with_capacity(fit.n_params());
    for (k, b) in fit.blocks.iter().enumerate() {
        for j in 0..p {
            let estimate = b.beta[j];
            let se = cov.se[k * p + j];
            out.push(CoefficientInterval {
                tau: b.tau.value(),
                index: j,
                estimate,
                se,
                lower: estimate - z * se,
                upper: estimate + z * se,
            });
        }
    }
    Ok(out)
}

/// Two-sided normal critical value for confidence `level`.
pub fn normal_critical_value(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(GeeeError::InvalidInput(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(std.inverse_cdf(0.5 * (1.0 + level)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_values() {
        assert!((normal_critical_value(0.95).unwrap() - 1.959963984540054).abs() < 1e-9);
        assert!(normal_critical_value(1.0).is_err());
        assert!(normal_critical_value(0.0).is_err());
        let mut last = 0.0;
        for level in [0.5, 0.8, 0.9, 0.95, 0.99, 0.999999] {
            let z = normal_critical_value(level).unwrap();
            assert!(z > last);
            last = z;
        }
    }
}
