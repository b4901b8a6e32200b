//! Quasi-likelihood information criterion for choosing a working
//! correlation structure.
//!
//! `QIC(R) = 1/2 sum_k sum_it r_itk^2 / sigma2_k + 2 tr(Omega_I V_R)`, where
//! `V_R` is the sandwich covariance of the structure-`R` fit and `Omega_I`
//! inverts the model-based covariance of the independence estimator at the
//! structure-`R` coefficients,
//! `(X' Psi X)^-1 (sigma2 X'X) (X' Psi X)^-1`, one block per level.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::correlation::CorrelationKind;
use crate::data::LongitudinalDataset;
use crate::error::Result;
use crate::expectile::{check_weight, AsymmetrySequence};
use crate::fit::{fit_multi, FitControl, GeeeFit};
use crate::inference::{sandwich_general, SandwichCovariance};
use crate::linalg::{checked_inverse, symmetrize};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QicEntry {
    pub structure: CorrelationKind,
    pub qic: f64,
    /// `1/2 sum r^2 / sigma2`.
    pub quasi_likelihood: f64,
    /// `2 tr(Omega_I V_R)`.
    pub penalty: f64,
    pub converged: bool,
}

/// One candidate's outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum QicOutcome {
    Ok(QicEntry),
    Failed { structure: CorrelationKind, reason: String },
}

impl QicOutcome {
    pub fn structure(&self) -> CorrelationKind {
        match self {
            QicOutcome::Ok(e) => e.structure,
            QicOutcome::Failed { structure, .. } => *structure,
        }
    }

    pub fn entry(&self) -> Option<&QicEntry> {
        match self {
            QicOutcome::Ok(e) => Some(e),
            QicOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QicReport {
    /// In canonical structure order.
    pub outcomes: Vec<QicOutcome>,
    pub selected: Option<CorrelationKind>,
}

impl QicReport {
    pub fn entry(&self, structure: CorrelationKind) -> Option<&QicEntry> {
        self.outcomes
            .iter()
            .filter_map(QicOutcome::entry)
            .find(|e| e.structure == structure)
    }
}

/// `1/2 sum_k sum r^2 / sigma2_k` from the stored residuals.
pub fn quasi_likelihood_term(fit: &GeeeFit) -> f64 {
    fit.blocks
        .iter()
        .map(|b| {
            let ss: f64 = b.residuals.iter().flat_map(|r| r.iter()).map(|e| e * e).sum();
            0.5 * ss / b.nuisance.sigma2
        })
        .sum()
}

/// QIC of an existing fit.
pub fn qic_from_fit(fit: &GeeeFit, data: &LongitudinalDataset) -> Result<QicEntry> {
    let robust = sandwich_general(fit, data)?;
    qic_with_covariance(fit, data, &robust)
}

/// QIC of a fit whose sandwich covariance is already available.
pub fn qic_with_covariance(
    fit: &GeeeFit,
    data: &LongitudinalDataset,
    robust: &SandwichCovariance,
) -> Result<QicEntry> {
    let p = data.n_covariates();
    let xtx = {
        let x = data.stacked_design();
        x.transpose() * &x
    };

    let mut trace = 0.0;
    for (k, b) in fit.blocks.iter().enumerate() {
        let mut info = DMatrix::zeros(p, p);
        for (s, r) in data.subjects().iter().zip(&b.residuals) {
            let mut xw = s.design.clone();
            for (t, mut row) in xw.row_iter_mut().enumerate() {
                row *= check_weight(b.tau, r[t]);
            }
            info += s.design.transpose() * xw;
        }
        let (model_inv, _) = checked_inverse(&(&xtx * b.nuisance.sigma2), "independence scale matrix")?;
        let omega = symmetrize(&(&info * model_inv * &info));
        trace += (omega * robust.block(k, p)).trace();
    }

    let quasi_likelihood = quasi_likelihood_term(fit);
    let penalty = 2.0 * trace;
    Ok(QicEntry {
        structure: fit.structure,
        qic: quasi_likelihood + penalty,
        quasi_likelihood,
        penalty,
        converged: fit.converged(),
    })
}

/// Fit under `structure` and compute its QIC.
pub fn qic(
    data: &LongitudinalDataset,
    taus: &AsymmetrySequence,
    structure: CorrelationKind,
    control: &FitControl,
) -> Result<QicEntry> {
    let fit = fit_multi(data, taus, structure, control)?;
    qic_from_fit(&fit, data)
}

/// QIC of every candidate and the minimising structure. Candidates that
/// fail to fit or to converge are reported but never selected.
pub fn select_structure(
    data: &LongitudinalDataset,
    taus: &AsymmetrySequence,
    candidates: &[CorrelationKind],
    control: &FitControl,
) -> QicReport {
    let mut kinds = candidates.to_vec();
    kinds.sort();
    kinds.dedup();
    let outcomes = kinds
        .into_iter()
        .map(|kind| match qic(data, taus, kind, control) {
            Ok(entry) if entry.converged => QicOutcome::Ok(entry),
            Ok(_) => QicOutcome::Failed {
                structure: kind,
                reason: "fit did not converge".into(),
            },
            Err(e) => QicOutcome::Failed {
                structure: kind,
                reason: e.to_string(),
            },
        })
        .collect();
    report_from_outcomes(outcomes)
}

/// Assemble a report from outcomes listed in canonical order.
pub fn report_from_outcomes(outcomes: Vec<QicOutcome>) -> QicReport {
    let selected = outcomes
        .iter()
        .filter_map(QicOutcome::entry)
        .filter(|e| e.qic.is_finite())
        // strict comparison keeps the earliest structure on ties
        .fold(None::<&QicEntry>, |best, e| match best {
            Some(b) if b.qic <= e.qic => Some(b),
            _ => Some(e),
        })
        .map(|e| e.structure);
    QicReport { outcomes, selected }
}
