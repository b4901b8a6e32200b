//! The GEEE fitting engine.
//!
//! For one asymmetry level the estimating equations are
//!
//! ```text
//! S(beta) = sum_i X_i' V_i^{-1} Psi_i (y_i - X_i beta) = 0,   V_i = sigma2 * R_i(alpha)
//! ```
//!
//! solved by Fisher scoring started at the independence solution. Each
//! iteration first re-estimates `sigma2` and `alpha` from the current
//! residuals, then takes the step `[sum X_i' V_i^{-1} Psi_i X_i]^{-1} S`.
//! With a sequence of levels the working covariance and `Psi` are
//! block-diagonal across levels, so the stacked Fisher-scoring step splits
//! into one independent step per level and the level weights cancel.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::correlation::{
    estimate_alpha, estimate_sigma2, CorrelationKind, DofRecord, NuisanceEstimates,
    WorkingCorrelationSpec,
};
use crate::data::LongitudinalDataset;
use crate::error::{GeeeError, Result};
use crate::expectile::{check_weight, loss, Asymmetry, AsymmetrySequence};
use crate::linalg::{solve, spd_inverse};

/// Score growth factor that triggers step halving.
const SCORE_BLOWUP: f64 = 10.0;
const MAX_SCORE_HALVINGS: usize = 5;
const MAX_OBJECTIVE_HALVINGS: usize = 30;

/// Variance function `nu(mu)` of the working covariance; only the identity
/// is defined for the linear expectile model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum VarianceFunction {
    #[default]
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitControl {
    pub max_iterations: usize,
    /// Bound on `max |delta beta| / (1 + max |beta|)`.
    pub beta_tolerance: f64,
    /// Bound on the normalised score, see [`TauFit::final_score_norm`].
    pub score_tolerance: f64,
    pub variance_function: VarianceFunction,
}

impl Default for FitControl {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            beta_tolerance: 1e-8,
            score_tolerance: 1e-6,
            variance_function: VarianceFunction::Identity,
        }
    }
}

impl FitControl {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(GeeeError::InvalidInput("max_iterations must be at least 1".into()));
        }
        if !(self.beta_tolerance > 0.0 && self.score_tolerance > 0.0) {
            return Err(GeeeError::InvalidInput("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Non-fatal events recorded while fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "warning", rename_all = "snake_case")]
pub enum FitWarning {
    /// The moment estimate of alpha fell outside the valid range.
    AlphaClamped { tau: f64, iterations: usize },
    /// The correlation parameters could not be estimated; the fit fell back
    /// to independence.
    DegradedToIndependence { tau: f64, reason: String },
    /// All weighted residuals vanished; the previous nuisance values were kept.
    DegenerateScale { tau: f64, iteration: usize },
    StepHalved { tau: f64, iteration: usize, halvings: usize },
    NotConverged { tau: f64, iterations: usize },
}

/// The fit at one asymmetry level.
#[derive(Debug, Clone, PartialEq)]
pub struct TauFit {
    pub tau: Asymmetry,
    pub weight: f64,
    pub beta: DVector<f64>,
    /// Nuisance values used by the final scoring step; they define the
    /// working covariance for inference.
    pub nuisance: NuisanceEstimates,
    /// `y_i - X_i beta` per subject.
    pub residuals: Vec<DVector<f64>>,
    pub converged: bool,
    pub iterations: usize,
    /// `max |sigma2 * S(beta)| / (1 + ||X||_F ||y||_2)`, the scale-free score
    /// at the returned coefficients.
    pub final_score_norm: f64,
    /// Mean asymmetric loss at each iterate.
    pub objective_trace: Vec<f64>,
}

/// A GEEE fit at one or several asymmetry levels.
#[derive(Debug, Clone, PartialEq)]
pub struct GeeeFit {
    /// The requested structure; see each block's nuisance for the structure
    /// actually used.
    pub structure: CorrelationKind,
    pub taus: AsymmetrySequence,
    pub blocks: Vec<TauFit>,
    pub warnings: Vec<FitWarning>,
    pub n_obs: usize,
    pub n_covariates: usize,
}

impl GeeeFit {
    pub fn converged(&self) -> bool {
        self.blocks.iter().all(|b| b.converged)
    }

    /// `(beta_tau1', ..., beta_tauq')'`, length `p q`.
    pub fn stacked_beta(&self) -> DVector<f64> {
        let p = self.n_covariates;
        let mut out = DVector::zeros(p * self.blocks.len());
        for (k, b) in self.blocks.iter().enumerate() {
            out.rows_mut(k * p, p).copy_from(&b.beta);
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.n_covariates * self.blocks.len()
    }
}

/// Independence estimating equations (iteratively reweighted least squares).
pub fn fit_independence(
    data: &LongitudinalDataset,
    tau: Asymmetry,
    control: &FitControl,
) -> Result<GeeeFit> {
    fit_multi(data, &AsymmetrySequence::single(tau), CorrelationKind::Independence, control)
}

/// GEEE fit at a single asymmetry level.
pub fn fit_geee(
    data: &LongitudinalDataset,
    tau: Asymmetry,
    structure: CorrelationKind,
    control: &FitControl,
) -> Result<GeeeFit> {
    fit_multi(data, &AsymmetrySequence::single(tau), structure, control)
}

/// Joint GEEE fit over a sequence of asymmetry levels.
pub fn fit_multi(
    data: &LongitudinalDataset,
    taus: &AsymmetrySequence,
    structure: CorrelationKind,
    control: &FitControl,
) -> Result<GeeeFit> {
    control.validate()?;
    let stacked = Stacked::new(data);
    let mut blocks = Vec::with_capacity(taus.len());
    let mut warnings = Vec::new();
    for (tau, weight) in taus.iter() {
        let block = fit_block(data, &stacked, tau, weight, structure, control, &mut warnings)?;
        blocks.push(block);
    }
    Ok(GeeeFit {
        structure,
        taus: taus.clone(),
        blocks,
        warnings,
        n_obs: data.n_obs(),
        n_covariates: data.n_covariates(),
    })
}

/// Stacked design and response, reused across levels.
struct Stacked {
    x: DMatrix<f64>,
    y: DVector<f64>,
    score_scale: f64,
}

impl Stacked {
    fn new(data: &LongitudinalDataset) -> Self {
        let x = data.stacked_design();
        let y = data.stacked_response();
        let score_scale = 1.0 + x.norm() * y.norm();
        Self { x, y, score_scale }
    }
}

fn objective(tau: Asymmetry, residuals: &DVector<f64>) -> f64 {
    residuals.iter().map(|&r| loss(tau, r)).sum::<f64>() / residuals.len() as f64
}

fn split_residuals(data: &LongitudinalDataset, beta: &DVector<f64>) -> Vec<DVector<f64>> {
    data.subjects()
        .iter()
        .map(|s| &s.response - &s.design * beta)
        .collect()
}

fn relative_change(step: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    step.amax() / (1.0 + beta.amax())
}

fn fit_block(
    data: &LongitudinalDataset,
    stacked: &Stacked,
    tau: Asymmetry,
    weight: f64,
    structure: CorrelationKind,
    control: &FitControl,
    warnings: &mut Vec<FitWarning>,
) -> Result<TauFit> {
    let independent = independence_irls(data, stacked, tau, weight, control, warnings)?;
    if structure == CorrelationKind::Independence {
        return Ok(independent);
    }
    match correlated_scoring(data, stacked, &independent, structure, control, warnings) {
        Err(GeeeError::DegreesOfFreedom(reason)) => {
            warnings.push(FitWarning::DegradedToIndependence {
                tau: tau.value(),
                reason,
            });
            Ok(independent)
        }
        other => other,
    }
}

/// Iteratively reweighted least squares for the independence equations.
fn independence_irls(
    data: &LongitudinalDataset,
    stacked: &Stacked,
    tau: Asymmetry,
    weight: f64,
    control: &FitControl,
    warnings: &mut Vec<FitWarning>,
) -> Result<TauFit> {
    let x = &stacked.x;
    let y = &stacked.y;
    let p = x.ncols();

    // psi_0.5 is constant, so least squares is the natural start
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    let mut beta = solve(&xtx, &xty, "X'X")?;

    let mut residuals = y - x * &beta;
    let mut current = objective(tau, &residuals);
    let mut trace = vec![current];
    let mut change = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut score_norm;

    loop {
        let w = residuals.map(|r| check_weight(tau, r));
        let mut xw = x.clone();
        for (mut row, wi) in xw.row_iter_mut().zip(w.iter()) {
            row *= *wi;
        }
        let info = xw.transpose() * x;
        let score = xw.transpose() * &residuals;
        // V = sigma2 I; report the score with the scale factored out
        score_norm = score.amax() / stacked.score_scale;

        if change < control.beta_tolerance && score_norm < control.score_tolerance {
            converged = true;
            break;
        }
        if iterations == control.max_iterations {
            break;
        }
        iterations += 1;

        let mut step = solve(&info, &score, "weighted normal equations")?;
        let mut halvings = 0;
        let (next_beta, next_residuals, next_obj) = loop {
            let candidate = &beta + &step;
            let cand_res = y - x * &candidate;
            let cand_obj = objective(tau, &cand_res);
            if cand_obj <= current || halvings == MAX_OBJECTIVE_HALVINGS {
                break (candidate, cand_res, cand_obj);
            }
            step *= 0.5;
            halvings += 1;
        };
        if halvings > 0 {
            warnings.push(FitWarning::StepHalved {
                tau: tau.value(),
                iteration: iterations,
                halvings,
            });
        }
        change = relative_change(&step, &next_beta);
        beta = next_beta;
        residuals = next_residuals;
        current = next_obj;
        trace.push(current);
    }

    if !converged {
        warnings.push(FitWarning::NotConverged {
            tau: tau.value(),
            iterations,
        });
    }

    let residuals = split_residuals(data, &beta);
    let sigma2 = estimate_sigma2(tau, &residuals, p)?;
    let nuisance = NuisanceEstimates {
        sigma2,
        correlation: WorkingCorrelationSpec::independence(data.max_cluster_size()),
        dof: DofRecord {
            sigma2_divisor: (data.n_obs() - p) as f64,
            alpha_divisor: None,
        },
        alpha_clamped: false,
    };
    Ok(TauFit {
        tau,
        weight,
        beta,
        nuisance,
        residuals,
        converged,
        iterations,
        final_score_norm: score_norm,
        objective_trace: trace,
    })
}

/// Inverse working correlation matrices keyed by cluster size.
fn inverse_correlations(
    spec: &WorkingCorrelationSpec,
    data: &LongitudinalDataset,
) -> Result<BTreeMap<usize, DMatrix<f64>>> {
    let mut out = BTreeMap::new();
    for m in data.cluster_sizes() {
        if out.contains_key(&m) {
            continue;
        }
        let r = spec.build_correlation(m)?;
        let inv = spd_inverse(&r).map_err(|_| {
            GeeeError::Numerical(format!(
                "{} working correlation of size {m} is not positive definite",
                spec.kind()
            ))
        })?;
        out.insert(m, inv);
    }
    Ok(out)
}

/// `(sum X_i' R_i^{-1} Psi_i X_i, sum X_i' R_i^{-1} Psi_i r_i)` with the
/// scale `sigma2` factored out.
fn scoring_terms(
    data: &LongitudinalDataset,
    tau: Asymmetry,
    beta: &DVector<f64>,
    inverses: &BTreeMap<usize, DMatrix<f64>>,
) -> (DMatrix<f64>, DVector<f64>) {
    let p = data.n_covariates();
    let mut info = DMatrix::zeros(p, p);
    let mut score = DVector::zeros(p);
    for s in data.subjects() {
        let r = &s.response - &s.design * beta;
        let rinv = &inverses[&s.len()];
        // X' R^{-1} Psi
        let mut left = s.design.transpose() * rinv;
        for (t, mut col) in left.column_iter_mut().enumerate() {
            col *= check_weight(tau, r[t]);
        }
        info += &left * &s.design;
        score += &left * &r;
    }
    (info, score)
}

/// Steps 2-4 of the GEEE algorithm, started at the independence fit.
fn correlated_scoring(
    data: &LongitudinalDataset,
    stacked: &Stacked,
    start: &TauFit,
    structure: CorrelationKind,
    control: &FitControl,
    warnings: &mut Vec<FitWarning>,
) -> Result<TauFit> {
    let tau = start.tau;
    let p = data.n_covariates();
    let max_m = data.max_cluster_size();

    let mut beta = start.beta.clone();
    let mut nuisance = start.nuisance.clone();
    let mut have_alpha = false;
    let mut clamped_any = false;
    let mut trace = vec![objective(tau, &(&stacked.y - &stacked.x * &beta))];
    let mut change = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut score_norm;

    loop {
        // Step 2: nuisance parameters from the current residuals
        let residuals = split_residuals(data, &beta);
        let sigma2 = estimate_sigma2(tau, &residuals, p)?;
        if sigma2 > 0.0 {
            let alpha = estimate_alpha(structure, tau, &residuals, sigma2, p, max_m)?;
            clamped_any |= alpha.clamped;
            nuisance = NuisanceEstimates {
                sigma2,
                correlation: alpha.correlation,
                dof: DofRecord {
                    sigma2_divisor: (data.n_obs() - p) as f64,
                    alpha_divisor: alpha.divisor,
                },
                alpha_clamped: alpha.clamped,
            };
            have_alpha = true;
        } else {
            warnings.push(FitWarning::DegenerateScale {
                tau: tau.value(),
                iteration: iterations,
            });
            if !have_alpha {
                // nothing to correlate: the independence solution is exact
                return Ok(start.clone());
            }
        }

        let inverses = inverse_correlations(&nuisance.correlation, data)?;
        let (info, score) = scoring_terms(data, tau, &beta, &inverses);
        score_norm = score.amax() / stacked.score_scale;

        if change < control.beta_tolerance && score_norm < control.score_tolerance {
            converged = true;
            break;
        }
        if iterations == control.max_iterations {
            break;
        }
        iterations += 1;

        // Step 3: scoring update, halved only if the score blows up
        let mut step = solve(&info, &score, "GEEE update matrix")?;
        let mut halvings = 0;
        while halvings < MAX_SCORE_HALVINGS {
            let (_, trial) = scoring_terms(data, tau, &(&beta + &step), &inverses);
            if trial.amax() / stacked.score_scale <= SCORE_BLOWUP * score_norm.max(f64::MIN_POSITIVE) {
                break;
            }
            step *= 0.5;
            halvings += 1;
        }
        if halvings > 0 {
            warnings.push(FitWarning::StepHalved {
                tau: tau.value(),
                iteration: iterations,
                halvings,
            });
        }
        beta += &step;
        change = relative_change(&step, &beta);
        trace.push(objective(tau, &(&stacked.y - &stacked.x * &beta)));
    }

    if clamped_any {
        warnings.push(FitWarning::AlphaClamped {
            tau: tau.value(),
            iterations,
        });
    }
    if !converged {
        warnings.push(FitWarning::NotConverged {
            tau: tau.value(),
            iterations,
        });
    }

    Ok(TauFit {
        tau,
        weight: start.weight,
        residuals: split_residuals(data, &beta),
        beta,
        nuisance,
        converged,
        iterations,
        final_score_norm: score_norm,
        objective_trace: trace,
    })
}
