//! Monte-Carlo study of GEEE estimators under AR(1)-dependent errors.
//!
//! Data follow `y_it = b0 + x_it b1 + (1 + gamma x_it) e_it` with
//! `b0 = b1 = 0`. Errors are drawn from a Gaussian copula with AR(1)
//! correlation `rho`, mapped to the marginal law and centred on the
//! `tau`-expectile of that law, so the true coefficients are zero at every
//! level. Covariates are standard normal for the location-shift model
//! (`gamma = 0`) and chi-square otherwise.
//!
//! Every replication draws from its own ChaCha stream of the root seed, so
//! all levels and structures of a replication share the same data and the
//! study is reproducible bit for bit, parallel or not.

pub mod config;
pub mod report;

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::correlation::{CorrelationKind, WorkingCorrelationSpec};
use crate::data::{LongitudinalDataset, Subject};
use crate::error::{GeeeError, Result};
use crate::expectile::{distribution_expectile, Asymmetry};
use crate::fit::{fit_geee, FitControl};
use crate::inference::sandwich_general;
use crate::marginal::MarginalLaw;
use crate::selection::qic_with_covariance;

/// Index of the slope in the simulated design `[1, x]`.
pub const FOCUS_COEFFICIENT: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PanelDesign {
    Balanced { m: usize },
    /// Cluster sizes drawn uniformly from `min..=max`.
    Unbalanced { min: usize, max: usize },
}

impl PanelDesign {
    pub const STANDARD_BALANCED: PanelDesign = PanelDesign::Balanced { m: 4 };
    pub const STANDARD_UNBALANCED: PanelDesign = PanelDesign::Unbalanced { min: 3, max: 8 };

    fn validate(&self) -> Result<()> {
        match *self {
            PanelDesign::Balanced { m } if m >= 1 => Ok(()),
            PanelDesign::Unbalanced { min, max } if min >= 1 && min <= max => Ok(()),
            other => Err(GeeeError::Config(format!("invalid panel design {other}"))),
        }
    }

    fn max_cluster_size(&self) -> usize {
        match *self {
            PanelDesign::Balanced { m } => m,
            PanelDesign::Unbalanced { max, .. } => max,
        }
    }
}

impl fmt::Display for PanelDesign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PanelDesign::Balanced { m } => write!(f, "balanced:{m}"),
            PanelDesign::Unbalanced { min, max } => write!(f, "unbalanced:{min}-{max}"),
        }
    }
}

impl std::str::FromStr for PanelDesign {
    type Err = GeeeError;

    /// `balanced:4` or `unbalanced:3-8`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let bad = || GeeeError::Config(format!("invalid design `{s}` (expected balanced:M or unbalanced:MIN-MAX)"));
        let design = if let Some(m) = s.strip_prefix("balanced:") {
            PanelDesign::Balanced {
                m: m.trim().parse().map_err(|_| bad())?,
            }
        } else if let Some(range) = s.strip_prefix("unbalanced:") {
            let (lo, hi) = range.split_once('-').ok_or_else(bad)?;
            PanelDesign::Unbalanced {
                min: lo.trim().parse().map_err(|_| bad())?,
                max: hi.trim().parse().map_err(|_| bad())?,
            }
        } else {
            return Err(bad());
        };
        design.validate()?;
        Ok(design)
    }
}

/// One cell of the simulation grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationScenario {
    /// Heteroscedasticity: 0 for the location-shift model, 0.1 for the
    /// location-scale-shift model.
    pub gamma: f64,
    pub marginal: MarginalLaw,
    /// AR(1) parameter of the Gaussian copula.
    pub rho: f64,
    pub n_subjects: usize,
    pub design: PanelDesign,
    pub replications: usize,
    pub taus: Vec<Asymmetry>,
    pub structures: Vec<CorrelationKind>,
    /// Degrees of freedom of the chi-square covariate when `gamma != 0`.
    pub covariate_dof: f64,
    pub seed: u64,
    /// Allows values outside the standard grid.
    pub extended: bool,
}

impl SimulationScenario {
    /// Location-shift, standard normal errors, balanced `m = 4`, three
    /// levels and all four structures.
    pub fn baseline(rho: f64, n_subjects: usize, replications: usize, seed: u64) -> Self {
        Self {
            gamma: 0.0,
            marginal: MarginalLaw::standard_normal(),
            rho,
            n_subjects,
            design: PanelDesign::STANDARD_BALANCED,
            replications,
            taus: [0.25, 0.5, 0.75].iter().map(|&t| Asymmetry::new(t).unwrap()).collect(),
            structures: CorrelationKind::ALL.to_vec(),
            covariate_dof: 3.0,
            seed,
            extended: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(GeeeError::Config(msg));
        if self.replications == 0 {
            return cfg("replications must be at least 1".into());
        }
        if self.n_subjects < 2 {
            return cfg(format!("need at least 2 subjects, got {}", self.n_subjects));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return cfg(format!("copula correlation must lie in (-1, 1), got {}", self.rho));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return cfg(format!("gamma must be non-negative, got {}", self.gamma));
        }
        if !(self.covariate_dof.is_finite() && self.covariate_dof > 0.0) {
            return cfg(format!("covariate_dof must be positive, got {}", self.covariate_dof));
        }
        if self.taus.is_empty() {
            return cfg("at least one tau is required".into());
        }
        if self.taus.windows(2).any(|w| w[0].value() >= w[1].value()) {
            return cfg("taus must be strictly increasing".into());
        }
        if self.structures.is_empty() {
            return cfg("at least one structure is required".into());
        }
        self.marginal.validate().map_err(|e| GeeeError::Config(e.to_string()))?;
        self.design.validate()?;

        if !self.extended {
            let mut outside = Vec::new();
            if ![0.0, 0.1].contains(&self.gamma) {
                outside.push(format!("gamma={}", self.gamma));
            }
            if ![0.1, 0.5, 0.9].contains(&self.rho) {
                outside.push(format!("rho={}", self.rho));
            }
            if ![50, 100].contains(&self.n_subjects) {
                outside.push(format!("n={}", self.n_subjects));
            }
            if ![PanelDesign::STANDARD_BALANCED, PanelDesign::STANDARD_UNBALANCED].contains(&self.design) {
                outside.push(format!("design={}", self.design));
            }
            let standard = [
                MarginalLaw::standard_normal(),
                MarginalLaw::StudentT { dof: 3.0 },
                MarginalLaw::ChiSquared { dof: 3.0 },
            ];
            if !standard.contains(&self.marginal) {
                outside.push(format!("marginal={}", self.marginal));
            }
            if self.taus.iter().any(|t| ![0.25, 0.5, 0.75].contains(&t.value())) {
                outside.push("taus".into());
            }
            if !outside.is_empty() {
                return cfg(format!(
                    "values outside the standard grid ({}); set extended = true to allow them",
                    outside.join(", ")
                ));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        format!(
            "gamma={} marginal={} rho={} n={} design={}",
            self.gamma, self.marginal, self.rho, self.n_subjects, self.design
        )
    }

    fn covariate_law(&self) -> CovariateLaw {
        if self.gamma == 0.0 {
            CovariateLaw::StandardNormal
        } else {
            CovariateLaw::ChiSquared(self.covariate_dof)
        }
    }
}

enum CovariateLaw {
    StandardNormal,
    ChiSquared(f64),
}

/// True coefficients `(b0_tau, b1_tau)` of one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrueCoefficients {
    pub tau: f64,
    pub intercept: f64,
    pub slope: f64,
    /// Expectile of the marginal law subtracted from the raw errors.
    pub centering: f64,
}

/// The data of one replication.
#[derive(Debug, Clone)]
pub struct GeneratedReplicate {
    /// One dataset per level, in scenario order.
    pub datasets: Vec<LongitudinalDataset>,
    pub truth: Vec<TrueCoefficients>,
    /// Uncentred copula errors per subject.
    pub raw_errors: Vec<DVector<f64>>,
    pub covariates: Vec<DVector<f64>>,
}

/// Expectiles of the marginal law at every level of the scenario.
pub fn centering_shifts(scenario: &SimulationScenario) -> Result<Vec<f64>> {
    scenario
        .taus
        .iter()
        .map(|&t| distribution_expectile(t, &scenario.marginal))
        .collect()
}

fn ar1_root(rho: f64, m: usize) -> Result<DMatrix<f64>> {
    let r = DMatrix::from_fn(m, m, |t, s| rho.powi(t.abs_diff(s) as i32));
    r.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| GeeeError::Numerical(format!("AR(1) copula correlation {rho} is not positive definite")))
}

/// The random stream of replication `index`.
pub fn replicate_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Draws replication `replicate_index` of the scenario.
pub fn generate_scenario_data(
    scenario: &SimulationScenario,
    replicate_index: usize,
) -> Result<GeneratedReplicate> {
    let shifts = centering_shifts(scenario)?;
    generate_with_shifts(scenario, replicate_index, &shifts)
}

fn generate_with_shifts(
    scenario: &SimulationScenario,
    replicate_index: usize,
    shifts: &[f64],
) -> Result<GeneratedReplicate> {
    let mut rng = replicate_rng(scenario.seed, replicate_index);
    let std_normal = Normal::new(0.0, 1.0).expect("standard normal");
    let covariate_law = scenario.covariate_law();
    let chi = match covariate_law {
        CovariateLaw::ChiSquared(dof) => Some(
            ChiSquared::new(dof).map_err(|e| GeeeError::Config(format!("covariate law: {e}")))?,
        ),
        CovariateLaw::StandardNormal => None,
    };

    let max_m = scenario.design.max_cluster_size();
    let roots = (1..=max_m)
        .map(|m| ar1_root(scenario.rho, m))
        .collect::<Result<Vec<_>>>()?;

    let mut covariates = Vec::with_capacity(scenario.n_subjects);
    let mut raw_errors = Vec::with_capacity(scenario.n_subjects);
    for _ in 0..scenario.n_subjects {
        let m = match scenario.design {
            PanelDesign::Balanced { m } => m,
            PanelDesign::Unbalanced { min, max } => rng.random_range(min..=max),
        };
        let x = DVector::from_iterator(
            m,
            (0..m).map(|_| match &chi {
                Some(chi) => chi.sample(&mut rng),
                None => StandardNormal.sample(&mut rng),
            }),
        );
        let z: DVector<f64> = DVector::from_iterator(m, (0..m).map(|_| StandardNormal.sample(&mut rng)));
        let z = &roots[m - 1] * z;
        let errors = z.map(|zt| match scenario.marginal {
            // F^{-1}(Phi(z)) is affine for the normal law
            MarginalLaw::Normal { mean, variance } => mean + variance.sqrt() * zt,
            law => law.quantile(std_normal.cdf(zt)),
        });
        covariates.push(x);
        raw_errors.push(errors);
    }

    let mut datasets = Vec::with_capacity(scenario.taus.len());
    let mut truth = Vec::with_capacity(scenario.taus.len());
    for (&tau, &shift) in scenario.taus.iter().zip(shifts) {
        let subjects = covariates
            .iter()
            .zip(&raw_errors)
            .enumerate()
            .map(|(i, (x, e))| {
                let m = x.len();
                let y = DVector::from_fn(m, |t, _| (1.0 + scenario.gamma * x[t]) * (e[t] - shift));
                let design = DMatrix::from_fn(m, 2, |t, j| if j == 0 { 1.0 } else { x[t] });
                Subject::new(format!("{}", i + 1), y, design)
            })
            .collect();
        datasets.push(LongitudinalDataset::new(subjects)?);
        truth.push(TrueCoefficients {
            tau: tau.value(),
            intercept: 0.0,
            slope: 0.0,
            centering: shift,
        });
    }

    Ok(GeneratedReplicate {
        datasets,
        truth,
        raw_errors,
        covariates,
    })
}

/// Slope estimate and sandwich standard error of one fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeEstimate {
    pub estimate: f64,
    pub se: f64,
    pub qic: f64,
}

/// Results of one replication: `estimates[level][structure]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateOutcome {
    pub index: usize,
    pub estimates: Vec<Vec<SlopeEstimate>>,
    /// Minimiser over structures of the QIC summed across levels.
    pub selected: Option<CorrelationKind>,
}

fn run_replicate(
    scenario: &SimulationScenario,
    index: usize,
    shifts: &[f64],
    control: &FitControl,
) -> Result<ReplicateOutcome> {
    let generated = generate_with_shifts(scenario, index, shifts)?;
    let mut estimates = Vec::with_capacity(scenario.taus.len());
    let mut totals = vec![0.0; scenario.structures.len()];
    for (&tau, data) in scenario.taus.iter().zip(&generated.datasets) {
        let mut row = Vec::with_capacity(scenario.structures.len());
        for (s, &kind) in scenario.structures.iter().enumerate() {
            let fit = fit_geee(data, tau, kind, control)?;
            if !fit.converged() {
                return Err(GeeeError::Numerical(format!("{kind} fit at tau={tau} did not converge")));
            }
            let cov = sandwich_general(&fit, data)?;
            let qic = qic_with_covariance(&fit, data, &cov)?;
            totals[s] += qic.qic;
            row.push(SlopeEstimate {
                estimate: fit.blocks[0].beta[FOCUS_COEFFICIENT],
                se: cov.se[FOCUS_COEFFICIENT],
                qic: qic.qic,
            });
        }
        estimates.push(row);
    }

    let mut order: Vec<usize> = (0..scenario.structures.len()).collect();
    order.sort_by_key(|&s| scenario.structures[s].rank());
    let selected = order
        .into_iter()
        .filter(|&s| totals[s].is_finite())
        .fold(None::<usize>, |best, s| match best {
            Some(b) if totals[b] <= totals[s] => Some(b),
            _ => Some(s),
        })
        .map(|s| scenario.structures[s]);

    Ok(ReplicateOutcome {
        index,
        estimates,
        selected,
    })
}

/// Bias, efficiency and spread of the slope estimates for one
/// (level, structure) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellMetrics {
    pub tau: f64,
    pub structure: CorrelationKind,
    pub bias: f64,
    /// `MSE(Ind) / MSE(structure)`; absent when independence is not fitted.
    pub eff: Option<f64>,
    /// Sample standard deviation of the estimates; absent with one replication.
    pub sd: Option<f64>,
    /// Mean sandwich standard error.
    pub se: f64,
    pub mse: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateFailure {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub scenario: SimulationScenario,
    pub truth: Vec<TrueCoefficients>,
    pub cells: Vec<CellMetrics>,
    pub qic_selection_counts: BTreeMap<CorrelationKind, usize>,
    pub replications_used: usize,
    pub failures: Vec<ReplicateFailure>,
}

impl ScenarioResult {
    pub fn cell(&self, tau: f64, structure: CorrelationKind) -> Option<&CellMetrics> {
        self.cells
            .iter()
            .find(|c| c.tau == tau && c.structure == structure)
    }
}

/// Runs every replication of the scenario and aggregates the metrics.
pub fn run_study(scenario: &SimulationScenario) -> Result<ScenarioResult> {
    run_study_with(scenario, &FitControl::default())
}

pub fn run_study_with(scenario: &SimulationScenario, control: &FitControl) -> Result<ScenarioResult> {
    scenario.validate()?;
    let shifts = centering_shifts(scenario)?;

    let outcomes: Vec<std::result::Result<ReplicateOutcome, ReplicateFailure>> = (0..scenario.replications)
        .into_par_iter()
        .map(|index| {
            run_replicate(scenario, index, &shifts, control).map_err(|e| ReplicateFailure {
                index,
                reason: e.to_string(),
            })
        })
        .collect();

    let mut used = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(o) => used.push(o),
            Err(f) => failures.push(f),
        }
    }

    let truth: Vec<TrueCoefficients> = scenario
        .taus
        .iter()
        .zip(&shifts)
        .map(|(t, &c)| TrueCoefficients {
            tau: t.value(),
            intercept: 0.0,
            slope: 0.0,
            centering: c,
        })
        .collect();

    let mut qic_selection_counts: BTreeMap<CorrelationKind, usize> =
        scenario.structures.iter().map(|&k| (k, 0)).collect();
    for o in &used {
        if let Some(k) = o.selected {
            *qic_selection_counts.entry(k).or_default() += 1;
        }
    }

    let cells = aggregate(scenario, &truth, &used);
    Ok(ScenarioResult {
        scenario: scenario.clone(),
        truth,
        cells,
        qic_selection_counts,
        replications_used: used.len(),
        failures,
    })
}

fn aggregate(
    scenario: &SimulationScenario,
    truth: &[TrueCoefficients],
    used: &[ReplicateOutcome],
) -> Vec<CellMetrics> {
    let reps = used.len() as f64;
    let ind = scenario
        .structures
        .iter()
        .position(|&k| k == CorrelationKind::Independence);
    let mut cells = Vec::new();
    if used.is_empty() {
        return cells;
    }
    for (k, t) in truth.iter().enumerate() {
        let mse_of = |s: usize| {
            used.iter()
                .map(|o| (o.estimates[k][s].estimate - t.slope).powi(2))
                .sum::<f64>()
                / reps
        };
        let mse_ind = ind.map(mse_of);
        for (s, &structure) in scenario.structures.iter().enumerate() {
            let estimates: Vec<f64> = used.iter().map(|o| o.estimates[k][s].estimate).collect();
            let mean = estimates.iter().sum::<f64>() / reps;
            let sd = (used.len() > 1).then(|| {
                (estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (reps - 1.0)).sqrt()
            });
            let se = used.iter().map(|o| o.estimates[k][s].se).sum::<f64>() / reps;
            let mse = mse_of(s);
            cells.push(CellMetrics {
                tau: t.tau,
                structure,
                bias: mean - t.slope,
                eff: mse_ind.map(|m| m / mse),
                sd,
                se,
                mse,
                rmse: mse.sqrt(),
            });
        }
    }
    cells
}

/// Structure selection counts of several scenarios and their total.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QicFrequencyTable {
    pub rows: Vec<QicFrequencyRow>,
    pub pooled: BTreeMap<CorrelationKind, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QicFrequencyRow {
    pub label: String,
    pub rho: f64,
    pub counts: BTreeMap<CorrelationKind, usize>,
    pub replications_used: usize,
}

impl QicFrequencyTable {
    pub fn from_results(results: &[ScenarioResult]) -> Self {
        let mut pooled = BTreeMap::new();
        let rows = results
            .iter()
            .map(|r| {
                for (&k, &c) in &r.qic_selection_counts {
                    *pooled.entry(k).or_default() += c;
                }
                QicFrequencyRow {
                    label: r.scenario.label(),
                    rho: r.scenario.rho,
                    counts: r.qic_selection_counts.clone(),
                    replications_used: r.replications_used,
                }
            })
            .collect();
        Self { rows, pooled }
    }

    /// Structure with the most selections; ties go to the earlier structure.
    pub fn plurality(&self) -> Option<CorrelationKind> {
        self.pooled
            .iter()
            .fold(None::<(CorrelationKind, usize)>, |best, (&k, &c)| match best {
                Some((_, bc)) if bc >= c => best,
                _ => Some((k, c)),
            })
            .map(|(k, _)| k)
    }
}

/// QIC selection frequencies across scenarios (e.g. pooled over `rho`).
pub fn qic_frequency_study(scenarios: &[SimulationScenario]) -> Result<QicFrequencyTable> {
    let results = scenarios.iter().map(run_study).collect::<Result<Vec<_>>>()?;
    Ok(QicFrequencyTable::from_results(&results))
}

/// Working correlation the data-generating process corresponds to.
pub fn true_structure(scenario: &SimulationScenario) -> Result<WorkingCorrelationSpec> {
    WorkingCorrelationSpec::ar1(scenario.rho, scenario.design.max_cluster_size())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn design_parsing() {
        assert_eq!("balanced:4".parse::<PanelDesign>().unwrap(), PanelDesign::STANDARD_BALANCED);
        assert_eq!(
            "unbalanced:3-8".parse::<PanelDesign>().unwrap(),
            PanelDesign::STANDARD_UNBALANCED
        );
        assert!("unbalanced:8-3".parse::<PanelDesign>().is_err());
        assert!("ragged".parse::<PanelDesign>().is_err());
    }

    #[test]
    fn validation_flags_extended_values() {
        let mut s = SimulationScenario::baseline(0.0, 100, 10, 1);
        assert!(matches!(s.validate(), Err(GeeeError::Config(_))));
        s.extended = true;
        assert!(s.validate().is_ok());
        s.replications = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn generation_is_reproducible_and_stream_separated() {
        let s = SimulationScenario::baseline(0.5, 50, 3, 7);
        let a = generate_scenario_data(&s, 0).unwrap();
        let b = generate_scenario_data(&s, 0).unwrap();
        let c = generate_scenario_data(&s, 1).unwrap();
        assert_eq!(a.raw_errors, b.raw_errors);
        assert_eq!(a.datasets, b.datasets);
        assert_ne!(a.raw_errors, c.raw_errors);
    }

    #[test]
    fn normal_median_level_needs_no_shift() {
        let s = SimulationScenario::baseline(0.5, 50, 3, 7);
        let shifts = centering_shifts(&s).unwrap();
        assert_eq!(shifts[1], 0.0);
        assert!(shifts[0] < 0.0 && (shifts[0] + shifts[2]).abs() < 1e-12);
    }

    #[test]
    fn unbalanced_sizes_stay_in_range() {
        let mut s = SimulationScenario::baseline(0.5, 100, 1, 3);
        s.design = PanelDesign::STANDARD_UNBALANCED;
        let g = generate_scenario_data(&s, 0).unwrap();
        let sizes: Vec<usize> = g.raw_errors.iter().map(|e| e.len()).collect();
        assert!(sizes.iter().all(|&m| (3..=8).contains(&m)));
        assert!(sizes.contains(&3) && sizes.contains(&8));
    }

    #[test]
    fn single_replication_has_no_sd() {
        let s = SimulationScenario::baseline(0.5, 50, 1, 11);
        let r = run_study(&s).unwrap();
        assert_eq!(r.replications_used, 1);
        assert!(r.cells.iter().all(|c| c.sd.is_none()));
        let ind = r.cell(0.5, CorrelationKind::Independence).unwrap();
        assert_eq!(ind.eff, Some(1.0));
    }

    #[test]
    fn single_structure_always_selected() {
        let mut s = SimulationScenario::baseline(0.5, 50, 4, 5);
        s.structures = vec![CorrelationKind::Exchangeable];
        let table = qic_frequency_study(&[s]).unwrap();
        assert_eq!(table.pooled[&CorrelationKind::Exchangeable], 4);
        assert_eq!(table.plurality(), Some(CorrelationKind::Exchangeable));
    }
}
