//! Clustered (longitudinal) data in per-subject form.

use nalgebra::{DMatrix, DVector};

use crate::error::{GeeeError, Result};

/// One cluster: `m_i` ordered responses and the matching `m_i x p` design.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: String,
    pub response: DVector<f64>,
    pub design: DMatrix<f64>,
}

impl Subject {
    pub fn new(id: impl Into<String>, response: DVector<f64>, design: DMatrix<f64>) -> Self {
        Self {
            id: id.into(),
            response,
            design,
        }
    }

    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }
}

/// A validated longitudinal dataset: every subject shares the covariate
/// count `p`, all entries are finite, `N > p`, and the stacked design has
/// full column rank.
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalDataset {
    subjects: Vec<Subject>,
    n_covariates: usize,
    n_obs: usize,
    max_cluster_size: usize,
}

impl LongitudinalDataset {
    pub fn new(subjects: Vec<Subject>) -> Result<Self> {
        let first = subjects
            .first()
            .ok_or_else(|| GeeeError::InvalidInput("dataset has no subjects".into()))?;
        let p = first.design.ncols();
        if p == 0 {
            return Err(GeeeError::InvalidInput("design has no columns".into()));
        }

        let mut n_obs = 0;
        let mut max_cluster_size = 0;
        for s in &subjects {
            if s.is_empty() {
                return Err(GeeeError::InvalidInput(format!("subject `{}` has no observations", s.id)));
            }
            if s.design.ncols() != p {
                return Err(GeeeError::Dimension(format!(
                    "subject `{}` has {} covariates, expected {p}",
                    s.id,
                    s.design.ncols()
                )));
            }
            if s.design.nrows() != s.len() {
                return Err(GeeeError::Dimension(format!(
                    "subject `{}` has {} responses but {} design rows",
                    s.id,
                    s.len(),
                    s.design.nrows()
                )));
            }
            if s.response.iter().chain(s.design.iter()).any(|v| !v.is_finite()) {
                return Err(GeeeError::InvalidInput(format!(
                    "subject `{}` contains non-finite values",
                    s.id
                )));
            }
            n_obs += s.len();
            max_cluster_size = max_cluster_size.max(s.len());
        }

        if n_obs <= p {
            return Err(GeeeError::DegreesOfFreedom(format!(
                "{n_obs} observations for {p} covariates"
            )));
        }

        let data = Self {
            subjects,
            n_covariates: p,
            n_obs,
            max_cluster_size,
        };
        data.check_rank()?;
        Ok(data)
    }

    /// Rejects rank-deficient stacked designs using the singular values of
    /// the column-scaled design.
    fn check_rank(&self) -> Result<()> {
        let x = self.stacked_design();
        let p = self.n_covariates;
        let mut scaled = x.clone();
        for j in 0..p {
            let norm = x.column(j).norm();
            if norm == 0.0 {
                return Err(GeeeError::Rank(format!("design column {j} is identically zero")));
            }
            scaled.column_mut(j).scale_mut(1.0 / norm);
        }
        let sv = scaled.singular_values();
        let max = sv.max();
        let tol = max * (self.n_obs.max(p) as f64) * f64::EPSILON * 16.0;
        let rank = sv.iter().filter(|&&s| s > tol).count();
        if rank < p {
            return Err(GeeeError::Rank(format!(
                "stacked design has rank {rank} < {p} columns"
            )));
        }
        Ok(())
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    /// `p`.
    pub fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    /// `N = sum m_i`.
    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn max_cluster_size(&self) -> usize {
        self.max_cluster_size
    }

    pub fn cluster_sizes(&self) -> impl Iterator<Item = usize> + '_ {
        self.subjects.iter().map(Subject::len)
    }

    pub fn is_balanced(&self) -> bool {
        self.cluster_sizes().all(|m| m == self.max_cluster_size)
    }

    pub fn stacked_design(&self) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(self.n_obs, self.n_covariates);
        let mut row = 0;
        for s in &self.subjects {
            x.rows_mut(row, s.len()).copy_from(&s.design);
            row += s.len();
        }
        x
    }

    pub fn stacked_response(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.n_obs,
            self.subjects.iter().flat_map(|s| s.response.iter().copied()),
        )
    }

    /// Same design, transformed responses.
    pub fn map_responses(&self, mut f: impl FnMut(&Subject) -> DVector<f64>) -> Result<Self> {
        let subjects = self
            .subjects
            .iter()
            .map(|s| Subject::new(s.id.clone(), f(s), s.design.clone()))
            .collect();
        Self::new(subjects)
    }

    /// Subjects reordered by `order` (a permutation of `0..n`).
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.subjects.len() {
            return Err(GeeeError::Dimension("permutation length mismatch".into()));
        }
        Self::new(order.iter().map(|&i| self.subjects[i].clone()).collect())
    }
}
