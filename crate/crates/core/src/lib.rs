//! Generalized expectile estimating equations (GEEE) for longitudinal and
//! clustered data.
//!
//! Expectile regression at one or several asymmetry levels with
//! independence, exchangeable, AR(1) or unstructured working correlation,
//! sandwich inference, QIC-based structure selection and a seeded
//! Monte-Carlo harness.


pub mod cli;
pub mod correlation;
pub mod data;
pub mod error;
pub mod expectile;
pub mod fit;
pub mod inference;
pub mod linalg;
pub mod marginal;
pub mod selection;
pub mod simulation;


pub use correlation::{CorrelationKind, NuisanceEstimates, WorkingCorrelationSpec};
pub use data::{LongitudinalDataset, Subject};
pub use error::{GeeeError, Result};
pub use expectile::{Asymmetry, AsymmetrySequence};
pub use fit::{fit_geee, fit_independence, fit_multi, FitControl, GeeeFit, TauFit};
pub use inference::{sandwich_general, sandwich_independence, wald_interval, SandwichCovariance};
pub use marginal::MarginalLaw;
pub use selection::{qic, select_structure, QicReport};
