//! Design-based estimation for randomized experiments embedded in weighted
//! surveys.
//!
//! The crate covers the full pipeline: validated experiment data
//! ([`model`]), sampling and assignment mechanisms ([`design`]), the
//! unweighted and weighted effect estimators with post-stratification
//! ([`estimators`], [`strata`]), plug-in and case-wise bootstrap uncertainty
//! ([`uncertainty`]), SATE-vs-PATE diagnostics ([`diagnostics`]), and a
//! seeded finite-population Monte Carlo engine ([`simulation`]).

pub mod design;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod model;
pub mod simulation;
pub mod strata;
pub mod uncertainty;

pub use design::{AssignmentPlan, SamplingPlan};
pub use error::{Error, Result};
pub use model::{EstimateReport, EstimatorId, ExperimentData, Population, SampleDraw, SeMethod};
pub use strata::{StrataPartition, StrataSource};
pub use uncertainty::{BootstrapConfig, CiMethod, EstimatorSpec, StrataRecipe};
