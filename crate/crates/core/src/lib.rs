//! Cox proportional-hazards models on three time scales (time on study,
//! chronological age, and chronological age with delayed entry), Breslow
//! baseline hazards, paired-bootstrap coefficient comparisons, and synthetic
//! cohorts with known ground truth.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod bootstrap;
pub mod cohort;
pub mod cox;
pub mod csv_io;
pub mod exec;
pub mod pipeline;
pub mod risk;
pub mod synth;

pub use cohort::{pearson_correlation, validate_cohort, Cohort, CohortError, RawRecord, SubjectRecord};
pub use cox::{
    fit_cox, partial_log_likelihood, score_and_information, CoxFit, FitError, FitOptions, Model, ModelSpec, Ties,
};
pub use exec::Execution;
pub use risk::{build_risk_sets, RiskSetSequence, TimeScale};
