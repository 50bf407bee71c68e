//! Cox proportional-hazards estimation by maximum partial likelihood.

mod design;
mod fit;
mod spec;

pub use design::{Design, Evaluation};
pub use fit::{fit_cox, fit_design, partial_log_likelihood, score_and_information, CoxFit, FitError};
pub use spec::{FitOptions, Model, ModelSpec, SpecError, Ties};
