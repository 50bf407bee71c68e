//! Subjects, cohorts and their validation.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One parsed row prior to validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    pub entry_age: f64,
    pub exit_age: f64,
    pub event: bool,
    pub covariates: Vec<f64>,
}

/// One person under observation from `entry_age` until `exit_age`.
///
/// Only constructed through [`validate_cohort`], so every record in a
/// [`Cohort`] has strictly positive follow-up and finite values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubjectRecord {
    id: String,
    entry_age: f64,
    exit_age: f64,
    event: bool,
    covariates: Vec<f64>,
}

impl SubjectRecord {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn entry_age(&self) -> f64 {
        self.entry_age
    }

    pub fn exit_age(&self) -> f64 {
        self.exit_age
    }

    pub fn event(&self) -> bool {
        self.event
    }

    pub fn covariates(&self) -> &[f64] {
        &self.covariates
    }

    /// Follow-up time, `exit_age - entry_age`.
    pub fn follow_up(&self) -> f64 {
        self.exit_age - self.entry_age
    }
}

/// A single problem found while validating raw rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NonPositiveFollowUp { id: String },
    NegativeEntryAge { id: String },
    DuplicateId { id: String },
    RaggedCovariates { id: String },
    NonFiniteValue { id: String, field: String },
    NoEvents,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveFollowUp { id } => {
                write!(f, "subject {id}: exit_age must exceed entry_age")
            }
            Violation::NegativeEntryAge { id } => write!(f, "subject {id}: negative entry_age"),
            Violation::DuplicateId { id } => write!(f, "subject {id}: duplicate id"),
            Violation::RaggedCovariates { id } => {
                write!(f, "subject {id}: covariate count does not match header")
            }
            Violation::NonFiniteValue { id, field } => {
                write!(f, "subject {id}: non-finite value in {field}")
            }
            Violation::NoEvents => write!(f, "cohort has no events"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CohortError {
    #[error("invalid cohort: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

impl CohortError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            CohortError::Invalid(v) => v,
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// A validated, immutable collection of subjects.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cohort {
    name: String,
    covariate_names: Vec<String>,
    subjects: Vec<SubjectRecord>,
}

impl Cohort {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn subjects(&self) -> &[SubjectRecord] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn n_events(&self) -> usize {
        self.subjects.iter().filter(|s| s.event).count()
    }

    /// Values of covariate `k` across subjects, in cohort order.
    pub fn covariate_column(&self, k: usize) -> Vec<f64> {
        self.subjects.iter().map(|s| s.covariates[k]).collect()
    }

    pub fn entry_ages(&self) -> Vec<f64> {
        self.subjects.iter().map(|s| s.entry_age).collect()
    }

    /// Same cohort with a new name.
    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Raw rows equivalent to this cohort, suitable for re-validation after edits.
    pub fn to_raw(&self) -> Vec<RawRecord> {
        self.subjects
            .iter()
            .map(|s| RawRecord {
                id: s.id.clone(),
                entry_age: s.entry_age,
                exit_age: s.exit_age,
                event: s.event,
                covariates: s.covariates.clone(),
            })
            .collect()
    }
}

/// Checks every row and either builds a [`Cohort`] or reports all violations at once.
pub fn validate_cohort(
    name: impl Into<String>,
    raw_records: Vec<RawRecord>,
    covariate_names: Vec<String>,
) -> Result<Cohort, CohortError> {
    let mut violations = Vec::new();
    let mut seen = HashSet::with_capacity(raw_records.len());
    let width = covariate_names.len();

    for r in &raw_records {
        if !seen.insert(r.id.as_str()) {
            violations.push(Violation::DuplicateId { id: r.id.clone() });
        }
        if r.covariates.len() != width {
            violations.push(Violation::RaggedCovariates { id: r.id.clone() });
        }
        let mut finite = true;
        let named = [("entry_age", r.entry_age), ("exit_age", r.exit_age)];
        for (field, v) in named {
            if !v.is_finite() {
                finite = false;
                violations.push(Violation::NonFiniteValue { id: r.id.clone(), field: field.into() });
            }
        }
        for (k, v) in r.covariates.iter().enumerate() {
            if !v.is_finite() {
                let field = covariate_names.get(k).cloned().unwrap_or_else(|| format!("covariate[{k}]"));
                violations.push(Violation::NonFiniteValue { id: r.id.clone(), field });
            }
        }
        if finite {
            if r.entry_age < 0.0 {
                violations.push(Violation::NegativeEntryAge { id: r.id.clone() });
            }
            if !(r.exit_age > r.entry_age) {
                violations.push(Violation::NonPositiveFollowUp { id: r.id.clone() });
            }
        }
    }
    if !raw_records.iter().any(|r| r.event) {
        violations.push(Violation::NoEvents);
    }
    if !violations.is_empty() {
        return Err(CohortError::Invalid(violations));
    }

    let subjects = raw_records
        .into_iter()
        .map(|r| SubjectRecord {
            id: r.id,
            entry_age: r.entry_age,
            exit_age: r.exit_age,
            event: r.event,
            covariates: r.covariates,
        })
        .collect();
    Ok(Cohort { name: name.into(), covariate_names, subjects })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CorrelationError {
    #[error("inputs differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two observations")]
    TooFewObservations,
    #[error("input has zero variance")]
    ZeroVariance,
}

/// Pearson product-moment correlation, clamped to `[-1, 1]`.
pub fn pearson_correlation(x: &[f64], y: &[f64]) -> Result<f64, CorrelationError> {
    if x.len() != y.len() {
        return Err(CorrelationError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(CorrelationError::TooFewObservations);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(CorrelationError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}
