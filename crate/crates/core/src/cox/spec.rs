use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::Cohort;
use crate::risk::TimeScale;

/// Which covariates enter the linear predictor, and on which time scale.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub scale: TimeScale,
    pub covariate_indices: Vec<usize>,
    /// Append entry age as the last model covariate. Only valid on the
    /// time-on-study scale.
    pub include_entry_age: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("model needs at least one covariate")]
    NoCovariates,
    #[error("covariate index {index} out of range for {available} covariates")]
    IndexOutOfRange { index: usize, available: usize },
    #[error("covariate index {0} listed twice")]
    DuplicateIndex(usize),
    #[error("entry age can only be a covariate on the time-on-study scale")]
    EntryAgeOnAgeScale,
}

impl ModelSpec {
    pub fn new(scale: TimeScale, covariate_indices: Vec<usize>, include_entry_age: bool) -> Self {
        ModelSpec { scale, covariate_indices, include_entry_age }
    }

    /// Checks the spec against itself and against a cohort's covariate count.
    pub fn validate(&self, n_covariates: usize) -> Result<(), SpecError> {
        if self.covariate_indices.is_empty() {
            return Err(SpecError::NoCovariates);
        }
        let mut seen = HashSet::new();
        for &index in &self.covariate_indices {
            if index >= n_covariates {
                return Err(SpecError::IndexOutOfRange { index, available: n_covariates });
            }
            if !seen.insert(index) {
                return Err(SpecError::DuplicateIndex(index));
            }
        }
        if self.include_entry_age && self.scale != TimeScale::TimeOnStudy {
            return Err(SpecError::EntryAgeOnAgeScale);
        }
        Ok(())
    }

    /// Number of coefficients estimated under this spec.
    pub fn dimension(&self) -> usize {
        self.covariate_indices.len() + usize::from(self.include_entry_age)
    }

    /// Names of the model terms in coefficient order.
    pub fn term_names(&self, cohort: &Cohort) -> Vec<String> {
        let names = cohort.covariate_names();
        let mut out: Vec<String> =
            self.covariate_indices.iter().map(|&k| names.get(k).cloned().unwrap_or_else(|| format!("z{k}"))).collect();
        if self.include_entry_age {
            out.push("entry_age".into());
        }
        out
    }
}

/// The three models being compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Model {
    /// Time-on-study scale, entry age as a covariate.
    M1,
    /// Age scale ignoring delayed entry.
    M2,
    /// Age scale with left truncation at entry age.
    M3,
}

impl Model {
    pub const ALL: [Model; 3] = [Model::M1, Model::M2, Model::M3];

    pub fn scale(self) -> TimeScale {
        match self {
            Model::M1 => TimeScale::TimeOnStudy,
            Model::M2 => TimeScale::AgeUnadjusted,
            Model::M3 => TimeScale::AgeLeftTruncated,
        }
    }

    /// Spec for this model with the given covariates; the first index is the
    /// risk factor whose coefficient is compared across models.
    pub fn spec(self, covariate_indices: Vec<usize>) -> ModelSpec {
        ModelSpec::new(self.scale(), covariate_indices, self == Model::M1)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Model::M1 => "m1",
            Model::M2 => "m2",
            Model::M3 => "m3",
        };
        f.write_str(s)
    }
}

impl FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "m1" => Ok(Model::M1),
            "m2" => Ok(Model::M2),
            "m3" => Ok(Model::M3),
            other => Err(format!("unknown model '{other}' (expected m1, m2 or m3)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Ties {
    #[default]
    Breslow,
    Efron,
}

impl FromStr for Ties {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "breslow" => Ok(Ties::Breslow),
            "efron" => Ok(Ties::Efron),
            other => Err(format!("unknown tie method '{other}'")),
        }
    }
}

impl fmt::Display for Ties {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ties::Breslow => "breslow",
            Ties::Efron => "efron",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub ties: Ties,
    /// Convergence threshold on the max-norm of the score.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// |beta_k| beyond this without a converged score is reported as a
    /// monotone likelihood.
    pub divergence_bound: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { ties: Ties::Breslow, tol: 1e-8, max_iter: 100, max_halvings: 10, divergence_bound: 50.0 }
    }
}

impl FitOptions {
    pub fn with_ties(mut self, ties: Ties) -> Self {
        self.ties = ties;
        self
    }
}
