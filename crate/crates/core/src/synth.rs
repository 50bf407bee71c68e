//! Synthetic cohorts with a known baseline hazard on the age scale.
//!
//! Entry age and the risk factor are drawn from a bivariate normal with
//! correlation `rho`. Given entry age `a0` and risk factor `z`, the event age
//! is drawn from the baseline conditional on surviving to `a0`, with hazard
//! multiplied by `exp(beta_true * z)`. Follow-up ends administratively after
//! `follow_up_max` years.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{validate_cohort, Cohort, RawRecord};
use crate::exec::Execution;

/// Entry ages below this are redrawn.
pub const MIN_ENTRY_AGE: f64 = 18.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Baseline {
    /// `lambda0(a) = c * exp(psi * a)`.
    Gompertz { c: f64, psi: f64 },
    /// `Lambda0(a) = (a / scale_age)^shape`.
    Weibull { scale_age: f64, shape: f64 },
}

impl Baseline {
    /// Event age for a uniform draw `u`, given survival to `a0` and linear
    /// predictor `eta = beta * z`. May be infinite when the baseline is
    /// improper.
    pub fn event_age(&self, u: f64, a0: f64, eta: f64) -> f64 {
        match *self {
            Baseline::Gompertz { c, psi } => gompertz_event_age(u, a0, eta, c, psi),
            Baseline::Weibull { scale_age, shape } => weibull_event_age(u, a0, eta, scale_age, shape),
        }
    }

    /// Baseline cumulative hazard at age `a`, up to an additive constant for Gompertz.
    pub fn cumulative(&self, a: f64) -> f64 {
        match *self {
            Baseline::Gompertz { c, psi } => c / psi * (psi * a).exp(),
            Baseline::Weibull { scale_age, shape } => (a / scale_age).powf(shape),
        }
    }
}

/// Inverse-transform draw from a Gompertz hazard `c * exp(psi * a + eta)`
/// conditional on survival to `a0`:
/// solves `exp(-exp(eta) * (c / psi) * (exp(psi * a) - exp(psi * a0))) = u`.
pub fn gompertz_event_age(u: f64, a0: f64, eta: f64, c: f64, psi: f64) -> f64 {
    let target = -u.ln() / (c * eta.exp());
    if psi == 0.0 {
        return a0 + target;
    }
    // a = a0 + ln(1 + psi * target * exp(-psi * a0)) / psi
    let y = psi * target * (-psi * a0).exp();
    if y <= -1.0 {
        return f64::INFINITY;
    }
    a0 + y.ln_1p() / psi
}

/// Inverse-transform draw from a Weibull cumulative hazard
/// `exp(eta) * (a / scale)^shape` conditional on survival to `a0`.
pub fn weibull_event_age(u: f64, a0: f64, eta: f64, scale_age: f64, shape: f64) -> f64 {
    let h = (a0 / scale_age).powf(shape) - u.ln() / eta.exp();
    scale_age * h.powf(1.0 / shape)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub n: usize,
    pub baseline: Baseline,
    /// Log hazard ratio per unit of the risk factor.
    pub beta_true: f64,
    pub entry_age_mean: f64,
    pub entry_age_sd: f64,
    pub covariate_mean: f64,
    pub covariate_sd: f64,
    /// Correlation between entry age and the risk factor.
    pub rho: f64,
    pub follow_up_max: f64,
}

impl Default for GeneratorParams {
    /// A blood-pressure-like risk factor with a Gompertz baseline and entry
    /// ages spread over adulthood; about 20% of subjects have the event
    /// within 20 years.
    fn default() -> Self {
        GeneratorParams {
            n: 1000,
            baseline: Baseline::Gompertz { c: DEFAULT_GOMPERTZ_C, psi: DEFAULT_GOMPERTZ_PSI },
            beta_true: 0.02,
            entry_age_mean: 50.0,
            entry_age_sd: 18.0,
            covariate_mean: 130.0,
            covariate_sd: 20.0,
            rho: 0.3,
            follow_up_max: 20.0,
        }
    }
}

pub const DEFAULT_GOMPERTZ_PSI: f64 = 0.085;
pub const DEFAULT_GOMPERTZ_C: f64 = 2.0e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeneratorError {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("generated cohort has no events")]
    DegenerateCohort,
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        let bad = |m: &str| Err(GeneratorError::InvalidParams(m.to_owned()));
        if self.n < 2 {
            return bad("n must be at least 2");
        }
        if !(self.entry_age_sd > 0.0 && self.covariate_sd > 0.0) {
            return bad("standard deviations must be positive");
        }
        if !(self.follow_up_max > 0.0) {
            return bad("follow_up_max must be positive");
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return bad("rho must lie strictly between -1 and 1");
        }
        match self.baseline {
            Baseline::Gompertz { c, psi } if !(c > 0.0) || !psi.is_finite() => bad("Gompertz c must be positive"),
            Baseline::Weibull { scale_age, shape } if !(scale_age > 0.0 && shape > 0.0) => {
                bad("Weibull scale and shape must be positive")
            }
            _ => Ok(()),
        }
    }
}

/// One subject's draws, from its own ChaCha stream under `seed`.
fn draw_subject(params: &GeneratorParams, seed: u64, index: usize) -> RawRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let (a0, z) = loop {
        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        let a0 = params.entry_age_mean + params.entry_age_sd * e1;
        if a0 >= MIN_ENTRY_AGE {
            let mixed = params.rho * e1 + (1.0 - params.rho * params.rho).sqrt() * e2;
            break (a0, params.covariate_mean + params.covariate_sd * mixed);
        }
    };
    let end = a0 + params.follow_up_max;
    let eta = params.beta_true * z;
    let event_age = loop {
        let u: f64 = rng.sample(Open01);
        let a = params.baseline.event_age(u, a0, eta);
        if a > a0 {
            break a;
        }
    };
    let event = event_age <= end;
    RawRecord {
        id: format!("s{index:06}"),
        entry_age: a0,
        exit_age: if event { event_age } else { end },
        event,
        covariates: vec![z],
    }
}

pub fn generate_cohort(params: &GeneratorParams, seed: u64, name: &str) -> Result<Cohort, GeneratorError> {
    generate_cohort_with(params, seed, name, Execution::Sequential)
}

/// As [`generate_cohort`]; subjects may be drawn in parallel with identical output.
pub fn generate_cohort_with(
    params: &GeneratorParams,
    seed: u64,
    name: &str,
    execution: Execution,
) -> Result<Cohort, GeneratorError> {
    params.validate()?;
    let rows = execution.map_range(0..params.n, |i| draw_subject(params, seed, i));
    if !rows.iter().any(|r| r.event) {
        return Err(GeneratorError::DegenerateCohort);
    }
    validate_cohort(name, rows, vec!["z".into()]).map_err(|e| GeneratorError::InvalidParams(e.to_string()))
}
