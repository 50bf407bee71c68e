//! Paired bootstrap for the difference between risk-factor coefficients
//! estimated under two model specs.
//!
//! Each replicate resamples subjects once and fits every spec on that same
//! resample. Replicate `r` draws from a ChaCha stream selected by `r` under
//! the user seed, so the set of replicates does not depend on scheduling.

use libm::erfc;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::cohort::Cohort;
use crate::cox::{fit_design, CoxFit, Design, FitError, FitOptions, ModelSpec};
use crate::exec::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
    pub alpha: f64,
    pub fit: FitOptions,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            replicates: 1000,
            seed: 0,
            alpha: 0.05,
            fit: FitOptions::default(),
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BootstrapError {
    #[error("need at least 2 bootstrap replicates, got {0}")]
    TooFewReplicates(usize),
    #[error("fit of spec #{index} on the original cohort failed: {source}")]
    OriginalFitFailed { index: usize, source: FitError },
    #[error("only {used} of {requested} replicates succeeded after {draws} draws")]
    TooManyFailedReplicates { requested: usize, used: usize, draws: usize },
    #[error("bootstrap SE is zero but the coefficient difference is {difference}")]
    DegenerateSe { difference: f64 },
}

/// Paired-bootstrap test of `beta_a == beta_b` for the risk-factor coefficient.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonResult {
    pub beta_a: f64,
    pub beta_b: f64,
    pub difference: f64,
    pub bootstrap_se: f64,
    pub z_statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub significant: bool,
    pub replicates_requested: usize,
    pub replicates_used: usize,
    pub seed: u64,
}

/// Subject indices for bootstrap draw `draw`: `n` picks with replacement.
pub fn resample_indices(n: usize, seed: u64, draw: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Two-sided standard-normal tail probability of `z`.
pub fn two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Original-sample fits plus risk-factor coefficients from every successful
/// paired replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateSet {
    pub original: Vec<CoxFit>,
    /// `betas[r][s]`: risk-factor coefficient of spec `s` in replicate `r`.
    pub betas: Vec<Vec<f64>>,
    pub requested: usize,
    pub draws: usize,
    pub seed: u64,
}

fn fit_ok(design: &Design, spec: &ModelSpec, terms: &[String], options: &FitOptions) -> Result<CoxFit, FitError> {
    fit_design(design, spec, terms, options).and_then(CoxFit::require_converged)
}

/// Fits every spec on the cohort and on `options.replicates` shared resamples.
///
/// A replicate where any fit fails is discarded and a further draw is made,
/// up to `2 * replicates` draws in total.
pub fn paired_replicates(
    cohort: &Cohort,
    specs: &[ModelSpec],
    options: &BootstrapOptions,
) -> Result<ReplicateSet, BootstrapError> {
    let requested = options.replicates;
    if requested < 2 {
        return Err(BootstrapError::TooFewReplicates(requested));
    }
    let mut original = Vec::with_capacity(specs.len());
    for (index, spec) in specs.iter().enumerate() {
        let fit = Design::new(cohort, spec)
            .map_err(FitError::from)
            .and_then(|d| fit_ok(&d, spec, &spec.term_names(cohort), &options.fit))
            .map_err(|source| BootstrapError::OriginalFitFailed { index, source })?;
        original.push(fit);
    }

    let n = cohort.len();
    let cap = 2 * requested;
    let one_draw = |draw: usize| -> Option<Vec<f64>> {
        let rows = resample_indices(n, options.seed, draw as u64);
        specs
            .iter()
            .zip(&original)
            .map(|(spec, orig)| {
                let design = Design::from_rows(cohort, spec, &rows).ok()?;
                fit_ok(&design, spec, &orig.terms, &options.fit).ok().map(|f| f.risk_factor_beta())
            })
            .collect()
    };

    let mut betas = Vec::with_capacity(requested);
    let mut next = 0;
    while betas.len() < requested && next < cap {
        let hi = (next + requested - betas.len()).min(cap);
        let batch = options.execution.map_range(next..hi, one_draw);
        betas.extend(batch.into_iter().flatten());
        next = hi;
    }
    if betas.len() < requested {
        return Err(BootstrapError::TooManyFailedReplicates { requested, used: betas.len(), draws: next });
    }
    Ok(ReplicateSet { original, betas, requested, draws: next, seed: options.seed })
}

impl ReplicateSet {
    /// Paired differences `beta_a - beta_b` across replicates, in draw order.
    pub fn differences(&self, a: usize, b: usize) -> Vec<f64> {
        self.betas.iter().map(|r| r[a] - r[b]).collect()
    }

    pub fn compare(&self, a: usize, b: usize, alpha: f64) -> Result<ComparisonResult, BootstrapError> {
        let deltas = self.differences(a, b);
        let bootstrap_se = sample_sd(&deltas);
        let beta_a = self.original[a].risk_factor_beta();
        let beta_b = self.original[b].risk_factor_beta();
        let difference = beta_a - beta_b;
        let (z_statistic, p_value) = if bootstrap_se > 0.0 {
            let z = difference / bootstrap_se;
            (z, two_sided_p(z))
        } else if difference == 0.0 {
            (0.0, 1.0)
        } else {
            return Err(BootstrapError::DegenerateSe { difference });
        };
        Ok(ComparisonResult {
            beta_a,
            beta_b,
            difference,
            bootstrap_se,
            z_statistic,
            p_value,
            alpha,
            significant: p_value < alpha,
            replicates_requested: self.requested,
            replicates_used: deltas.len(),
            seed: self.seed,
        })
    }
}

/// Sample standard deviation with denominator `n - 1`.
pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n - 1) as f64).sqrt()
}

pub fn compare_models(
    cohort: &Cohort,
    spec_a: &ModelSpec,
    spec_b: &ModelSpec,
    options: &BootstrapOptions,
) -> Result<ComparisonResult, BootstrapError> {
    paired_replicates(cohort, &[spec_a.clone(), spec_b.clone()], options)?.compare(0, 1, options.alpha)
}
