use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::cohort::Cohort;
use crate::cox::design::{Design, Evaluation};
use crate::cox::spec::{FitOptions, ModelSpec, SpecError, Ties};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error(transparent)]
    InvalidSpec(#[from] SpecError),
    #[error("beta has length {got}, model has {expected} terms")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("covariate '{0}' does not vary within any risk set")]
    ZeroVarianceCovariate(String),
    #[error("no event times in the data")]
    NoEvents,
    #[error("monotone likelihood: coefficient for '{term}' diverges (no finite maximum; bound {bound})")]
    MonotoneLikelihood { term: String, bound: f64 },
    #[error("information matrix is not positive definite")]
    SingularInformation,
    #[error("no convergence after {iterations} iterations (max |score| = {score_norm:e})")]
    MaxIterationsExceeded { iterations: usize, score_norm: f64 },
}

/// Maximum partial-likelihood estimate for one model spec.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoxFit {
    pub spec: ModelSpec,
    pub ties: Ties,
    pub terms: Vec<String>,
    pub beta: Vec<f64>,
    /// Inverse observed information at `beta`, row-major.
    pub covariance: Vec<Vec<f64>>,
    pub standard_errors: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Max-norm of the score at `beta`.
    pub score_norm: f64,
    pub n_subjects: usize,
    pub n_events: usize,
}

impl CoxFit {
    /// Coefficient of the first listed covariate.
    pub fn risk_factor_beta(&self) -> f64 {
        self.beta[0]
    }

    pub fn risk_factor_se(&self) -> f64 {
        self.standard_errors[0]
    }

    /// The fit itself when converged, otherwise the iteration diagnostics.
    pub fn require_converged(self) -> Result<Self, FitError> {
        if self.converged {
            Ok(self)
        } else {
            Err(FitError::MaxIterationsExceeded { iterations: self.iterations, score_norm: self.score_norm })
        }
    }
}

fn check_beta(spec: &ModelSpec, beta: &[f64]) -> Result<(), FitError> {
    if beta.len() != spec.dimension() {
        return Err(FitError::DimensionMismatch { expected: spec.dimension(), got: beta.len() });
    }
    Ok(())
}

/// Log partial likelihood of `beta` under `spec`.
pub fn partial_log_likelihood(cohort: &Cohort, spec: &ModelSpec, beta: &[f64], ties: Ties) -> Result<f64, FitError> {
    let design = Design::new(cohort, spec)?;
    check_beta(spec, beta)?;
    Ok(design.log_likelihood(beta, ties))
}

/// Score vector and observed information (negative Hessian, row-major) at `beta`.
pub fn score_and_information(
    cohort: &Cohort,
    spec: &ModelSpec,
    beta: &[f64],
    ties: Ties,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), FitError> {
    let design = Design::new(cohort, spec)?;
    check_beta(spec, beta)?;
    let ev = design.evaluate(beta, ties);
    let p = spec.dimension();
    Ok((ev.gradient, ev.information.chunks(p).map(<[f64]>::to_vec).collect()))
}

pub fn fit_cox(cohort: &Cohort, spec: &ModelSpec, options: &FitOptions) -> Result<CoxFit, FitError> {
    let design = Design::new(cohort, spec)?;
    let terms = spec.term_names(cohort);
    fit_design(&design, spec, &terms, options)
}

const LIKELIHOOD_RTOL: f64 = 1e-12;

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn information_matrix(ev: &Evaluation, p: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(p, p, &ev.information)
}

/// Newton-Raphson with step halving from `beta = 0`.
///
/// Iteration stops once the score max-norm drops below `tol`. Two consecutive
/// steps that change the log-likelihood by less than `tol` (relative) without
/// halving the score, or a step that cannot be made to improve the
/// likelihood, end the iteration early. Only a small score counts as
/// convergence.
pub fn fit_design(
    design: &Design,
    spec: &ModelSpec,
    terms: &[String],
    options: &FitOptions,
) -> Result<CoxFit, FitError> {
    let p = design.dimension();
    if design.n_events() == 0 {
        return Err(FitError::NoEvents);
    }
    if let Some(&k) = design.zero_variance_terms().first() {
        return Err(FitError::ZeroVarianceCovariate(terms[k].clone()));
    }

    let ties = options.ties;
    let mut beta = vec![0.0; p];
    let mut ev = design.evaluate(&beta, ties);
    let mut iterations = 0;
    let mut flat_steps = 0;

    while max_abs(&ev.gradient) >= options.tol && iterations < options.max_iter {
        let chol = information_matrix(&ev, p).cholesky().ok_or(FitError::SingularInformation)?;
        let mut step = chol.solve(&DVector::from_column_slice(&ev.gradient));
        iterations += 1;

        // Near the maximum the likelihood is flat to within rounding, so a
        // decrease of that size does not reject a step.
        let floor = ev.log_likelihood - LIKELIHOOD_RTOL * ev.log_likelihood.abs().max(1.0);
        let mut halvings = 0;
        let (candidate, cand_ev) = loop {
            let candidate: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + s).collect();
            let cand_ev = design.evaluate(&candidate, ties);
            if cand_ev.log_likelihood >= floor || halvings == options.max_halvings {
                break (candidate, cand_ev);
            }
            step /= 2.0;
            halvings += 1;
        };
        if !(cand_ev.log_likelihood >= floor) {
            // no improving step along the Newton direction
            break;
        }
        let rel_change = (cand_ev.log_likelihood - ev.log_likelihood).abs() / ev.log_likelihood.abs().max(1.0);
        let score_stalled = max_abs(&cand_ev.gradient) > 0.5 * max_abs(&ev.gradient);
        beta = candidate;
        ev = cand_ev;

        if let Some(k) = (0..p).find(|&k| beta[k].abs() > options.divergence_bound) {
            if max_abs(&ev.gradient) >= options.tol {
                return Err(FitError::MonotoneLikelihood { term: terms[k].clone(), bound: options.divergence_bound });
            }
        }
        if rel_change < options.tol && score_stalled {
            flat_steps += 1;
            if flat_steps >= 2 {
                break;
            }
        } else {
            flat_steps = 0;
        }
    }

    let score_norm = max_abs(&ev.gradient);
    let converged = score_norm < options.tol;
    let chol = information_matrix(&ev, p).cholesky().ok_or(FitError::SingularInformation)?;
    // A small score can also mean the likelihood has flattened out on its way
    // to infinity; then the next Newton step is still large.
    if converged {
        let next_step = chol.solve(&DVector::from_column_slice(&ev.gradient));
        if let Some(k) = (0..p).find(|&k| next_step[k].abs() > options.tol.sqrt() * beta[k].abs().max(1.0)) {
            return Err(FitError::MonotoneLikelihood { term: terms[k].clone(), bound: options.divergence_bound });
        }
    }
    let inv = chol.inverse();
    let mut covariance = vec![vec![0.0; p]; p];
    for r in 0..p {
        for c in r..p {
            // symmetrize explicitly; the inverse can differ in the last bit
            let v = 0.5 * (inv[(r, c)] + inv[(c, r)]);
            covariance[r][c] = v;
            covariance[c][r] = v;
        }
    }
    let standard_errors = (0..p).map(|k| covariance[k][k].max(0.0).sqrt()).collect();

    Ok(CoxFit {
        spec: spec.clone(),
        ties,
        terms: terms.to_vec(),
        beta,
        covariance,
        standard_errors,
        log_likelihood: ev.log_likelihood,
        iterations,
        converged,
        score_norm,
        n_subjects: design.len(),
        n_events: design.n_events(),
    })
}
