//! Breslow cumulative baseline hazard and the log-linearity check for a
//! Gompertz-shaped baseline.
//!
//! A baseline hazard `c * exp(psi * a)` has cumulative hazard
//! `(c / psi) * exp(psi * a)`, so its logarithm is a straight line in `a`
//! with slope `psi`. The diagnostic fits that line by least squares and calls
//! the baseline exponential when R^2 clears a threshold.

use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::cohort::Cohort;
use crate::cox::{CoxFit, Design, ModelSpec, SpecError};
use crate::risk::TimeScale;

pub const DEFAULT_EXPONENTIALITY_THRESHOLD: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HazardError {
    #[error("fit was produced under a different model spec")]
    ScaleMismatch,
    #[error(transparent)]
    InvalidSpec(#[from] SpecError),
    #[error("need at least 3 positive cumulative-hazard points, got {0}")]
    InsufficientPoints(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HazardPoint {
    pub time: f64,
    pub value: f64,
}

/// Step function of the cumulative baseline hazard, one point per event time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CumulativeHazard {
    pub scale: TimeScale,
    pub points: Vec<HazardPoint>,
}

impl CumulativeHazard {
    /// Two-column TSV with a leading comment line describing the estimate.
    pub fn write_tsv<W: Write>(&self, mut w: W, cohort_name: &str, beta: &[f64]) -> io::Result<()> {
        let betas: Vec<String> = beta.iter().map(|b| b.to_string()).collect();
        writeln!(
            w,
            "# scale={} cohort={} beta={} axis={}",
            self.scale,
            cohort_name,
            betas.join(","),
            self.scale.axis_label()
        )?;
        writeln!(w, "time\tcumulative_hazard")?;
        for p in &self.points {
            writeln!(w, "{}\t{}", p.time, p.value)?;
        }
        Ok(())
    }
}

/// Breslow estimate using the coefficients of `fit` and the risk sets of `spec`.
pub fn breslow_cumulative_hazard(
    cohort: &Cohort,
    fit: &CoxFit,
    spec: &ModelSpec,
) -> Result<CumulativeHazard, HazardError> {
    if fit.spec != *spec {
        return Err(HazardError::ScaleMismatch);
    }
    let design = Design::new(cohort, spec)?;
    Ok(breslow_from_design(&design, spec.scale, &fit.beta))
}

pub(crate) fn breslow_from_design(design: &Design, scale: TimeScale, beta: &[f64]) -> CumulativeHazard {
    let weights = design.raw_weights(beta);
    let mut total = 0.0;
    let points = design
        .weighted_risk_totals(&weights)
        .into_iter()
        .map(|(time, d, s0)| {
            total += d as f64 / s0;
            HazardPoint { time, value: total }
        })
        .collect();
    CumulativeHazard { scale, points }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentialityReport {
    /// Fitted slope of log cumulative hazard on time (estimates psi).
    pub slope: f64,
    /// Fitted intercept (estimates log(c / psi)).
    pub intercept: f64,
    pub r_squared: f64,
    pub threshold: f64,
    pub is_exponential: bool,
    pub n_points: usize,
}

pub fn exponentiality_diagnostic(
    cumhaz: &CumulativeHazard,
    threshold: f64,
) -> Result<ExponentialityReport, HazardError> {
    let (x, y): (Vec<f64>, Vec<f64>) =
        cumhaz.points.iter().filter(|p| p.value > 0.0).map(|p| (p.time, p.value.ln())).unzip();
    let n = x.len();
    if n < 3 {
        return Err(HazardError::InsufficientPoints(n));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(&y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return Err(HazardError::InsufficientPoints(1));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { ((sxy * sxy) / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(ExponentialityReport {
        slope,
        intercept,
        r_squared,
        threshold,
        is_exponential: r_squared >= threshold,
        n_points: n,
    })
}
