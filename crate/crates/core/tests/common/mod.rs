//! Reference implementations used as test oracles. They work from the raw
//! subject records with direct enumeration and share no code with the
//! library's sweeps.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tscox::{validate_cohort, Cohort, ModelSpec, RawRecord, SubjectRecord, Ties, TimeScale};

/// Time at which the subject leaves observation on `scale`.
pub fn exit_time(scale: TimeScale, s: &SubjectRecord) -> f64 {
    match scale {
        TimeScale::TimeOnStudy => s.exit_age() - s.entry_age(),
        TimeScale::AgeUnadjusted | TimeScale::AgeLeftTruncated => s.exit_age(),
    }
}

/// Whether the subject is in the risk set at time `t`.
pub fn at_risk(scale: TimeScale, s: &SubjectRecord, t: f64) -> bool {
    match scale {
        TimeScale::TimeOnStudy => s.exit_age() - s.entry_age() >= t,
        TimeScale::AgeUnadjusted => s.exit_age() >= t,
        TimeScale::AgeLeftTruncated => s.entry_age() < t && s.exit_age() >= t,
    }
}

pub fn covariates(spec: &ModelSpec, s: &SubjectRecord) -> Vec<f64> {
    let mut z: Vec<f64> = spec.covariate_indices.iter().map(|&k| s.covariates()[k]).collect();
    if spec.include_entry_age {
        z.push(s.entry_age());
    }
    z
}

fn linear(beta: &[f64], z: &[f64]) -> f64 {
    beta.iter().zip(z).map(|(b, x)| b * x).sum()
}

/// Distinct event times in increasing order.
pub fn event_times(cohort: &Cohort, scale: TimeScale) -> Vec<f64> {
    let mut t: Vec<f64> = cohort.subjects().iter().filter(|s| s.event()).map(|s| exit_time(scale, s)).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

/// Log partial likelihood by enumerating every risk set.
pub fn brute_log_likelihood(cohort: &Cohort, spec: &ModelSpec, beta: &[f64], ties: Ties) -> f64 {
    let subjects = cohort.subjects();
    let mut ll = 0.0;
    for t in event_times(cohort, spec.scale) {
        let risk: f64 = subjects
            .iter()
            .filter(|s| at_risk(spec.scale, s, t))
            .map(|s| linear(beta, &covariates(spec, s)).exp())
            .sum();
        let dying: Vec<&SubjectRecord> =
            subjects.iter().filter(|s| s.event() && exit_time(spec.scale, s) == t).collect();
        let d = dying.len() as f64;
        let dying_risk: f64 = dying.iter().map(|s| linear(beta, &covariates(spec, s)).exp()).sum();
        for s in &dying {
            ll += linear(beta, &covariates(spec, s));
        }
        match ties {
            Ties::Breslow => ll -= d * risk.ln(),
            Ties::Efron => {
                for l in 0..dying.len() {
                    ll -= (risk - l as f64 / d * dying_risk).ln();
                }
            }
        }
    }
    ll
}

/// Nelson-Aalen cumulative hazard by counting deaths and subjects at risk.
pub fn nelson_aalen(cohort: &Cohort, scale: TimeScale) -> Vec<(f64, f64)> {
    let mut h = 0.0;
    event_times(cohort, scale)
        .into_iter()
        .map(|t| {
            let d = cohort.subjects().iter().filter(|s| s.event() && exit_time(scale, s) == t).count();
            let n = cohort.subjects().iter().filter(|s| at_risk(scale, s, t)).count();
            h += d as f64 / n as f64;
            (t, h)
        })
        .collect()
}

/// Maximizer of a unimodal function on `[lo, hi]`.
pub fn golden_section_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// Sample SD by the two-pass formula.
pub fn sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

pub struct RandomCohort {
    pub n: usize,
    /// Round ages to whole years so event times tie.
    pub ties: bool,
    pub n_covariates: usize,
}

/// Small random cohort with delayed entry, at least two events, and
/// covariates of order one.
pub fn random_cohort(seed: u64, shape: &RandomCohort) -> Cohort {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let raw: Vec<RawRecord> = (0..shape.n)
            .map(|i| {
                let mut entry: f64 = rng.random_range(30.0..70.0);
                let mut follow: f64 = rng.random_range(0.5..15.0);
                if shape.ties {
                    entry = entry.round();
                    follow = follow.round().max(1.0);
                }
                RawRecord {
                    id: format!("r{i:02}"),
                    entry_age: entry,
                    exit_age: entry + follow,
                    event: rng.random_bool(0.6),
                    covariates: (0..shape.n_covariates).map(|_| rng.random_range(-1.5..1.5)).collect(),
                }
            })
            .collect();
        if raw.iter().filter(|r| r.event).count() >= 2 {
            let names = (0..shape.n_covariates).map(|k| format!("x{k}")).collect();
            return validate_cohort(format!("random{seed}"), raw, names).unwrap();
        }
    }
}

/// Cohort rebuilt from a multiset of subject rows, with fresh unique ids.
pub fn cohort_from_rows(cohort: &Cohort, rows: &[usize]) -> Result<Cohort, tscox::CohortError> {
    let raw = rows
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let s = &cohort.subjects()[i];
            RawRecord {
                id: format!("b{k}"),
                entry_age: s.entry_age(),
                exit_age: s.exit_age(),
                event: s.event(),
                covariates: s.covariates().to_vec(),
            }
        })
        .collect();
    validate_cohort("resample", raw, cohort.covariate_names().to_vec())
}
