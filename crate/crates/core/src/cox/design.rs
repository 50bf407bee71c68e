use std::cmp::Ordering;

use crate::cohort::Cohort;
use crate::cox::spec::{ModelSpec, SpecError, Ties};

/// Cohort rows laid out for one model spec, in a canonical order.
///
/// Rows are sorted by a key that covers every field, so the arithmetic done
/// on a design does not depend on the order subjects arrived in. Rows that
/// tie on the whole key are indistinguishable.
#[derive(Debug, Clone)]
pub struct Design {
    p: usize,
    start: Vec<f64>,
    stop: Vec<f64>,
    event: Vec<bool>,
    /// Row-major raw covariate values (n x p).
    raw: Vec<f64>,
    /// Row-major covariates centered on their means.
    centered: Vec<f64>,
    center: Vec<f64>,
    /// Rows with a finite start, by decreasing start.
    by_start: Vec<usize>,
    /// Event groups by decreasing time.
    groups: Vec<EventGroup>,
}

#[derive(Debug, Clone)]
struct EventGroup {
    time: f64,
    /// Rows `0..prefix_end` are exactly those with `stop >= time`.
    prefix_end: usize,
    events: Vec<usize>,
}

/// Log partial likelihood and optionally its derivatives at one beta.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub log_likelihood: f64,
    pub gradient: Vec<f64>,
    /// Negative Hessian, row-major p x p.
    pub information: Vec<f64>,
}

impl Design {
    pub fn new(cohort: &Cohort, spec: &ModelSpec) -> Result<Self, SpecError> {
        let rows: Vec<usize> = (0..cohort.len()).collect();
        Self::from_rows(cohort, spec, &rows)
    }

    /// Design over a multiset of cohort rows (indices may repeat).
    pub fn from_rows(cohort: &Cohort, spec: &ModelSpec, rows: &[usize]) -> Result<Self, SpecError> {
        spec.validate(cohort.n_covariates())?;
        let p = spec.dimension();
        let subjects = cohort.subjects();

        struct Row {
            start: f64,
            stop: f64,
            event: bool,
            z: Vec<f64>,
        }
        let mut tmp: Vec<Row> = rows
            .iter()
            .map(|&i| {
                let s = &subjects[i];
                let mut z: Vec<f64> = spec.covariate_indices.iter().map(|&k| s.covariates()[k]).collect();
                if spec.include_entry_age {
                    z.push(s.entry_age());
                }
                Row { start: spec.scale.start(s), stop: spec.scale.stop(s), event: s.event(), z }
            })
            .collect();
        tmp.sort_by(|a, b| {
            b.stop
                .total_cmp(&a.stop)
                .then_with(|| b.start.total_cmp(&a.start))
                .then_with(|| a.event.cmp(&b.event))
                .then_with(|| {
                    a.z.iter().zip(&b.z).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
                })
        });

        let n = tmp.len();
        let mut raw = Vec::with_capacity(n * p);
        for r in &tmp {
            raw.extend_from_slice(&r.z);
        }
        let mut center = vec![0.0; p];
        for row in raw.chunks_exact(p) {
            for (c, v) in center.iter_mut().zip(row) {
                *c += v;
            }
        }
        if n > 0 {
            center.iter_mut().for_each(|c| *c /= n as f64);
        }
        let centered = raw
            .chunks_exact(p)
            .flat_map(|row| row.iter().zip(&center).map(|(v, c)| v - c).collect::<Vec<_>>())
            .collect();

        let start: Vec<f64> = tmp.iter().map(|r| r.start).collect();
        let stop: Vec<f64> = tmp.iter().map(|r| r.stop).collect();
        let event: Vec<bool> = tmp.iter().map(|r| r.event).collect();

        let mut by_start: Vec<usize> = (0..n).filter(|&i| start[i].is_finite()).collect();
        by_start.sort_by(|&a, &b| start[b].total_cmp(&start[a]).then(a.cmp(&b)));

        let mut groups = Vec::new();
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j < n && stop[j] == stop[i] {
                j += 1;
            }
            let events: Vec<usize> = (i..j).filter(|&k| event[k]).collect();
            if !events.is_empty() {
                groups.push(EventGroup { time: stop[i], prefix_end: j, events });
            }
            i = j;
        }

        Ok(Design { p, start, stop, event, raw, centered, center, by_start, groups })
    }

    pub fn dimension(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.stop.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stop.is_empty()
    }

    pub fn n_events(&self) -> usize {
        self.event.iter().filter(|&&e| e).count()
    }

    pub fn raw_row(&self, i: usize) -> &[f64] {
        &self.raw[i * self.p..(i + 1) * self.p]
    }

    fn centered_row(&self, i: usize) -> &[f64] {
        &self.centered[i * self.p..(i + 1) * self.p]
    }

    /// Means subtracted from the covariates before evaluation.
    pub fn center(&self) -> &[f64] {
        &self.center
    }

    /// Covariate terms (by position) with no spread inside any risk set.
    ///
    /// Uses the information at `beta = 0`, which sums the within-risk-set
    /// variances, relative to the matching second moments.
    pub fn zero_variance_terms(&self) -> Vec<usize> {
        let p = self.p;
        let ones = vec![1.0; self.len()];
        let mut var = vec![0.0; p];
        let mut second = vec![0.0; p];
        self.sweep(&ones, true, |_, events, s0, s1, s2| {
            let d = events.len() as f64;
            for k in 0..p {
                let m2 = s2[k * p + k] / s0;
                let m1 = s1[k] / s0;
                var[k] += d * (m2 - m1 * m1);
                second[k] += d * m2;
            }
        });
        (0..p).filter(|&k| !(var[k] > ZERO_VARIANCE_RTOL * second[k])).collect()
    }

    /// Visits each distinct event time in decreasing order with the row
    /// weights summed over its risk set.
    ///
    /// `visit(time, events, s0, s1, s2)` receives the event rows and the
    /// weighted moments of the centered covariates; `s2` is only filled when
    /// `second` is true.
    fn sweep<F>(&self, weights: &[f64], second: bool, mut visit: F)
    where
        F: FnMut(f64, &[usize], f64, &[f64], &[f64]),
    {
        let p = self.p;
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut s2 = vec![0.0; p * p];
        let mut added = 0;
        let mut removed = 0;
        let accumulate = |sign: f64, i: usize, s0: &mut f64, s1: &mut [f64], s2: &mut [f64]| {
            let w = sign * weights[i];
            *s0 += w;
            let x = self.centered_row(i);
            for a in 0..p {
                s1[a] += w * x[a];
                if second {
                    for b in a..p {
                        s2[a * p + b] += w * x[a] * x[b];
                    }
                }
            }
        };
        for g in &self.groups {
            while added < g.prefix_end {
                accumulate(1.0, added, &mut s0, &mut s1, &mut s2);
                added += 1;
            }
            while removed < self.by_start.len() && self.start[self.by_start[removed]] >= g.time {
                accumulate(-1.0, self.by_start[removed], &mut s0, &mut s1, &mut s2);
                removed += 1;
            }
            visit(g.time, &g.events, s0, &s1, &s2);
        }
    }

    /// `(time, events, sum of weights over the risk set)` in increasing time order.
    pub fn weighted_risk_totals(&self, weights: &[f64]) -> Vec<(f64, usize, f64)> {
        let mut out = Vec::with_capacity(self.groups.len());
        self.sweep(weights, false, |t, ev, s0, _, _| out.push((t, ev.len(), s0)));
        out.reverse();
        out
    }

    /// Relative risks `exp(beta' z)` on the centered covariates.
    fn centered_weights(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|i| dot(beta, self.centered_row(i)).exp()).collect()
    }

    /// Relative risks `exp(beta' z)` on the raw covariates.
    pub fn raw_weights(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|i| dot(beta, self.raw_row(i)).exp()).collect()
    }

    pub fn log_likelihood(&self, beta: &[f64], ties: Ties) -> f64 {
        self.evaluate_inner(beta, ties, false).log_likelihood
    }

    pub fn evaluate(&self, beta: &[f64], ties: Ties) -> Evaluation {
        self.evaluate_inner(beta, ties, true)
    }

    fn evaluate_inner(&self, beta: &[f64], ties: Ties, derivs: bool) -> Evaluation {
        assert_eq!(beta.len(), self.p, "beta dimension");
        let p = self.p;
        let w = self.centered_weights(beta);
        let mut ll = 0.0;
        let mut grad = vec![0.0; p];
        let mut info = vec![0.0; p * p];
        let mut a = vec![0.0; p];
        let mut e1 = vec![0.0; p];
        let mut e2 = vec![0.0; p * p];

        self.sweep(&w, derivs, |_, events, s0, s1, s2| {
            let d = events.len();
            for &i in events {
                let x = self.centered_row(i);
                ll += dot(beta, x);
                if derivs {
                    for k in 0..p {
                        grad[k] += x[k];
                    }
                }
            }
            match ties {
                Ties::Breslow => {
                    let df = d as f64;
                    ll -= df * s0.ln();
                    if derivs {
                        for k in 0..p {
                            a[k] = s1[k] / s0;
                            grad[k] -= df * a[k];
                        }
                        for r in 0..p {
                            for c in r..p {
                                info[r * p + c] += df * (s2[r * p + c] / s0 - a[r] * a[c]);
                            }
                        }
                    }
                }
                Ties::Efron => {
                    let mut e0 = 0.0;
                    e1.iter_mut().for_each(|v| *v = 0.0);
                    e2.iter_mut().for_each(|v| *v = 0.0);
                    for &i in events {
                        let wi = w[i];
                        let x = self.centered_row(i);
                        e0 += wi;
                        for r in 0..p {
                            e1[r] += wi * x[r];
                            if derivs {
                                for c in r..p {
                                    e2[r * p + c] += wi * x[r] * x[c];
                                }
                            }
                        }
                    }
                    for l in 0..d {
                        let f = l as f64 / d as f64;
                        let den = s0 - f * e0;
                        ll -= den.ln();
                        if derivs {
                            for k in 0..p {
                                a[k] = (s1[k] - f * e1[k]) / den;
                                grad[k] -= a[k];
                            }
                            for r in 0..p {
                                for c in r..p {
                                    let m2 = (s2[r * p + c] - f * e2[r * p + c]) / den;
                                    info[r * p + c] += m2 - a[r] * a[c];
                                }
                            }
                        }
                    }
                }
            }
        });

        for r in 0..p {
            for c in 0..r {
                info[r * p + c] = info[c * p + r];
            }
        }
        Evaluation { log_likelihood: ll, gradient: grad, information: info }
    }
}

const ZERO_VARIANCE_RTOL: f64 = 1e-10;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
