//! Time scales and the risk sets they induce.
//!
//! Every subject is at risk on a half-open interval `(start, stop]` of the
//! chosen scale:
//!
//! | scale              | start        | stop                  |
//! |--------------------|--------------|-----------------------|
//! | `TimeOnStudy`      | `-inf`       | `exit_age - entry_age`|
//! | `AgeUnadjusted`    | `-inf`       | `exit_age`            |
//! | `AgeLeftTruncated` | `entry_age`  | `exit_age`            |
//!
//! A subject whose stop equals an event time is at risk at that time, whether
//! or not they had the event (censorings at an event time happen after it).

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, SubjectRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TimeScale {
    TimeOnStudy,
    AgeUnadjusted,
    AgeLeftTruncated,
}

impl TimeScale {
    pub const ALL: [TimeScale; 3] = [TimeScale::TimeOnStudy, TimeScale::AgeUnadjusted, TimeScale::AgeLeftTruncated];

    /// Left end of the at-risk interval (exclusive).
    pub fn start(self, s: &SubjectRecord) -> f64 {
        match self {
            TimeScale::AgeLeftTruncated => s.entry_age(),
            TimeScale::TimeOnStudy | TimeScale::AgeUnadjusted => f64::NEG_INFINITY,
        }
    }

    /// Right end of the at-risk interval (inclusive); also the event time.
    pub fn stop(self, s: &SubjectRecord) -> f64 {
        match self {
            TimeScale::TimeOnStudy => s.follow_up(),
            TimeScale::AgeUnadjusted | TimeScale::AgeLeftTruncated => s.exit_age(),
        }
    }

    pub fn is_age(self) -> bool {
        !matches!(self, TimeScale::TimeOnStudy)
    }

    pub fn axis_label(self) -> &'static str {
        if self.is_age() {
            "age"
        } else {
            "follow_up"
        }
    }
}

impl fmt::Display for TimeScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TimeScale::TimeOnStudy => "time-on-study",
            TimeScale::AgeUnadjusted => "age-unadjusted",
            TimeScale::AgeLeftTruncated => "age-left-truncated",
        };
        f.write_str(s)
    }
}

impl FromStr for TimeScale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "time-on-study" => Ok(TimeScale::TimeOnStudy),
            "age-unadjusted" => Ok(TimeScale::AgeUnadjusted),
            "age-left-truncated" => Ok(TimeScale::AgeLeftTruncated),
            other => Err(format!("unknown time scale '{other}'")),
        }
    }
}

/// Risk set at one distinct event time.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskSet {
    pub event_time: f64,
    pub event_ids: BTreeSet<String>,
    pub at_risk_ids: BTreeSet<String>,
}

impl RiskSet {
    pub fn n_events(&self) -> usize {
        self.event_ids.len()
    }

    pub fn n_at_risk(&self) -> usize {
        self.at_risk_ids.len()
    }
}

/// Risk sets at every distinct event time, in increasing time order.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskSetSequence {
    pub scale: TimeScale,
    pub entries: Vec<RiskSet>,
}

impl RiskSetSequence {
    pub fn event_times(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.event_time).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.entries.iter().map(RiskSet::n_at_risk).collect()
    }

    /// True when every later risk set is contained in every earlier one.
    pub fn is_nested(&self) -> bool {
        self.entries.windows(2).all(|w| w[1].at_risk_ids.is_subset(&w[0].at_risk_ids))
    }
}

/// Explicit risk-set membership for each distinct event time.
///
/// Quadratic in cohort size; the fitting code uses sweeps instead and this is
/// meant for inspection, reporting and tests.
pub fn build_risk_sets(cohort: &Cohort, scale: TimeScale) -> RiskSetSequence {
    let subjects = cohort.subjects();
    let mut times: Vec<f64> = subjects.iter().filter(|s| s.event()).map(|s| scale.stop(s)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();

    let entries = times
        .into_iter()
        .map(|tau| {
            let mut event_ids = BTreeSet::new();
            let mut at_risk_ids = BTreeSet::new();
            for s in subjects {
                let stop = scale.stop(s);
                if scale.start(s) < tau && tau <= stop {
                    at_risk_ids.insert(s.id().to_owned());
                    if s.event() && stop == tau {
                        event_ids.insert(s.id().to_owned());
                    }
                }
            }
            RiskSet { event_time: tau, event_ids, at_risk_ids }
        })
        .collect();
    RiskSetSequence { scale, entries }
}
