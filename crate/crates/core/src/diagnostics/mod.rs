//! Evaluators for the sufficient conditions, the maximal and covariance
//! inequalities, and the goodness-of-fit tests of the quenched CLT/FCLT.
//!
//! Limits in `m` and `n` are not machine-checkable; every condition is
//! turned into a finite-grid rule (see [`trend_verdict`]) whose thresholds
//! are recorded in the report.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub mod clt;
pub mod conditions;
pub mod inequalities;
pub mod mixing;

pub use clt::{
    brownian_sup_monte_carlo, brownian_sup_probability, clt_test, fclt_test, mixture_check, CltTest, FcltReport,
    MixtureCheck,
};
pub use conditions::{
    coboundary_check, conjecture_series, negligibility_probe, projective_series, strong_condition_series, ui_probe,
    NegligibilitySpec,
};
pub use inequalities::{
    hopf_average_check, maximal_bound_check, rio_bound_check, rio_bound_monte_carlo, HopfReport, MaximalBoundReport,
    RioReport,
};
pub use mixing::{
    alpha_bar, covariance_bound_check, mixing_clt_condition, mixing_profile, quantile_fn, quantile_integral,
    CovarianceCheck, MixingProfile, QuantileFn,
};

/// Relative slack when comparing consecutive values of a sequence.
pub const TREND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConditionId {
    NeglClt,
    NeglFclt,
    UiFmgf,
    Strong,
    LqGf,
    Coboundary,
    Projective,
    ConjDr,
    ConjKv,
    MixingRio,
}

impl ConditionId {
    pub const ALL: [ConditionId; 10] = [
        ConditionId::NeglClt,
        ConditionId::NeglFclt,
        ConditionId::UiFmgf,
        ConditionId::Strong,
        ConditionId::LqGf,
        ConditionId::Coboundary,
        ConditionId::Projective,
        ConditionId::ConjDr,
        ConditionId::ConjKv,
        ConditionId::MixingRio,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ConditionId::NeglClt => "NEGL_CLT",
            ConditionId::NeglFclt => "NEGL_FCLT",
            ConditionId::UiFmgf => "UI_FMGF",
            ConditionId::Strong => "STRONG",
            ConditionId::LqGf => "LQ_GF",
            ConditionId::Coboundary => "COBOUNDARY",
            ConditionId::Projective => "PROJECTIVE",
            ConditionId::ConjDr => "CONJ_DR",
            ConditionId::ConjKv => "CONJ_KV",
            ConditionId::MixingRio => "MIXING_RIO",
        }
    }
}

impl fmt::Display for ConditionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConditionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ConditionId::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown condition id {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Satisfied,
    Violated,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Satisfied => "satisfied",
            Verdict::Violated => "violated",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// One point of a condition sequence: `index` is the primary grid variable
/// (`m`, `j` or `n`), `aux` an optional secondary one (`n` or a level `M`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SequencePoint {
    pub index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aux: Option<f64>,
    pub value: f64,
}

impl SequencePoint {
    pub fn new(index: usize, value: f64) -> Self {
        Self { index, aux: None, value }
    }

    pub fn with_aux(index: usize, aux: f64, value: f64) -> Self {
        Self { index, aux: Some(aux), value }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub condition_id: ConditionId,
    /// The sequence the verdict is read from.
    pub sequence: Vec<SequencePoint>,
    pub verdict: Verdict,
    pub tolerances: BTreeMap<String, f64>,
    /// Scalar by-products (exact values, bounds, certificates).
    pub metrics: BTreeMap<String, f64>,
    /// Secondary sequences, e.g. tail expectations per level.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub series: BTreeMap<String, Vec<SequencePoint>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ConditionReport {
    pub fn new(condition_id: ConditionId, sequence: Vec<SequencePoint>, verdict: Verdict) -> Self {
        Self {
            condition_id,
            sequence,
            verdict,
            tolerances: BTreeMap::new(),
            metrics: BTreeMap::new(),
            series: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn tolerance(mut self, key: &str, value: f64) -> Self {
        self.tolerances.insert(key.to_string(), value);
        self
    }

    pub fn metric(mut self, key: &str, value: f64) -> Self {
        self.metrics.insert(key.to_string(), value);
        self
    }

    pub fn note(mut self, text: impl Into<String>) -> Self {
        self.notes.push(text.into());
        self
    }

    pub fn values(&self) -> Vec<f64> {
        self.sequence.iter().map(|p| p.value).collect()
    }

    pub fn last_value(&self) -> Option<f64> {
        self.sequence.last().map(|p| p.value)
    }

    pub fn all_finite(&self) -> bool {
        self.sequence.iter().all(|p| p.value.is_finite())
            && self.series.values().flatten().all(|p| p.value.is_finite())
    }
}

fn slack(v: f64) -> f64 {
    TREND_SLACK * v.abs().max(1.0)
}

pub fn is_nonincreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] + slack(w[0]))
}

pub fn is_nondecreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] >= w[0] - slack(w[0]))
}

/// The monotone-trend rule shared by the limit conditions:
///
/// * satisfied: the last value is `≤ threshold` and the sequence is
///   nonincreasing;
/// * violated: the sequence is nondecreasing and its last value exceeds
///   `threshold`;
/// * inconclusive otherwise (including an empty sequence).
pub fn trend_verdict(values: &[f64], threshold: f64) -> Verdict {
    let Some(&last) = values.last() else {
        return Verdict::Inconclusive;
    };
    if last <= threshold + slack(threshold) && is_nonincreasing(values) {
        Verdict::Satisfied
    } else if last > threshold && is_nondecreasing(values) {
        Verdict::Violated
    } else {
        Verdict::Inconclusive
    }
}

/// Aggregate of many verdicts: any violation wins, then any inconclusive.
pub fn combine(verdicts: impl IntoIterator<Item = Verdict>) -> Verdict {
    let mut out = Verdict::Satisfied;
    for v in verdicts {
        match v {
            Verdict::Violated => return Verdict::Violated,
            Verdict::Inconclusive => out = Verdict::Inconclusive,
            Verdict::Satisfied => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for id in ConditionId::ALL {
            assert_eq!(id.as_str().parse::<ConditionId>().unwrap(), id);
            assert_eq!(serde_json::to_string(&id).unwrap(), format!("\"{}\"", id.as_str()));
        }
        assert!("nope".parse::<ConditionId>().is_err());
        assert_eq!("ui_fmgf".parse::<ConditionId>().unwrap(), ConditionId::UiFmgf);
    }

    #[test]
    fn trend_rules() {
        assert_eq!(trend_verdict(&[3.0, 2.0, 0.001], 0.01), Verdict::Satisfied);
        assert_eq!(trend_verdict(&[0.0, 0.0, 0.0], 0.0), Verdict::Satisfied);
        assert_eq!(trend_verdict(&[1.0, 1.0, 2.0], 0.5), Verdict::Violated);
        assert_eq!(trend_verdict(&[3.0, 2.0, 1.0], 0.5), Verdict::Inconclusive);
        assert_eq!(trend_verdict(&[3.0, 0.001, 0.002], 0.01), Verdict::Inconclusive);
        assert_eq!(trend_verdict(&[], 1.0), Verdict::Inconclusive);
    }

    #[test]
    fn combine_rules() {
        use Verdict::*;
        assert_eq!(combine([Satisfied, Satisfied]), Satisfied);
        assert_eq!(combine([Satisfied, Inconclusive]), Inconclusive);
        assert_eq!(combine([Inconclusive, Violated, Satisfied]), Violated);
    }
}
