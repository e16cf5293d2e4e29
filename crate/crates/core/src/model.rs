//! Domain types shared by every estimator: subject records, datasets,
//! parameter vectors and the four likelihood variants.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One subject's observation `(t?, c?, s, x)`.
///
/// `label == true` marks a known event (s = 1). Unlabeled subjects carry only
/// their censoring time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    #[serde(rename = "t", default, skip_serializing_if = "Option::is_none")]
    pub survival_time: Option<f64>,
    #[serde(rename = "c", default, skip_serializing_if = "Option::is_none")]
    pub censoring_time: Option<f64>,
    #[serde(rename = "s", with = "label_as_int")]
    pub label: bool,
    #[serde(rename = "x")]
    pub covariates: Vec<f64>,
    /// The latent event indicator y, only known for synthetic data.
    #[serde(rename = "y", default, skip_serializing_if = "Option::is_none")]
    pub true_event: Option<bool>,
}

mod label_as_int {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(label: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*label))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(serde::de::Error::custom(format!("label must be 0 or 1, got {other}"))),
        }
    }
}

impl SubjectRecord {
    pub fn labeled(survival_time: f64, censoring_time: Option<f64>, covariates: Vec<f64>) -> Self {
        Self {
            survival_time: Some(survival_time),
            censoring_time,
            label: true,
            covariates,
            true_event: None,
        }
    }

    pub fn unlabeled(censoring_time: f64, covariates: Vec<f64>) -> Self {
        Self {
            survival_time: None,
            censoring_time: Some(censoring_time),
            label: false,
            covariates,
            true_event: None,
        }
    }

    /// `s` as a 0/1 float, the form it takes inside the likelihoods.
    #[inline]
    pub fn s(&self) -> f64 {
        if self.label {
            1.0
        } else {
            0.0
        }
    }

    /// Time recorded for the subject: `t` when labeled, `c` otherwise.
    pub fn observed_time(&self) -> Option<f64> {
        if self.label {
            self.survival_time
        } else {
            self.censoring_time
        }
    }
}

/// Whether the censoring time of labeled subjects is recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CensoringMode {
    CObserved,
    CUnobserved,
}

impl CensoringMode {
    pub fn c_observed(self) -> bool {
        matches!(self, CensoringMode::CObserved)
    }

    pub fn from_flag(c_observed_for_labeled: bool) -> Self {
        if c_observed_for_labeled {
            CensoringMode::CObserved
        } else {
            CensoringMode::CUnobserved
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Estimator {
    /// Likelihood that accounts for the positive-unlabeled structure.
    Pusa,
    /// Exponential model that reads `s` as the censoring indicator.
    Conventional,
}

/// Which of the four likelihoods applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelVariant {
    pub estimator: Estimator,
    pub censoring: CensoringMode,
}

impl ModelVariant {
    pub const PUSA_C_OBSERVED: Self = Self::new(Estimator::Pusa, CensoringMode::CObserved);
    pub const PUSA_C_UNOBSERVED: Self = Self::new(Estimator::Pusa, CensoringMode::CUnobserved);
    pub const CONVENTIONAL_C_OBSERVED: Self =
        Self::new(Estimator::Conventional, CensoringMode::CObserved);
    pub const CONVENTIONAL_C_UNOBSERVED: Self =
        Self::new(Estimator::Conventional, CensoringMode::CUnobserved);

    /// All variants, in the column order of the result tables.
    pub const ALL: [Self; 4] = [
        Self::PUSA_C_OBSERVED,
        Self::PUSA_C_UNOBSERVED,
        Self::CONVENTIONAL_C_OBSERVED,
        Self::CONVENTIONAL_C_UNOBSERVED,
    ];

    pub const fn new(estimator: Estimator, censoring: CensoringMode) -> Self {
        Self {
            estimator,
            censoring,
        }
    }

    pub fn name(&self) -> &'static str {
        match (self.estimator, self.censoring) {
            (Estimator::Pusa, CensoringMode::CObserved) => "pusa_c_observed",
            (Estimator::Pusa, CensoringMode::CUnobserved) => "pusa_c_unobserved",
            (Estimator::Conventional, CensoringMode::CObserved) => "conventional_c_observed",
            (Estimator::Conventional, CensoringMode::CUnobserved) => "conventional_c_unobserved",
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s.trim())
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown variant `{s}` (expected one of pusa_c_observed, pusa_c_unobserved, \
                     conventional_c_observed, conventional_c_unobserved)"
                ))
            })
    }
}

/// Regression coefficients (θ_t, θ_c or β_t). Entries are always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "parameter entries must be finite, got {bad}"
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(dimension: usize) -> Self {
        Self(vec![0.0; dimension])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(p: ParamVector) -> Self {
        p.0
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// An in-memory PU dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<SubjectRecord>,
    pub dimension: usize,
    pub c_observed_for_labeled: bool,
}

impl Dataset {
    /// Builds a dataset without validating it; see [`validate_dataset`].
    pub fn new(records: Vec<SubjectRecord>, dimension: usize, c_observed_for_labeled: bool) -> Self {
        Self {
            records,
            dimension,
            c_observed_for_labeled,
        }
    }

    /// Builds a dataset and rejects it if any invariant is violated.
    pub fn validated(
        records: Vec<SubjectRecord>,
        dimension: usize,
        c_observed_for_labeled: bool,
    ) -> Result<Self> {
        let d = Self::new(records, dimension, c_observed_for_labeled);
        let violations = validate_dataset(&d);
        if violations.is_empty() {
            Ok(d)
        } else {
            let joined: Vec<String> = violations.iter().map(ToString::to_string).collect();
            Err(Error::InvalidDataset(joined.join("; ")))
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn censoring_mode(&self) -> CensoringMode {
        CensoringMode::from_flag(self.c_observed_for_labeled)
    }

    pub fn labeled_count(&self) -> usize {
        self.records.iter().filter(|r| r.label).count()
    }

    /// The same subjects as seen when labeled censoring times are not recorded.
    pub fn without_labeled_censoring(&self) -> Self {
        let records = self
            .records
            .iter()
            .map(|r| {
                let mut r = r.clone();
                if r.label {
                    r.censoring_time = None;
                }
                r
            })
            .collect();
        Self::new(records, self.dimension, false)
    }

    /// View of the dataset in the given censoring mode.
    pub fn in_mode(&self, mode: CensoringMode) -> Self {
        match mode {
            CensoringMode::CObserved => {
                let mut d = self.clone();
                d.c_observed_for_labeled = true;
                d
            }
            CensoringMode::CUnobserved => self.without_labeled_censoring(),
        }
    }
}

/// The invariant a [`Violation`] breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    LabeledWithoutSurvivalTime,
    UnlabeledWithoutCensoringTime,
    UnlabeledWithSurvivalTime,
    LabeledWithoutCensoringTime,
    EventNotBeforeCensoring,
    NonPositiveTime,
    CovariateLength,
    NonFiniteCovariate,
    NoLabeledEvents,
}

impl Rule {
    fn describe(self) -> &'static str {
        match self {
            Rule::LabeledWithoutSurvivalTime => "s=1 requires t",
            Rule::UnlabeledWithoutCensoringTime => "s=0 requires c",
            Rule::UnlabeledWithSurvivalTime => "s=0 must not carry t",
            Rule::LabeledWithoutCensoringTime => "s=1 requires c in c-observed mode",
            Rule::EventNotBeforeCensoring => "t<c required under s=1",
            Rule::NonPositiveTime => "times must be positive and finite",
            Rule::CovariateLength => "covariate length must equal dataset dimension",
            Rule::NonFiniteCovariate => "covariates must be finite",
            Rule::NoLabeledEvents => "at least one s=1 record required",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Offending record; `None` for dataset-level rules.
    pub index: Option<usize>,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "record {i}: {}", self.rule.describe()),
            None => write!(f, "dataset: {}", self.rule.describe()),
        }
    }
}

fn record_violations(index: usize, r: &SubjectRecord, dataset: &Dataset, out: &mut Vec<Violation>) {
    let mut push = |rule| out.push(Violation { index: Some(index), rule });
    let bad_time = |v: Option<f64>| v.is_some_and(|v| !(v.is_finite() && v > 0.0));
    if bad_time(r.survival_time) || bad_time(r.censoring_time) {
        push(Rule::NonPositiveTime);
    }
    if r.covariates.len() != dataset.dimension {
        push(Rule::CovariateLength);
    }
    if r.covariates.iter().any(|v| !v.is_finite()) {
        push(Rule::NonFiniteCovariate);
    }
    if r.label {
        if r.survival_time.is_none() {
            push(Rule::LabeledWithoutSurvivalTime);
        }
        if dataset.c_observed_for_labeled {
            match (r.survival_time, r.censoring_time) {
                (_, None) => push(Rule::LabeledWithoutCensoringTime),
                (Some(t), Some(c)) if t >= c => push(Rule::EventNotBeforeCensoring),
                _ => {}
            }
        }
    } else {
        if r.censoring_time.is_none() {
            push(Rule::UnlabeledWithoutCensoringTime);
        }
        if r.survival_time.is_some() {
            push(Rule::UnlabeledWithSurvivalTime);
        }
    }
}

/// Lists every broken record or dataset invariant; empty when the dataset is valid.
pub fn validate_dataset(dataset: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, r) in dataset.records.iter().enumerate() {
        record_violations(i, r, dataset, &mut out);
    }
    if !dataset.records.iter().any(|r| r.label) {
        out.push(Violation {
            index: None,
            rule: Rule::NoLabeledEvents,
        });
    }
    out
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Log-linear rate `exp(x'θ)`.
pub fn link_rate(x: &[f64], theta: &ParamVector) -> Result<f64> {
    if x.len() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            actual: x.len(),
        });
    }
    Ok(dot(x, theta.as_slice()).exp())
}
