//! PU-weighted losses with the censoring distribution treated as known: a
//! Cox partial likelihood and a discrete-time logit hazard, each
//! inverse-weighted by `P(y = 1 | x)`.

use serde::{Deserialize, Serialize};

use crate::distributions::{self, DistributionSpec, Family};
use crate::error::{Error, Result};
use crate::model::{dot, Dataset, ParamVector, SubjectRecord};
use crate::numeric::{logistic, max_abs, CompensatedSum};
use crate::optimize::{minimize, MinimizeOptions};
use crate::quadrature::QuadratureConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RiskKind {
    Linear,
}

/// Risk score `g(x)`; only the linear form `θ_t'x` is provided.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskFunction {
    pub kind: RiskKind,
    pub params: ParamVector,
}

impl RiskFunction {
    pub fn linear(params: ParamVector) -> Self {
        Self {
            kind: RiskKind::Linear,
            params,
        }
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                actual: x.len(),
            });
        }
        match self.kind {
            RiskKind::Linear => Ok(dot(x, self.params.as_slice())),
        }
    }
}

/// Censoring distribution with a fixed, known log-linear rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownCensoringModel {
    pub spec: DistributionSpec,
    pub theta_c: ParamVector,
}

impl KnownCensoringModel {
    pub fn exponential(theta_c: ParamVector) -> Self {
        Self {
            spec: DistributionSpec::EXPONENTIAL,
            theta_c,
        }
    }

    pub fn rate(&self, x: &[f64]) -> Result<f64> {
        crate::model::link_rate(x, &self.theta_c)
    }
}

/// Indices `j` with `times[j] ≥ times[i]`; tied times share risk sets.
pub fn risk_set(times: &[f64], i: usize) -> Vec<usize> {
    (0..times.len()).filter(|&j| times[j] >= times[i]).collect()
}

fn labeled_subset(data: &Dataset) -> Result<Vec<(usize, &SubjectRecord)>> {
    let labeled: Vec<(usize, &SubjectRecord)> = data.records.iter().enumerate().filter(|(_, r)| r.label).collect();
    if labeled.is_empty() {
        return Err(Error::NoLabeledEvents);
    }
    for &(i, r) in &labeled {
        if r.survival_time.is_none() {
            return Err(Error::MissingField {
                index: i,
                field: "t",
                context: "PU loss".into(),
            });
        }
        if r.covariates.len() != data.dimension {
            return Err(Error::DimensionMismatch {
                expected: data.dimension,
                actual: r.covariates.len(),
            });
        }
    }
    Ok(labeled)
}

/// Weighted Cox loss `(1/n) Σ_i (log Σ_{j∈R_i} e^{g_j} − g_i) / p_i` and its
/// gradient for a linear score, over one subsample. Breslow ties.
struct CoxSample {
    times: Vec<f64>,
    x: Vec<Vec<f64>>,
    /// Indices sorted by decreasing time.
    order: Vec<usize>,
}

impl CoxSample {
    fn new(records: &[(usize, &SubjectRecord)]) -> Self {
        let times: Vec<f64> = records.iter().map(|(_, r)| r.survival_time.unwrap_or(f64::NAN)).collect();
        let x = records.iter().map(|(_, r)| r.covariates.clone()).collect();
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));
        Self { times, x, order }
    }

    /// `log Σ_{R_i} e^{g}` for every subject and the risk-set weighted mean
    /// covariate.
    fn risk_sums(&self, scores: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = self.times.len();
        let p = self.x.first().map_or(0, Vec::len);
        let shift = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut lse = vec![0.0; n];
        let mut mean_x = vec![vec![0.0; p]; n];
        let mut total = CompensatedSum::new();
        let mut total_x = vec![CompensatedSum::new(); p];
        let mut k = 0;
        while k < n {
            // every subject tied at this time joins before any is scored
            let mut end = k;
            while end < n && self.times[self.order[end]] == self.times[self.order[k]] {
                let j = self.order[end];
                let e = (scores[j] - shift).exp();
                total.add(e);
                for (acc, xv) in total_x.iter_mut().zip(&self.x[j]) {
                    acc.add(e * xv);
                }
                end += 1;
            }
            let s = total.value();
            let ls = shift + s.ln();
            let mx: Vec<f64> = total_x.iter().map(|a| a.value() / s).collect();
            for &i in &self.order[k..end] {
                lse[i] = ls;
                mean_x[i].clone_from(&mx);
            }
            k = end;
        }
        (lse, mean_x)
    }

    fn loss(&self, scores: &[f64], probabilities: &[f64]) -> f64 {
        let (lse, _) = self.risk_sums(scores);
        let sum: CompensatedSum = (0..scores.len()).map(|i| (lse[i] - scores[i]) / probabilities[i]).collect();
        sum.value() / scores.len() as f64
    }

    fn loss_and_grad(&self, theta: &[f64], probabilities: &[f64]) -> (f64, Vec<f64>) {
        let scores: Vec<f64> = self.x.iter().map(|x| dot(x, theta)).collect();
        let (lse, mean_x) = self.risk_sums(&scores);
        let n = scores.len() as f64;
        let mut value = CompensatedSum::new();
        let mut grad = vec![CompensatedSum::new(); theta.len()];
        for i in 0..scores.len() {
            value.add((lse[i] - scores[i]) / probabilities[i]);
            for (g, (m, xv)) in grad.iter_mut().zip(mean_x[i].iter().zip(&self.x[i])) {
                g.add((m - xv) / probabilities[i]);
            }
        }
        (value.value() / n, grad.iter().map(|g| g.value() / n).collect())
    }
}

/// `P(y = 1 | x)` for exponential survival at the score-linked rate `e^{g}`,
/// for each labeled record.
fn cox_event_probabilities(
    labeled: &[(usize, &SubjectRecord)],
    theta: &[f64],
    cm: &KnownCensoringModel,
    quad: &QuadratureConfig,
) -> Result<Vec<f64>> {
    labeled
        .iter()
        .map(|&(i, r)| {
            let lambda_t = dot(&r.covariates, theta).exp();
            let p = distributions::event_probability(&DistributionSpec::EXPONENTIAL, &cm.spec, lambda_t, cm.rate(&r.covariates)?, quad)?;
            if p > 0.0 {
                Ok(p)
            } else {
                Err(Error::ZeroEventProbability { index: i })
            }
        })
        .collect()
}

/// Cox loss over the labeled records with caller-supplied event
/// probabilities (one per labeled record, in dataset order).
pub fn cox_loss_with_probabilities(data: &Dataset, scores: &[f64], probabilities: &[f64]) -> Result<f64> {
    let labeled = labeled_subset(data)?;
    if scores.len() != labeled.len() || probabilities.len() != labeled.len() {
        return Err(Error::DimensionMismatch {
            expected: labeled.len(),
            actual: if scores.len() != labeled.len() { scores.len() } else { probabilities.len() },
        });
    }
    if let Some(k) = probabilities.iter().position(|p| !(*p > 0.0)) {
        return Err(Error::ZeroEventProbability { index: labeled[k].0 });
    }
    Ok(CoxSample::new(&labeled).loss(scores, probabilities))
}

/// Unweighted mean negative log partial likelihood over the labeled records.
pub fn cox_partial_likelihood_loss(data: &Dataset, g: &RiskFunction) -> Result<f64> {
    let labeled = labeled_subset(data)?;
    let scores = labeled.iter().map(|(_, r)| g.score(&r.covariates)).collect::<Result<Vec<_>>>()?;
    let ones = vec![1.0; labeled.len()];
    Ok(CoxSample::new(&labeled).loss(&scores, &ones))
}

/// PU-weighted Cox loss, with event probabilities evaluated at the current
/// risk function and the known censoring model.
pub fn pu_cox_loss(data: &Dataset, g: &RiskFunction, cm: &KnownCensoringModel, quad: &QuadratureConfig) -> Result<f64> {
    let labeled = labeled_subset(data)?;
    let scores = labeled.iter().map(|(_, r)| g.score(&r.covariates)).collect::<Result<Vec<_>>>()?;
    let probabilities = cox_event_probabilities(&labeled, g.params.as_slice(), cm, quad)?;
    Ok(CoxSample::new(&labeled).loss(&scores, &probabilities))
}

/// Per-period intercepts `α_1..α_J` and covariate effects `β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteHazardParams {
    pub alpha: Vec<f64>,
    pub beta: ParamVector,
}

impl DiscreteHazardParams {
    pub fn periods(&self) -> usize {
        self.alpha.len()
    }

    fn from_flat(flat: &[f64], periods: usize) -> Result<Self> {
        Ok(Self {
            alpha: flat[..periods].to_vec(),
            beta: ParamVector::new(flat[periods..].to_vec())?,
        })
    }
}

/// `h(τ | x) = logistic(α_τ + β'x)` for `1 ≤ τ ≤ J`.
pub fn discrete_hazard(tau: usize, x: &[f64], hp: &DiscreteHazardParams) -> Result<f64> {
    if tau == 0 || tau > hp.periods() {
        return Err(Error::InvalidArgument(format!(
            "period {tau} outside 1..={}",
            hp.periods()
        )));
    }
    if x.len() != hp.beta.len() {
        return Err(Error::DimensionMismatch {
            expected: hp.beta.len(),
            actual: x.len(),
        });
    }
    Ok(logistic(hp.alpha[tau - 1] + dot(x, hp.beta.as_slice())))
}

/// `P(T < C | x) = Σ_k p_t(k) S_c(k)` for exponential censoring read at
/// integer times, `S_c(k) = e^{−λ_c k}`. The hazard is held at `h_J` beyond
/// period `J`, which gives a geometric tail summed in closed form.
pub fn discrete_event_probability(x: &[f64], hp: &DiscreteHazardParams, cm: &KnownCensoringModel) -> Result<f64> {
    if cm.spec.family != Family::Exponential {
        return Err(Error::InvalidArgument("discrete weights need exponential censoring".into()));
    }
    let lambda_c = cm.rate(x)?;
    let eta = dot(x, hp.beta.as_slice());
    let mut total = CompensatedSum::new();
    let mut alive = 1.0;
    let mut h = 0.0;
    for (k, a) in hp.alpha.iter().enumerate() {
        h = logistic(a + eta);
        let s_c = distributions::survival(&cm.spec, lambda_c, (k + 1) as f64)?;
        total.add(alive * h * s_c);
        alive *= 1.0 - h;
    }
    let j = hp.periods() as f64;
    let stay = (-lambda_c).exp();
    total.add(alive * stay.powf(j) * h * stay / (1.0 - (1.0 - h) * stay));
    Ok(total.value())
}

struct LogitSample {
    times: Vec<usize>,
    x: Vec<Vec<f64>>,
    indices: Vec<usize>,
}

impl LogitSample {
    fn new(labeled: &[(usize, &SubjectRecord)], periods: usize) -> Result<Self> {
        let mut times = Vec::with_capacity(labeled.len());
        for &(i, r) in labeled {
            let t = r.survival_time.unwrap_or(f64::NAN);
            if !(t >= 1.0 && t.fract() == 0.0) {
                return Err(Error::InvalidArgument(format!("record {i}: discrete time {t} is not a positive integer")));
            }
            if t > periods as f64 {
                return Err(Error::InvalidArgument(format!("record {i}: time {t} beyond the {periods} modeled periods")));
            }
            times.push(t as usize);
        }
        Ok(Self {
            times,
            x: labeled.iter().map(|(_, r)| r.covariates.clone()).collect(),
            indices: labeled.iter().map(|(i, _)| *i).collect(),
        })
    }

    /// Negated weighted Bernoulli log-likelihood and its gradient with
    /// respect to `(α, β)`.
    fn loss_and_grad(&self, hp: &DiscreteHazardParams, probabilities: &[f64]) -> Result<(f64, Vec<f64>)> {
        let periods = hp.periods();
        let n = self.times.len() as f64;
        let mut value = CompensatedSum::new();
        let mut grad = vec![CompensatedSum::new(); periods + hp.beta.len()];
        for (s, (&t, x)) in self.times.iter().zip(&self.x).enumerate() {
            let w = 1.0 / probabilities[s];
            let eta = dot(x, hp.beta.as_slice());
            let mut subject = 0.0;
            let mut subject_score = 0.0;
            for k in 1..=t {
                let z = hp.alpha[k - 1] + eta;
                let h = logistic(z);
                if h <= 0.0 || h >= 1.0 {
                    return Err(Error::HazardSaturated {
                        index: self.indices[s],
                        period: k,
                    });
                }
                let y = if k == t { 1.0 } else { 0.0 };
                // log h = −softplus(−z), log(1 − h) = −softplus(z)
                subject += if k == t { -softplus(-z) } else { -softplus(z) };
                grad[k - 1].add(-w * (y - h));
                subject_score += y - h;
            }
            value.add(-w * subject);
            for (g, xv) in grad[periods..].iter_mut().zip(x) {
                g.add(-w * subject_score * xv);
            }
        }
        Ok((value.value() / n, grad.iter().map(|g| g.value() / n).collect()))
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn discrete_probabilities(
    labeled: &[(usize, &SubjectRecord)],
    hp: &DiscreteHazardParams,
    cm: &KnownCensoringModel,
) -> Result<Vec<f64>> {
    labeled
        .iter()
        .map(|&(i, r)| {
            let p = discrete_event_probability(&r.covariates, hp, cm)?;
            if p > 0.0 {
                Ok(p)
            } else {
                Err(Error::ZeroEventProbability { index: i })
            }
        })
        .collect()
}

/// PU-weighted discrete-time logit loss over the labeled records.
pub fn pu_logit_loss(data: &Dataset, hp: &DiscreteHazardParams, cm: &KnownCensoringModel) -> Result<f64> {
    let labeled = labeled_subset(data)?;
    let sample = LogitSample::new(&labeled, hp.periods())?;
    let probabilities = discrete_probabilities(&labeled, hp, cm)?;
    Ok(sample.loss_and_grad(hp, &probabilities)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    Cox,
    Logit { periods: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossFitOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub inner: MinimizeOptions,
    pub quadrature: QuadratureConfig,
}

impl Default for LossFitOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 100,
            inner: MinimizeOptions::default(),
            quadrature: QuadratureConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossFit {
    pub kind: LossKind,
    /// `θ_t` for the Cox loss, `β` for the logit loss.
    pub theta: ParamVector,
    /// Period intercepts, logit loss only.
    pub alpha: Option<Vec<f64>>,
    pub loss: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Alternates between computing `P(y = 1 | x)` at the current parameters
/// and minimizing the loss with those weights frozen, starting from zero.
pub fn fit_loss(data: &Dataset, kind: LossKind, cm: &KnownCensoringModel, opts: &LossFitOptions) -> Result<LossFit> {
    fit_loss_inner(data, kind, cm, opts, None)
}

/// As [`fit_loss`] but with the weights computed once at `weights_at` and
/// never updated.
pub fn fit_loss_frozen(
    data: &Dataset,
    kind: LossKind,
    cm: &KnownCensoringModel,
    opts: &LossFitOptions,
    weights_at: &[f64],
) -> Result<LossFit> {
    fit_loss_inner(data, kind, cm, opts, Some(weights_at))
}

fn fit_loss_inner(
    data: &Dataset,
    kind: LossKind,
    cm: &KnownCensoringModel,
    opts: &LossFitOptions,
    frozen: Option<&[f64]>,
) -> Result<LossFit> {
    if !(opts.tolerance > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let labeled = labeled_subset(data)?;
    let p = data.dimension;
    let periods = match kind {
        LossKind::Cox => 0,
        LossKind::Logit { periods: 0 } => {
            return Err(Error::InvalidArgument("at least one period required".into()))
        }
        LossKind::Logit { periods } => periods,
    };
    let cox = CoxSample::new(&labeled);
    let logit = match kind {
        LossKind::Logit { .. } => Some(LogitSample::new(&labeled, periods)?),
        LossKind::Cox => None,
    };
    let weights_for = |params: &[f64]| -> Result<Vec<f64>> {
        match kind {
            LossKind::Cox => cox_event_probabilities(&labeled, params, cm, &opts.quadrature),
            LossKind::Logit { .. } => discrete_probabilities(&labeled, &DiscreteHazardParams::from_flat(params, periods)?, cm),
        }
    };
    if let Some(w) = frozen {
        if w.len() != periods + p {
            return Err(Error::DimensionMismatch {
                expected: periods + p,
                actual: w.len(),
            });
        }
    }
    let mut params = vec![0.0; periods + p];
    let mut converged = false;
    let mut iterations = 0;
    let mut loss = f64::NAN;
    let mut probabilities = weights_for(frozen.unwrap_or(&params))?;
    while iterations < opts.max_iterations {
        iterations += 1;
        let objective = |th: &[f64]| -> Result<(f64, Vec<f64>)> {
            match &logit {
                None => Ok(cox.loss_and_grad(th, &probabilities)),
                Some(sample) => sample.loss_and_grad(&DiscreteHazardParams::from_flat(th, periods)?, &probabilities),
            }
        };
        let m = minimize(objective, &params, &opts.inner).map_err(|e| Error::StepFailed {
            step: "loss",
            iteration: iterations,
            source: Box::new(e),
        })?;
        let change = max_abs(&m.argmin.iter().zip(&params).map(|(a, b)| a - b).collect::<Vec<_>>());
        params = m.argmin;
        loss = m.value;
        if frozen.is_some() || change <= opts.tolerance {
            converged = frozen.is_none() || m.converged;
            break;
        }
        probabilities = weights_for(&params)?;
    }
    let (alpha, theta) = params.split_at(periods);
    Ok(LossFit {
        kind,
        theta: ParamVector::new(theta.to_vec())?,
        alpha: (periods > 0).then(|| alpha.to_vec()),
        loss,
        converged,
        iterations,
    })
}
