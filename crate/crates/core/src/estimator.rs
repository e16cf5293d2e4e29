//! Alternating maximum-likelihood estimation, asymptotic standard errors and
//! Wald confidence intervals.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{
    joint_neg_loglik, neg_hessian, neg_loglik_and_grad, LikelihoodContext, ObjectiveTarget,
};
use crate::model::{Dataset, ModelVariant, ParamVector};
use crate::numeric::max_abs;
use crate::optimize::{minimize, MinimizeOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Starting θ_t; zeros when absent.
    pub init_theta_t: Option<ParamVector>,
    pub init_theta_c: Option<ParamVector>,
    /// Max-norm of the change in (θ_t, θ_c) over one full cycle.
    pub outer_tolerance: f64,
    pub max_outer_iters: usize,
    pub inner: MinimizeOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            init_theta_t: None,
            init_theta_c: None,
            outer_tolerance: 1e-6,
            max_outer_iters: 100,
            inner: MinimizeOptions::default(),
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.outer_tolerance > 0.0) || !(self.inner.gradient_tolerance > 0.0) {
            return Err(Error::InvalidArgument("fit tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Parameter snapshot after one Step1/Step2 cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub theta_t: Vec<f64>,
    pub theta_c: Vec<f64>,
    pub objective_t: f64,
    pub objective_c: f64,
    pub change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub variant: ModelVariant,
    pub theta_t_hat: ParamVector,
    pub theta_c_hat: ParamVector,
    pub converged: bool,
    pub outer_iterations: usize,
    /// Inner minimizations that stopped before reaching the gradient tolerance.
    pub inner_nonconverged: usize,
    pub info_t: Vec<Vec<f64>>,
    pub info_c: Vec<Vec<f64>>,
    pub se_t: Option<Vec<f64>>,
    pub se_c: Option<Vec<f64>>,
    pub trace: Vec<TraceEntry>,
}

impl FitResult {
    /// `(θ_t, θ_c)` concatenated.
    pub fn estimates(&self) -> Vec<f64> {
        self.theta_t_hat.as_slice().iter().chain(self.theta_c_hat.as_slice()).copied().collect()
    }

    /// `(se_t, se_c)` concatenated, when both exist.
    pub fn standard_errors(&self) -> Option<Vec<f64>> {
        match (&self.se_t, &self.se_c) {
            (Some(t), Some(c)) => Some(t.iter().chain(c).copied().collect()),
            _ => None,
        }
    }
}

fn initial(dataset: &Dataset, init: &Option<ParamVector>) -> Result<Vec<f64>> {
    match init {
        Some(v) if v.len() != dataset.dimension => Err(Error::DimensionMismatch {
            expected: dataset.dimension,
            actual: v.len(),
        }),
        Some(v) => Ok(v.as_slice().to_vec()),
        None => Ok(vec![0.0; dataset.dimension]),
    }
}

fn check_identifiable(dataset: &Dataset) -> Result<()> {
    if dataset.labeled_count() == 0 {
        return Err(Error::NoLabeledEvents);
    }
    Ok(())
}

fn step_name(target: ObjectiveTarget) -> &'static str {
    match target {
        ObjectiveTarget::ThetaT => "t",
        ObjectiveTarget::ThetaC => "c",
    }
}

/// Minimizes one block with the other held fixed.
fn step(
    dataset: &Dataset,
    variant: ModelVariant,
    target: ObjectiveTarget,
    theta_t: &[f64],
    theta_c: &[f64],
    opts: &MinimizeOptions,
    iteration: usize,
) -> Result<(Vec<f64>, f64, bool)> {
    let base = LikelihoodContext::new(dataset, variant, theta_t, theta_c)?;
    let init = match target {
        ObjectiveTarget::ThetaT => theta_t,
        ObjectiveTarget::ThetaC => theta_c,
    };
    let m = minimize(
        |th: &[f64]| neg_loglik_and_grad(&base.with_target(target, th), target),
        init,
        opts,
    )
    .map_err(|e| Error::StepFailed {
        step: step_name(target),
        iteration,
        source: Box::new(e),
    })?;
    Ok((m.argmin, m.value, m.converged))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    dataset: &Dataset,
    variant: ModelVariant,
    theta_t: Vec<f64>,
    theta_c: Vec<f64>,
    converged: bool,
    outer_iterations: usize,
    inner_nonconverged: usize,
    trace: Vec<TraceEntry>,
) -> Result<FitResult> {
    let ctx = LikelihoodContext::new(dataset, variant, &theta_t, &theta_c)?;
    let info_t = neg_hessian(&ctx, ObjectiveTarget::ThetaT)?;
    let info_c = neg_hessian(&ctx, ObjectiveTarget::ThetaC)?;
    Ok(FitResult {
        variant,
        se_t: asymptotic_se(&info_t),
        se_c: asymptotic_se(&info_c),
        info_t,
        info_c,
        theta_t_hat: ParamVector::new(theta_t)?,
        theta_c_hat: ParamVector::new(theta_c)?,
        converged,
        outer_iterations,
        inner_nonconverged,
        trace,
    })
}

/// Alternates Step1 (θ_t with θ_c fixed) and Step2 (θ_c with θ_t fixed)
/// until a full cycle moves both blocks by at most `outer_tolerance`.
///
/// Hitting `max_outer_iters` is not an error; the result is returned with
/// `converged = false`.
pub fn fit_alternating(dataset: &Dataset, variant: ModelVariant, opts: &FitOptions) -> Result<FitResult> {
    opts.validate()?;
    check_identifiable(dataset)?;
    let mut theta_t = initial(dataset, &opts.init_theta_t)?;
    let mut theta_c = initial(dataset, &opts.init_theta_c)?;
    let mut trace = Vec::new();
    let mut inner_nonconverged = 0;
    let mut converged = false;
    let mut outer = 0;
    while outer < opts.max_outer_iters {
        outer += 1;
        let (next_t, objective_t, ok_t) =
            step(dataset, variant, ObjectiveTarget::ThetaT, &theta_t, &theta_c, &opts.inner, outer)?;
        let (next_c, objective_c, ok_c) =
            step(dataset, variant, ObjectiveTarget::ThetaC, &next_t, &theta_c, &opts.inner, outer)?;
        inner_nonconverged += usize::from(!ok_t) + usize::from(!ok_c);
        let change = max_abs(&diff(&next_t, &theta_t)).max(max_abs(&diff(&next_c, &theta_c)));
        theta_t = next_t;
        theta_c = next_c;
        trace.push(TraceEntry {
            iteration: outer,
            theta_t: theta_t.clone(),
            theta_c: theta_c.clone(),
            objective_t,
            objective_c,
            change,
        });
        if change <= opts.outer_tolerance {
            converged = true;
            break;
        }
    }
    finish(dataset, variant, theta_t, theta_c, converged, outer, inner_nonconverged, trace)
}

/// Minimizes the full likelihood over `(θ_t, θ_c)` jointly. Experimental:
/// no convergence guarantees. Standard errors use the block-diagonal
/// information, as for the alternating fit.
pub fn fit_simultaneous(dataset: &Dataset, variant: ModelVariant, opts: &FitOptions) -> Result<FitResult> {
    opts.validate()?;
    check_identifiable(dataset)?;
    let p = dataset.dimension;
    let mut init = initial(dataset, &opts.init_theta_t)?;
    init.extend(initial(dataset, &opts.init_theta_c)?);
    let inner = MinimizeOptions {
        max_iterations: opts.inner.max_iterations.max(opts.max_outer_iters),
        ..opts.inner
    };
    let m = minimize(
        |th: &[f64]| {
            let ctx = LikelihoodContext::new(dataset, variant, &th[..p], &th[p..])?;
            joint_neg_loglik(&ctx)
        },
        &init,
        &inner,
    )
    .map_err(|e| Error::StepFailed {
        step: "joint",
        iteration: 1,
        source: Box::new(e),
    })?;
    let (theta_t, theta_c) = m.argmin.split_at(p);
    let trace = vec![TraceEntry {
        iteration: m.iterations,
        theta_t: theta_t.to_vec(),
        theta_c: theta_c.to_vec(),
        objective_t: m.value,
        objective_c: m.value,
        change: max_abs(&m.gradient),
    }];
    finish(
        dataset,
        variant,
        theta_t.to_vec(),
        theta_c.to_vec(),
        m.converged,
        1,
        usize::from(!m.converged),
        trace,
    )
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `sqrt(diag(info⁻¹))`, or `None` unless `info` is positive definite.
pub fn asymptotic_se(info: &[Vec<f64>]) -> Option<Vec<f64>> {
    let p = info.len();
    if info.iter().any(|row| row.len() != p) || info.iter().flatten().any(|v| !v.is_finite()) {
        return None;
    }
    let m = DMatrix::from_fn(p, p, |i, j| info[i][j]);
    let inv = m.cholesky()?.inverse();
    let se: Vec<f64> = (0..p).map(|i| inv[(i, i)].sqrt()).collect();
    se.iter().all(|v| v.is_finite() && *v > 0.0).then_some(se)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConfidenceLevel {
    P90,
    P95,
}

impl ConfidenceLevel {
    pub const ALL: [Self; 2] = [ConfidenceLevel::P95, ConfidenceLevel::P90];

    /// Two-sided standard normal quantile.
    pub fn z(self) -> f64 {
        match self {
            ConfidenceLevel::P90 => 1.6449,
            ConfidenceLevel::P95 => 1.9600,
        }
    }

    pub fn level(self) -> f64 {
        match self {
            ConfidenceLevel::P90 => 0.90,
            ConfidenceLevel::P95 => 0.95,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ConfidenceLevel::P90 => "90",
            ConfidenceLevel::P95 => "95",
        }
    }

    pub fn from_level(level: f64) -> Result<Self> {
        if (level - 0.90).abs() < 1e-12 {
            Ok(ConfidenceLevel::P90)
        } else if (level - 0.95).abs() < 1e-12 {
            Ok(ConfidenceLevel::P95)
        } else {
            Err(Error::InvalidArgument(format!(
                "confidence level {level} unsupported (0.90 or 0.95)"
            )))
        }
    }
}

/// `θ̂ ± z·se`.
pub fn confidence_interval(theta_hat: f64, se: f64, level: ConfidenceLevel) -> Result<(f64, f64)> {
    if !(se > 0.0 && se.is_finite()) {
        return Err(Error::NonPositive { name: "se", value: se });
    }
    let half = level.z() * se;
    Ok((theta_hat - half, theta_hat + half))
}
