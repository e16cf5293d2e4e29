//! Negative log-likelihoods, gradients and observed information for the four
//! exponential model variants.
//!
//! Every objective is a sum of per-record terms `ℓ_i(η_i)` where `η_i = x_i'θ`
//! is the linear predictor of the block being optimized, with the other
//! block held fixed. Writing `A = λ_t/(λ_t+λ_c)` and `B = 1 - A`:
//!
//! | variant / block        | `ℓ_i`                                           |
//! |------------------------|-------------------------------------------------|
//! | PUSA θ_t (both modes)  | `s (log(λ_t+λ_c) - λ_t t)`                      |
//! | PUSA c-observed θ_c    | `s log(λ_t+λ_c) + η_c - λ_c c`                  |
//! | PUSA c-unobserved θ_c  | `s (log(λ_t+λ_c) - λ_c t) + (1-s)(η_c - λ_c c)` |
//! | Conventional θ_t       | `-λ_t u + log(λ_t+λ_c)`, `u = t` if s=1 else c  |
//! | Conventional c-obs θ_c | `s η_c - λ_c c + log(λ_t+λ_c)`                  |
//! | Conventional c-unobs θ_c | `-λ_c u + log(λ_t+λ_c)`                       |
//!
//! Constants that do not depend on the optimized block are dropped. The
//! gradient and information follow from `dℓ/dη` and `d²ℓ/dη²` by the chain
//! rule, so they are derived from the log-likelihood rather than transcribed.

use serde::{Deserialize, Serialize};

use crate::distributions::{self, DistributionSpec};
use crate::error::{Error, Result};
use crate::model::{dot, CensoringMode, Dataset, Estimator, ModelVariant, ParamVector, SubjectRecord};
use crate::numeric::{log_add_exp, logistic, CompensatedSum};
use crate::quadrature::QuadratureConfig;

/// Which parameter block an objective is a function of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectiveTarget {
    ThetaT,
    ThetaC,
}

impl ObjectiveTarget {
    pub fn name(self) -> &'static str {
        match self {
            ObjectiveTarget::ThetaT => "theta_t",
            ObjectiveTarget::ThetaC => "theta_c",
        }
    }
}

/// Dataset, variant and the current value of both parameter blocks.
#[derive(Debug, Clone, Copy)]
pub struct LikelihoodContext<'a> {
    pub dataset: &'a Dataset,
    pub variant: ModelVariant,
    pub theta_t: &'a [f64],
    pub theta_c: &'a [f64],
}

impl<'a> LikelihoodContext<'a> {
    pub fn new(
        dataset: &'a Dataset,
        variant: ModelVariant,
        theta_t: &'a [f64],
        theta_c: &'a [f64],
    ) -> Result<Self> {
        for len in [theta_t.len(), theta_c.len()] {
            if len != dataset.dimension {
                return Err(Error::DimensionMismatch {
                    expected: dataset.dimension,
                    actual: len,
                });
            }
        }
        Ok(Self {
            dataset,
            variant,
            theta_t,
            theta_c,
        })
    }

    /// The same context with the optimized block replaced by `theta`.
    pub fn with_target(&self, target: ObjectiveTarget, theta: &'a [f64]) -> Self {
        let mut ctx = *self;
        match target {
            ObjectiveTarget::ThetaT => ctx.theta_t = theta,
            ObjectiveTarget::ThetaC => ctx.theta_c = theta,
        }
        ctx
    }
}

/// `ℓ`, `dℓ/dη`, `d²ℓ/dη²` for one record.
#[derive(Debug, Clone, Copy)]
struct Term {
    value: f64,
    d1: f64,
    d2: f64,
}

fn require(value: Option<f64>, index: usize, field: &'static str, ctx: &LikelihoodContext, target: ObjectiveTarget) -> Result<f64> {
    value.ok_or_else(|| Error::MissingField {
        index,
        field,
        context: format!("{} / {}", ctx.variant, target.name()),
    })
}

fn record_term(
    ctx: &LikelihoodContext,
    target: ObjectiveTarget,
    index: usize,
    r: &SubjectRecord,
) -> Result<Option<Term>> {
    let eta_t = dot(&r.covariates, ctx.theta_t);
    let eta_c = dot(&r.covariates, ctx.theta_c);
    let lt = eta_t.exp();
    let lc = eta_c.exp();
    let log_sum = log_add_exp(eta_t, eta_c);
    let a = logistic(eta_t - eta_c);
    let b = logistic(eta_c - eta_t);
    let s = r.s();

    // observed time u: t for labeled subjects, c otherwise
    let observed = |ctx: &LikelihoodContext| -> Result<f64> {
        if r.label {
            require(r.survival_time, index, "t", ctx, target)
        } else {
            require(r.censoring_time, index, "c", ctx, target)
        }
    };

    let term = match (ctx.variant.estimator, target) {
        (Estimator::Pusa, ObjectiveTarget::ThetaT) => {
            if !r.label {
                return Ok(None);
            }
            let t = require(r.survival_time, index, "t", ctx, target)?;
            Term {
                value: log_sum - lt * t,
                d1: a - lt * t,
                d2: a * b - lt * t,
            }
        }
        (Estimator::Pusa, ObjectiveTarget::ThetaC) => match ctx.variant.censoring {
            CensoringMode::CObserved => {
                let c = require(r.censoring_time, index, "c", ctx, target)?;
                Term {
                    value: s * log_sum + eta_c - lc * c,
                    d1: s * b + 1.0 - lc * c,
                    d2: s * a * b - lc * c,
                }
            }
            CensoringMode::CUnobserved => {
                if r.label {
                    let t = require(r.survival_time, index, "t", ctx, target)?;
                    Term {
                        value: log_sum - lc * t,
                        d1: b - lc * t,
                        d2: a * b - lc * t,
                    }
                } else {
                    let c = require(r.censoring_time, index, "c", ctx, target)?;
                    Term {
                        value: eta_c - lc * c,
                        d1: 1.0 - lc * c,
                        d2: -lc * c,
                    }
                }
            }
        },
        (Estimator::Conventional, ObjectiveTarget::ThetaT) => {
            let u = observed(ctx)?;
            Term {
                value: -lt * u + log_sum,
                d1: -lt * u + a,
                d2: -lt * u + a * b,
            }
        }
        (Estimator::Conventional, ObjectiveTarget::ThetaC) => match ctx.variant.censoring {
            CensoringMode::CObserved => {
                let c = require(r.censoring_time, index, "c", ctx, target)?;
                Term {
                    value: s * eta_c - lc * c + log_sum,
                    d1: s - lc * c + b,
                    d2: -lc * c + a * b,
                }
            }
            CensoringMode::CUnobserved => {
                let u = observed(ctx)?;
                Term {
                    value: -lc * u + log_sum,
                    d1: -lc * u + b,
                    d2: -lc * u + a * b,
                }
            }
        },
    };
    if !(term.value.is_finite() && term.d1.is_finite() && term.d2.is_finite()) {
        return Err(Error::NonFinite {
            index,
            context: format!("{} / {}", ctx.variant, target.name()),
        });
    }
    Ok(Some(term))
}

fn for_each_term(
    ctx: &LikelihoodContext,
    target: ObjectiveTarget,
    mut f: impl FnMut(&SubjectRecord, Term),
) -> Result<()> {
    for (i, r) in ctx.dataset.records.iter().enumerate() {
        if let Some(term) = record_term(ctx, target, i, r)? {
            f(r, term);
        }
    }
    Ok(())
}

/// `-log L` of the chosen block, up to constants in that block.
pub fn neg_loglik(ctx: &LikelihoodContext, target: ObjectiveTarget) -> Result<f64> {
    let mut sum = CompensatedSum::new();
    for_each_term(ctx, target, |_, term| sum.add(term.value))?;
    Ok(-sum.value())
}

/// Gradient of [`neg_loglik`] with respect to the chosen block.
pub fn grad(ctx: &LikelihoodContext, target: ObjectiveTarget) -> Result<Vec<f64>> {
    let p = ctx.dataset.dimension;
    let mut sums = vec![CompensatedSum::new(); p];
    for_each_term(ctx, target, |r, term| {
        for (s, x) in sums.iter_mut().zip(&r.covariates) {
            s.add(x * term.d1);
        }
    })?;
    Ok(sums.iter().map(|s| -s.value()).collect())
}

/// [`neg_loglik`] and [`grad`] in one pass over the records.
pub fn neg_loglik_and_grad(ctx: &LikelihoodContext, target: ObjectiveTarget) -> Result<(f64, Vec<f64>)> {
    let p = ctx.dataset.dimension;
    let mut value = CompensatedSum::new();
    let mut sums = vec![CompensatedSum::new(); p];
    for_each_term(ctx, target, |r, term| {
        value.add(term.value);
        for (s, x) in sums.iter_mut().zip(&r.covariates) {
            s.add(x * term.d1);
        }
    })?;
    Ok((-value.value(), sums.iter().map(|s| -s.value()).collect()))
}

/// Observed information `Q = -∇∇' log L` (the Hessian of [`neg_loglik`]).
/// Row-major `p × p`, symmetric.
pub fn neg_hessian(ctx: &LikelihoodContext, target: ObjectiveTarget) -> Result<Vec<Vec<f64>>> {
    let p = ctx.dataset.dimension;
    let mut sums = vec![CompensatedSum::new(); p * (p + 1) / 2];
    for_each_term(ctx, target, |r, term| {
        let x = &r.covariates;
        let mut k = 0;
        for i in 0..p {
            for j in 0..=i {
                sums[k].add(x[i] * x[j] * term.d2);
                k += 1;
            }
        }
    })?;
    let mut q = vec![vec![0.0; p]; p];
    let mut k = 0;
    #[allow(clippy::needless_range_loop)]
    for i in 0..p {
        for j in 0..=i {
            let v = -sums[k].value();
            q[i][j] = v;
            q[j][i] = v;
            k += 1;
        }
    }
    Ok(q)
}

/// Full `-log L(θ_t, θ_c)` and its gradient `(∂/∂θ_t, ∂/∂θ_c)`, for fitting
/// both blocks at once.
pub fn joint_neg_loglik(ctx: &LikelihoodContext) -> Result<(f64, Vec<f64>)> {
    let p = ctx.dataset.dimension;
    let mut value = CompensatedSum::new();
    let mut gt = vec![CompensatedSum::new(); p];
    let mut gc = vec![CompensatedSum::new(); p];
    let target = ObjectiveTarget::ThetaT;
    for (i, r) in ctx.dataset.records.iter().enumerate() {
        let eta_t = dot(&r.covariates, ctx.theta_t);
        let eta_c = dot(&r.covariates, ctx.theta_c);
        let (lt, lc) = (eta_t.exp(), eta_c.exp());
        let log_sum = log_add_exp(eta_t, eta_c);
        let (a, b) = (logistic(eta_t - eta_c), logistic(eta_c - eta_t));
        let obs = |field_t: bool| {
            if field_t {
                require(r.survival_time, i, "t", ctx, target)
            } else {
                require(r.censoring_time, i, "c", ctx, target)
            }
        };
        // (ℓ, dℓ/dη_t, dℓ/dη_c)
        let (l, dt, dc) = match (ctx.variant.estimator, ctx.variant.censoring, r.label) {
            (Estimator::Pusa, CensoringMode::CObserved, true) => {
                let (t, c) = (obs(true)?, obs(false)?);
                (log_sum - lt * t + eta_c - lc * c, a - lt * t, b + 1.0 - lc * c)
            }
            (Estimator::Pusa, CensoringMode::CUnobserved, true) => {
                let t = obs(true)?;
                (log_sum - (lt + lc) * t, a - lt * t, b - lc * t)
            }
            (Estimator::Pusa, _, false) => {
                let c = obs(false)?;
                (eta_c - lc * c, 0.0, 1.0 - lc * c)
            }
            (Estimator::Conventional, CensoringMode::CObserved, true) => {
                let (t, c) = (obs(true)?, obs(false)?);
                (eta_c - lc * c - lt * t + log_sum, a - lt * t, 1.0 - lc * c + b)
            }
            (Estimator::Conventional, _, label) => {
                let u = obs(label)?;
                (-(lt + lc) * u + log_sum, a - lt * u, b - lc * u)
            }
        };
        if !(l.is_finite() && dt.is_finite() && dc.is_finite()) {
            return Err(Error::NonFinite {
                index: i,
                context: format!("{} / joint", ctx.variant),
            });
        }
        value.add(l);
        for (j, x) in r.covariates.iter().enumerate() {
            gt[j].add(x * dt);
            gc[j].add(x * dc);
        }
    }
    let grad = gt.iter().chain(&gc).map(|s| -s.value()).collect();
    Ok((-value.value(), grad))
}

/// PUSA `-log L` for arbitrary survival/censoring families, composed from
/// densities and a numerically evaluated event probability. No derivatives
/// are provided.
#[allow(clippy::too_many_arguments)]
pub fn general_neg_loglik(
    dataset: &Dataset,
    mode: CensoringMode,
    t_spec: &DistributionSpec,
    c_spec: &DistributionSpec,
    theta_t: &ParamVector,
    theta_c: &ParamVector,
    target: ObjectiveTarget,
    quad: &QuadratureConfig,
) -> Result<f64> {
    let variant = ModelVariant::new(Estimator::Pusa, mode);
    let ctx = LikelihoodContext::new(dataset, variant, theta_t.as_slice(), theta_c.as_slice())?;
    let mut sum = CompensatedSum::new();
    for (i, r) in dataset.records.iter().enumerate() {
        let lt = dot(&r.covariates, ctx.theta_t).exp();
        let lc = dot(&r.covariates, ctx.theta_c).exp();
        let term = if r.label {
            let t = require(r.survival_time, i, "t", &ctx, target)?;
            let log_p = distributions::event_probability(t_spec, c_spec, lt, lc, quad)?.ln();
            match (target, mode) {
                (ObjectiveTarget::ThetaT, _) => distributions::pdf(t_spec, lt, t)?.ln() - log_p,
                (ObjectiveTarget::ThetaC, CensoringMode::CObserved) => {
                    let c = require(r.censoring_time, i, "c", &ctx, target)?;
                    distributions::pdf(c_spec, lc, c)?.ln() - log_p
                }
                (ObjectiveTarget::ThetaC, CensoringMode::CUnobserved) => {
                    distributions::survival(c_spec, lc, t)?.ln() - log_p
                }
            }
        } else if target == ObjectiveTarget::ThetaC {
            let c = require(r.censoring_time, i, "c", &ctx, target)?;
            distributions::pdf(c_spec, lc, c)?.ln()
        } else {
            0.0
        };
        if !term.is_finite() {
            return Err(Error::NonFinite {
                index: i,
                context: "general likelihood".into(),
            });
        }
        sum.add(term);
    }
    Ok(-sum.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SubjectRecord;

    fn one(record: SubjectRecord, c_observed: bool) -> Dataset {
        let p = record.covariates.len();
        Dataset::new(vec![record], p, c_observed)
    }

    #[test]
    fn single_record_values() {
        let d = one(SubjectRecord::labeled(1.0, Some(2.0), vec![0.0, 0.0]), true);
        let z = [0.0, 0.0];
        let expected = -(2f64.ln() - 1.0);
        for variant in [ModelVariant::PUSA_C_OBSERVED, ModelVariant::PUSA_C_UNOBSERVED] {
            let ctx = LikelihoodContext::new(&d, variant, &z, &z).unwrap();
            let v = neg_loglik(&ctx, ObjectiveTarget::ThetaT).unwrap();
            assert!((v - expected).abs() < 1e-15);
            assert!((v - 0.306_853).abs() < 1e-6);
        }

        let d = one(SubjectRecord::unlabeled(1.0, vec![0.0, 0.0]), false);
        let ctx = LikelihoodContext::new(&d, ModelVariant::PUSA_C_UNOBSERVED, &z, &z).unwrap();
        assert_eq!(neg_loglik(&ctx, ObjectiveTarget::ThetaC).unwrap(), 1.0);
    }

    #[test]
    fn single_record_gradient() {
        let d = one(SubjectRecord::labeled(1.0, Some(2.0), vec![1.0, 0.0]), true);
        let z = [0.0, 0.0];
        let ctx = LikelihoodContext::new(&d, ModelVariant::PUSA_C_OBSERVED, &z, &z).unwrap();
        let g = grad(&ctx, ObjectiveTarget::ThetaT).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-15 && g[1] == 0.0, "{g:?}");
    }

    #[test]
    fn unlabeled_only_contributes_nothing_to_theta_t() {
        let d = Dataset::new(
            vec![
                SubjectRecord::unlabeled(1.0, vec![0.3, 1.0]),
                SubjectRecord::unlabeled(0.2, vec![-1.0, 2.0]),
            ],
            2,
            true,
        );
        let th = [0.4, -0.2];
        for variant in [ModelVariant::PUSA_C_OBSERVED, ModelVariant::PUSA_C_UNOBSERVED] {
            let ctx = LikelihoodContext::new(&d, variant, &th, &th).unwrap();
            assert_eq!(grad(&ctx, ObjectiveTarget::ThetaT).unwrap(), vec![0.0, 0.0]);
            assert_eq!(
                neg_hessian(&ctx, ObjectiveTarget::ThetaT).unwrap(),
                vec![vec![0.0, 0.0], vec![0.0, 0.0]]
            );
        }
    }

    #[test]
    fn unlabeled_censoring_information_matches_second_difference() {
        let d = one(SubjectRecord::unlabeled(1.0, vec![1.0, 0.0]), true);
        let z = [0.0, 0.0];
        let ctx = LikelihoodContext::new(&d, ModelVariant::PUSA_C_OBSERVED, &z, &z).unwrap();
        let q = neg_hessian(&ctx, ObjectiveTarget::ThetaC).unwrap();
        let h = 1e-4;
        let f = |v: f64| {
            let th = [v, 0.0];
            neg_loglik(&ctx.with_target(ObjectiveTarget::ThetaC, &th), ObjectiveTarget::ThetaC).unwrap()
        };
        let fd = (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h);
        assert!((q[0][0] - fd).abs() < 1e-6, "{} vs {fd}", q[0][0]);
        assert!((q[0][0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn missing_fields_are_reported() {
        let d = one(SubjectRecord::labeled(1.0, None, vec![0.0]), false);
        let z = [0.0];
        let ctx = LikelihoodContext::new(&d, ModelVariant::PUSA_C_OBSERVED, &z, &z).unwrap();
        let err = neg_loglik(&ctx, ObjectiveTarget::ThetaC).unwrap_err();
        assert!(matches!(err, Error::MissingField { index: 0, field: "c", .. }), "{err}");
        assert!(LikelihoodContext::new(&d, ModelVariant::PUSA_C_OBSERVED, &[0.0, 1.0], &z).is_err());
    }

    #[test]
    fn overflow_is_reported_with_record() {
        let d = Dataset::new(
            vec![
                SubjectRecord::labeled(1.0, Some(2.0), vec![0.0]),
                SubjectRecord::labeled(1.0, Some(2.0), vec![1.0]),
            ],
            1,
            true,
        );
        let ctx = LikelihoodContext::new(&d, ModelVariant::PUSA_C_OBSERVED, &[800.0], &[0.0]).unwrap();
        let err = neg_loglik(&ctx, ObjectiveTarget::ThetaT).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1, .. }), "{err}");
    }

    #[test]
    fn joint_gradient_blocks_match_partial_gradients_for_pusa() {
        let d = Dataset::new(
            vec![
                SubjectRecord::labeled(0.3, Some(0.9), vec![0.2, 1.0]),
                SubjectRecord::labeled(0.1, Some(0.4), vec![1.2, -0.5]),
                SubjectRecord::unlabeled(0.7, vec![-0.4, 0.3]),
            ],
            2,
            true,
        );
        let (th, tc) = ([0.5, 0.2], [0.1, -0.3]);
        for variant in [ModelVariant::PUSA_C_OBSERVED, ModelVariant::PUSA_C_UNOBSERVED] {
            let ctx = LikelihoodContext::new(&d, variant, &th, &tc).unwrap();
            let (_, g) = joint_neg_loglik(&ctx).unwrap();
            // the θ_t block of the full likelihood is exactly the partial θ_t likelihood
            let gt = grad(&ctx, ObjectiveTarget::ThetaT).unwrap();
            assert!((g[0] - gt[0]).abs() < 1e-14 && (g[1] - gt[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn general_likelihood_matches_closed_form_up_to_constants() {
        let d = Dataset::new(
            vec![
                SubjectRecord::labeled(0.3, Some(0.9), vec![0.2, 1.0]),
                SubjectRecord::labeled(0.1, Some(0.4), vec![1.2, -0.5]),
                SubjectRecord::unlabeled(0.7, vec![-0.4, 0.3]),
            ],
            2,
            true,
        );
        let e = DistributionSpec::EXPONENTIAL;
        let quad = QuadratureConfig::default();
        let thetas = [[0.5, 0.2], [1.0, -0.4]];
        let tc = ParamVector::new(vec![0.1, -0.3]).unwrap();
        for mode in [CensoringMode::CObserved, CensoringMode::CUnobserved] {
            let variant = ModelVariant::new(Estimator::Pusa, mode);
            let diff = |target: ObjectiveTarget| {
                let vals: Vec<(f64, f64)> = thetas
                    .iter()
                    .map(|th| {
                        let thv = ParamVector::new(th.to_vec()).unwrap();
                        let (tt, cc) = match target {
                            ObjectiveTarget::ThetaT => (thv.clone(), tc.clone()),
                            ObjectiveTarget::ThetaC => (tc.clone(), thv.clone()),
                        };
                        let general = general_neg_loglik(&d, mode, &e, &e, &tt, &cc, target, &quad).unwrap();
                        let ctx = LikelihoodContext::new(&d, variant, tt.as_slice(), cc.as_slice()).unwrap();
                        (general, neg_loglik(&ctx, target).unwrap())
                    })
                    .collect();
                ((vals[1].0 - vals[0].0), (vals[1].1 - vals[0].1))
            };
            for target in [ObjectiveTarget::ThetaT, ObjectiveTarget::ThetaC] {
                let (g, c) = diff(target);
                assert!((g - c).abs() < 1e-12, "{mode:?} {target:?} {g} {c}");
            }
        }
    }
}
