//! Exponential, gamma and Weibull regression families and the event
//! probability `P(t < c | x)` that normalizes the PU likelihood.
//!
//! Parameterizations, with rate `λ` and shape `α`:
//!
//! ```text
//! exponential  p(t) = λ exp(-λ t)
//! gamma        p(t) = λ^α t^(α-1) exp(-λ t) / Γ(α)          (rate form)
//! weibull      p(t) = α t^(α-1) λ exp(-λ t^α)                 (λ not raised to α)
//! ```
//!
//! The exponential/exponential and gamma/exponential pairs have closed-form
//! event probabilities; every other pair is integrated numerically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_semi_infinite, QuadratureConfig};
use crate::special::{ln_gamma, regularized_lower_gamma, regularized_upper_gamma};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Exponential,
    Gamma,
    Weibull,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub family: Family,
    shape: f64,
}

impl DistributionSpec {
    pub const EXPONENTIAL: Self = Self {
        family: Family::Exponential,
        shape: 1.0,
    };

    pub fn new(family: Family, shape: f64) -> Result<Self> {
        if family == Family::Exponential {
            return Ok(Self::EXPONENTIAL);
        }
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(Error::NonPositive {
                name: "shape",
                value: shape,
            });
        }
        Ok(Self { family, shape })
    }

    pub fn gamma(shape: f64) -> Result<Self> {
        Self::new(Family::Gamma, shape)
    }

    pub fn weibull(shape: f64) -> Result<Self> {
        Self::new(Family::Weibull, shape)
    }

    /// Shape α; always 1 for the exponential family.
    pub fn shape(&self) -> f64 {
        self.shape
    }

    // shape-1 gamma and Weibull take the exponential code path so the three
    // agree exactly
    fn is_exponential(&self) -> bool {
        self.family == Family::Exponential || self.shape == 1.0
    }

    /// A time scale at which most of the mass has been seen.
    pub(crate) fn characteristic_time(&self, rate: f64) -> f64 {
        match self.family {
            Family::Exponential => 1.0 / rate,
            Family::Gamma => self.shape.max(1.0) / rate,
            Family::Weibull => rate.powf(-1.0 / self.shape),
        }
    }
}

fn check_args(rate: f64, t: f64) -> Result<()> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::NonPositive {
            name: "rate",
            value: rate,
        });
    }
    if !(t > 0.0) || t.is_nan() {
        return Err(Error::NonPositive { name: "t", value: t });
    }
    Ok(())
}

fn pdf_unchecked(spec: &DistributionSpec, rate: f64, t: f64) -> f64 {
    if spec.is_exponential() {
        return rate * (-rate * t).exp();
    }
    let a = spec.shape;
    match spec.family {
        Family::Gamma => ((a - 1.0) * t.ln() + a * rate.ln() - rate * t - ln_gamma(a)).exp(),
        Family::Weibull => a * t.powf(a - 1.0) * rate * (-rate * t.powf(a)).exp(),
        Family::Exponential => unreachable!(),
    }
}

fn cdf_unchecked(spec: &DistributionSpec, rate: f64, t: f64) -> f64 {
    if spec.is_exponential() {
        return -(-rate * t).exp_m1();
    }
    match spec.family {
        Family::Gamma => regularized_lower_gamma(spec.shape, rate * t),
        Family::Weibull => -(-rate * t.powf(spec.shape)).exp_m1(),
        Family::Exponential => unreachable!(),
    }
}

fn survival_unchecked(spec: &DistributionSpec, rate: f64, t: f64) -> f64 {
    if spec.is_exponential() {
        return (-rate * t).exp();
    }
    match spec.family {
        Family::Gamma => regularized_upper_gamma(spec.shape, rate * t),
        Family::Weibull => (-rate * t.powf(spec.shape)).exp(),
        Family::Exponential => unreachable!(),
    }
}

/// Density at `t > 0`.
pub fn pdf(spec: &DistributionSpec, rate: f64, t: f64) -> Result<f64> {
    check_args(rate, t)?;
    Ok(pdf_unchecked(spec, rate, t))
}

/// Distribution function at `t > 0` (`t = ∞` gives 1).
pub fn cdf(spec: &DistributionSpec, rate: f64, t: f64) -> Result<f64> {
    check_args(rate, t)?;
    Ok(cdf_unchecked(spec, rate, t))
}

/// Survival function `1 - F(t)`, evaluated without cancellation.
pub fn survival(spec: &DistributionSpec, rate: f64, t: f64) -> Result<f64> {
    check_args(rate, t)?;
    Ok(survival_unchecked(spec, rate, t))
}

fn check_rates(lambda_t: f64, lambda_c: f64) -> Result<()> {
    for (name, value) in [("lambda_t", lambda_t), ("lambda_c", lambda_c)] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::NonPositive { name, value });
        }
    }
    Ok(())
}

/// `P(y = 1 | x) = 1 - ∫ p_t(u) F_c(u) du`, closed form where one exists.
pub fn event_probability(
    t_spec: &DistributionSpec,
    c_spec: &DistributionSpec,
    lambda_t: f64,
    lambda_c: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    check_rates(lambda_t, lambda_c)?;
    match (t_spec.family, c_spec.family) {
        (Family::Exponential, Family::Exponential) => Ok(lambda_t / (lambda_t + lambda_c)),
        (Family::Gamma, Family::Exponential) => {
            Ok((lambda_t / (lambda_t + lambda_c)).powf(t_spec.shape))
        }
        _ => event_probability_quadrature(t_spec, c_spec, lambda_t, lambda_c, quad),
    }
}

/// Same quantity as [`event_probability`] but always by numerical integration.
///
/// Integrates `p_t(u)·(1 - F_c(u))` over `(0, ∞)`, which equals
/// `1 - ∫ p_t F_c` and avoids cancellation when the probability is small.
pub fn event_probability_quadrature(
    t_spec: &DistributionSpec,
    c_spec: &DistributionSpec,
    lambda_t: f64,
    lambda_c: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    check_rates(lambda_t, lambda_c)?;
    let scale = t_spec
        .characteristic_time(lambda_t)
        .min(c_spec.characteristic_time(lambda_c));
    let integral = integrate_semi_infinite(
        |u| {
            if u <= 0.0 {
                return 0.0;
            }
            pdf_unchecked(t_spec, lambda_t, u) * survival_unchecked(c_spec, lambda_c, u)
        },
        scale,
        quad,
    )?;
    Ok(integral.value.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quad() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    fn all_specs(shape: f64) -> [DistributionSpec; 3] {
        [
            DistributionSpec::EXPONENTIAL,
            DistributionSpec::gamma(shape).unwrap(),
            DistributionSpec::weibull(shape).unwrap(),
        ]
    }

    #[test]
    fn pdf_examples() {
        let e = DistributionSpec::EXPONENTIAL;
        assert!((pdf(&e, 1.0, 1e-300).unwrap() - 1.0).abs() < 1e-15);
        let g1 = DistributionSpec::gamma(1.0).unwrap();
        let v = pdf(&g1, 2.0, 0.5).unwrap();
        assert!((v - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(v, pdf(&e, 2.0, 0.5).unwrap());
        let w2 = DistributionSpec::weibull(2.0).unwrap();
        assert!((pdf(&w2, 1.0, 1.0).unwrap() - 0.735_759).abs() < 1e-6);
    }

    #[test]
    fn weibull_pdf_matches_cdf_derivative() {
        let w2 = DistributionSpec::weibull(2.0).unwrap();
        let h = 1e-5;
        let fd = (cdf(&w2, 1.0, 1.0 + h).unwrap() - cdf(&w2, 1.0, 1.0 - h).unwrap()) / (2.0 * h);
        assert!((fd - pdf(&w2, 1.0, 1.0).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn cdf_examples() {
        let e = DistributionSpec::EXPONENTIAL;
        assert_eq!(cdf(&e, 1.0, f64::INFINITY).unwrap(), 1.0);
        assert!((cdf(&e, 1.0, 2f64.ln()).unwrap() - 0.5).abs() < 1e-15);
        let g2 = DistributionSpec::gamma(2.0).unwrap();
        let expected = integrate(|u| pdf(&g2, 1.0, u).unwrap_or(0.0), 0.0, 1.0, &quad())
            .unwrap()
            .value;
        let v = cdf(&g2, 1.0, 1.0).unwrap();
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 0.264_241).abs() < 1e-6);
    }

    #[test]
    fn rejects_non_positive_arguments() {
        let e = DistributionSpec::EXPONENTIAL;
        assert!(pdf(&e, 0.0, 1.0).is_err());
        assert!(pdf(&e, 1.0, 0.0).is_err());
        assert!(cdf(&e, -1.0, 1.0).is_err());
        assert!(DistributionSpec::gamma(0.0).is_err());
        assert!(event_probability(&e, &e, 1.0, 0.0, &quad()).is_err());
    }

    #[test]
    fn event_probability_closed_forms() {
        let e = DistributionSpec::EXPONENTIAL;
        assert_eq!(event_probability(&e, &e, 1.0, 1.0, &quad()).unwrap(), 0.5);
        let g1 = DistributionSpec::gamma(1.0).unwrap();
        let v = event_probability(&g1, &e, 2.0, 1.0, &quad()).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn quadrature_path_matches_closed_forms() {
        let e = DistributionSpec::EXPONENTIAL;
        let v = event_probability_quadrature(&e, &e, 1.0, 1.0, &quad()).unwrap();
        assert!((v - 0.5).abs() < 1e-8);
        let g3 = DistributionSpec::gamma(3.0).unwrap();
        let v = event_probability_quadrature(&g3, &e, 2.0, 1.0, &quad()).unwrap();
        assert!((v - (2.0f64 / 3.0).powi(3)).abs() < 1e-8);
        let g2 = DistributionSpec::gamma(2.0).unwrap();
        let v = event_probability_quadrature(&g2, &g2, 1.0, 1.0, &quad()).unwrap();
        assert!((v - 0.5).abs() < 1e-8);
    }

    #[test]
    fn weibull_exponential_matches_monte_carlo() {
        let w2 = DistributionSpec::weibull(2.0).unwrap();
        let e = DistributionSpec::EXPONENTIAL;
        let p = event_probability(&w2, &e, 1.0, 1.0, &quad()).unwrap();
        let n = 10_000_000u32;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut hits = 0u32;
        for _ in 0..n {
            // S_t(u) = exp(-u^2), S_c(u) = exp(-u)
            let t = (-(1.0 - rng.random::<f64>()).ln()).sqrt();
            let c = -(1.0 - rng.random::<f64>()).ln();
            hits += u32::from(t < c);
        }
        let mc = f64::from(hits) / f64::from(n);
        let se = (mc * (1.0 - mc) / f64::from(n)).sqrt();
        assert!((p - mc).abs() < 3.0 * se, "quadrature {p} vs MC {mc} ± {se}");
    }

    #[test]
    fn event_probability_is_monotone_in_rates() {
        let grid = [0.2, 0.5, 1.0, 2.0, 5.0];
        for t_spec in all_specs(1.7) {
            for c_spec in all_specs(0.8) {
                for &lc in &grid {
                    let ps: Vec<f64> = grid
                        .iter()
                        .map(|&lt| event_probability(&t_spec, &c_spec, lt, lc, &quad()).unwrap())
                        .collect();
                    assert!(ps.windows(2).all(|w| w[0] < w[1]), "{t_spec:?} {c_spec:?} {ps:?}");
                }
                for &lt in &grid {
                    let ps: Vec<f64> = grid
                        .iter()
                        .map(|&lc| event_probability(&t_spec, &c_spec, lt, lc, &quad()).unwrap())
                        .collect();
                    assert!(ps.windows(2).all(|w| w[0] > w[1]), "{t_spec:?} {c_spec:?} {ps:?}");
                }
            }
        }
    }

    #[test]
    fn shape_one_families_equal_exponential() {
        let e = DistributionSpec::EXPONENTIAL;
        let g = DistributionSpec::gamma(1.0).unwrap();
        let w = DistributionSpec::weibull(1.0).unwrap();
        for &(rate, t) in &[(0.3, 0.1), (1.0, 1.0), (7.5, 2.2), (1e-3, 50.0)] {
            let reference = (pdf(&e, rate, t).unwrap(), cdf(&e, rate, t).unwrap());
            for spec in [g, w] {
                assert_eq!((pdf(&spec, rate, t).unwrap(), cdf(&spec, rate, t).unwrap()), reference);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn dispatch_agrees_with_quadrature(
            a_t in 0.5f64..5.0, a_c in 0.5f64..5.0,
            lt in 0.05f64..20.0, lc in 0.05f64..20.0,
            ft in 0usize..3, fc in 0usize..3,
        ) {
            let t_spec = all_specs(a_t)[ft];
            let c_spec = all_specs(a_c)[fc];
            let d = event_probability(&t_spec, &c_spec, lt, lc, &quad()).unwrap();
            let q = event_probability_quadrature(&t_spec, &c_spec, lt, lc, &quad()).unwrap();
            prop_assert!((d - q).abs() <= 1e-7, "{t_spec:?} {c_spec:?} {d} {q}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn pdf_integrates_to_one(shape in 0.5f64..6.0, rate in 0.05f64..20.0, family in 0usize..3) {
            let spec = all_specs(shape)[family];
            let r = integrate_semi_infinite(
                |u| if u > 0.0 { pdf_unchecked(&spec, rate, u) } else { 0.0 },
                spec.characteristic_time(rate),
                &quad(),
            ).unwrap();
            prop_assert!((r.value - 1.0).abs() < 1e-8, "{spec:?} rate={rate} {r:?}");
        }

        #[test]
        fn cdf_is_integral_of_pdf(shape in 0.5f64..6.0, rate in 0.05f64..20.0, q in 0.05f64..3.0, family in 0usize..3) {
            let spec = all_specs(shape)[family];
            let t = q * spec.characteristic_time(rate);
            let r = integrate(|u| if u > 0.0 { pdf_unchecked(&spec, rate, u) } else { 0.0 }, 0.0, t, &quad()).unwrap();
            prop_assert!((r.value - cdf(&spec, rate, t).unwrap()).abs() < 1e-8);
        }
    }
}
