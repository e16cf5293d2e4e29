//! Truncated stick-breaking Dirichlet-process mixtures of gamma survival
//! distributions: weights, mixture density, closed-form event probability
//! under exponential censoring, and prior draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{self, DistributionSpec};
use crate::error::{Error, Result};
use crate::model::{dot, ParamVector};
use crate::quadrature::{integrate_semi_infinite, QuadratureConfig};
use crate::random::Normals;

/// Stick-breaking fractions `V_1..V_K`. `V_K` is ignored (the last stick is
/// closed), so `v` may also hold only `K - 1` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StickBreaking {
    pub v: Vec<f64>,
    pub alpha_dp: f64,
    pub truncation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponents {
    pub shapes: Vec<f64>,
    pub thetas: Vec<ParamVector>,
}

impl MixtureComponents {
    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    fn validate(&self, x: &[f64], pi: &[f64]) -> Result<()> {
        let k = self.len();
        if k == 0 {
            return Err(Error::InvalidArgument("mixture has no components".into()));
        }
        if self.thetas.len() != k || pi.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: if self.thetas.len() != k { self.thetas.len() } else { pi.len() },
            });
        }
        if let Some(&a) = self.shapes.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(Error::NonPositive { name: "shape", value: a });
        }
        if let Some(th) = self.thetas.iter().find(|th| th.len() != x.len()) {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                actual: th.len(),
            });
        }
        if pi.iter().any(|w| !(*w >= 0.0)) || (pi.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument("mixture weights must form a probability vector".into()));
        }
        Ok(())
    }

    fn rate(&self, k: usize, x: &[f64]) -> f64 {
        dot(x, self.thetas[k].as_slice()).exp()
    }
}

/// `π_k = V_k Π_{i<k}(1 − V_i)`, with `π_K` taking the remaining mass.
pub fn stick_weights(sb: &StickBreaking) -> Result<Vec<f64>> {
    let k = sb.truncation;
    if k == 0 {
        return Err(Error::InvalidArgument("truncation must be at least 1".into()));
    }
    if sb.v.len() + 1 < k || sb.v.len() > k {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: sb.v.len(),
        });
    }
    if let Some(&v) = sb.v[..k - 1].iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
        return Err(Error::InvalidArgument(format!("stick fraction {v} outside (0, 1]")));
    }
    let mut weights = Vec::with_capacity(k);
    let mut remaining = 1.0;
    for &v in &sb.v[..k - 1] {
        weights.push(v * remaining);
        remaining *= 1.0 - v;
    }
    let assigned: f64 = weights.iter().sum();
    weights.push((1.0 - assigned).max(0.0));
    Ok(weights)
}

/// `Σ_k π_k · Gamma(t; α_k, λ_k(x))`.
pub fn mixture_density(t: f64, x: &[f64], comps: &MixtureComponents, pi: &[f64]) -> Result<f64> {
    comps.validate(x, pi)?;
    let mut total = 0.0;
    for (k, &w) in pi.iter().enumerate() {
        let spec = DistributionSpec::gamma(comps.shapes[k])?;
        total += w * distributions::pdf(&spec, comps.rate(k, x), t)?;
    }
    Ok(total)
}

/// `Σ_k π_k (λ_k/(λ_k + λ_c))^{α_k}` for exponential censoring at rate `λ_c`.
pub fn mixture_event_probability(
    x: &[f64],
    comps: &MixtureComponents,
    pi: &[f64],
    lambda_c: f64,
) -> Result<f64> {
    comps.validate(x, pi)?;
    let quad = QuadratureConfig::default();
    let mut total = 0.0;
    for (k, &w) in pi.iter().enumerate() {
        let spec = DistributionSpec::gamma(comps.shapes[k])?;
        let p = distributions::event_probability(
            &spec,
            &DistributionSpec::EXPONENTIAL,
            comps.rate(k, x),
            lambda_c,
            &quad,
        )?;
        total += w * p;
    }
    Ok(total)
}

/// The mixture event probability by integrating `p_mix(u)·S_c(u)`.
pub fn mixture_event_probability_quadrature(
    x: &[f64],
    comps: &MixtureComponents,
    pi: &[f64],
    lambda_c: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    comps.validate(x, pi)?;
    if !(lambda_c > 0.0 && lambda_c.is_finite()) {
        return Err(Error::NonPositive {
            name: "lambda_c",
            value: lambda_c,
        });
    }
    let specs: Vec<DistributionSpec> = comps
        .shapes
        .iter()
        .map(|&a| DistributionSpec::gamma(a))
        .collect::<Result<_>>()?;
    let rates: Vec<f64> = (0..comps.len()).map(|k| comps.rate(k, x)).collect();
    let scale = specs
        .iter()
        .zip(&rates)
        .map(|(s, &r)| s.characteristic_time(r))
        .fold(1.0 / lambda_c, f64::min);
    let c_spec = DistributionSpec::EXPONENTIAL;
    let integral = integrate_semi_infinite(
        |u| {
            if u <= 0.0 {
                return 0.0;
            }
            let density: f64 = specs
                .iter()
                .zip(&rates)
                .zip(pi)
                .map(|((s, &r), &w)| w * distributions::pdf(s, r, u).unwrap_or(0.0))
                .sum();
            density * distributions::survival(&c_spec, lambda_c, u).unwrap_or(0.0)
        },
        scale,
        quad,
    )?;
    Ok(integral.value.clamp(0.0, 1.0))
}

/// Base measure and truncation for prior draws. Component coefficients are
/// i.i.d. `N(theta_mean, theta_sd²)`; shapes are `LogNormal(shape_log_mean,
/// shape_log_sd²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpPriorConfig {
    pub alpha_dp: f64,
    pub truncation: usize,
    pub dimension: usize,
    pub theta_mean: f64,
    pub theta_sd: f64,
    pub shape_log_mean: f64,
    pub shape_log_sd: f64,
}

impl Default for DpPriorConfig {
    fn default() -> Self {
        Self {
            alpha_dp: 1.0,
            truncation: 20,
            dimension: 2,
            theta_mean: 0.0,
            theta_sd: 1.0,
            shape_log_mean: 0.0,
            shape_log_sd: 0.5,
        }
    }
}

impl DpPriorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_dp > 0.0 && self.alpha_dp.is_finite()) {
            return Err(Error::NonPositive {
                name: "alpha_dp",
                value: self.alpha_dp,
            });
        }
        if self.truncation == 0 || self.dimension == 0 {
            return Err(Error::InvalidArgument("truncation and dimension must be at least 1".into()));
        }
        if !(self.theta_sd >= 0.0 && self.shape_log_sd >= 0.0)
            || !self.theta_mean.is_finite()
            || !self.shape_log_mean.is_finite()
        {
            return Err(Error::InvalidArgument("base measure parameters must be finite, sds ≥ 0".into()));
        }
        Ok(())
    }

    /// Upper bound `(α/(1+α))^K` on the expected mass beyond the truncation.
    pub fn tail_mass_bound(&self) -> f64 {
        (self.alpha_dp / (1.0 + self.alpha_dp)).powi(self.truncation as i32)
    }
}

/// Draws stick fractions `V_k ~ Beta(1, α)` and component parameters from
/// the base measure.
pub fn sample_prior(cfg: &DpPriorConfig, seed: u64) -> Result<(StickBreaking, MixtureComponents)> {
    cfg.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let k = cfg.truncation;
    // inverse CDF of Beta(1, α) with U ∈ [0, 1), so V ∈ (0, 1]
    let v: Vec<f64> = (0..k)
        .map(|_| 1.0 - rng.random::<f64>().powf(1.0 / cfg.alpha_dp))
        .collect();
    let mut normals = Normals::new();
    let mut shapes = Vec::with_capacity(k);
    let mut thetas = Vec::with_capacity(k);
    for _ in 0..k {
        shapes.push((cfg.shape_log_mean + cfg.shape_log_sd * normals.next(&mut rng)).exp());
        let th: Vec<f64> = (0..cfg.dimension)
            .map(|_| cfg.theta_mean + cfg.theta_sd * normals.next(&mut rng))
            .collect();
        thetas.push(ParamVector::new(th)?);
    }
    Ok((
        StickBreaking {
            v,
            alpha_dp: cfg.alpha_dp,
            truncation: k,
        },
        MixtureComponents { shapes, thetas },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sb(v: Vec<f64>, k: usize) -> StickBreaking {
        StickBreaking {
            v,
            alpha_dp: 1.0,
            truncation: k,
        }
    }

    fn comps(shapes: &[f64], thetas: &[[f64; 2]]) -> MixtureComponents {
        MixtureComponents {
            shapes: shapes.to_vec(),
            thetas: thetas.iter().map(|t| ParamVector::new(t.to_vec()).unwrap()).collect(),
        }
    }

    #[test]
    fn weight_examples() {
        assert_eq!(stick_weights(&sb(vec![], 1)).unwrap(), vec![1.0]);
        assert_eq!(stick_weights(&sb(vec![0.5], 2)).unwrap(), vec![0.5, 0.5]);
        assert_eq!(stick_weights(&sb(vec![0.5, 0.5], 3)).unwrap(), vec![0.5, 0.25, 0.25]);
        assert_eq!(stick_weights(&sb(vec![0.5, 0.5, 0.3], 3)).unwrap(), vec![0.5, 0.25, 0.25]);
        assert!(stick_weights(&sb(vec![0.0, 0.5], 3)).is_err());
        assert!(stick_weights(&sb(vec![0.5], 4)).is_err());
    }

    #[test]
    fn identical_components_collapse() {
        let x = [0.3, -0.2];
        let one = comps(&[2.5], &[[0.4, 1.0]]);
        let two = comps(&[2.5, 2.5], &[[0.4, 1.0], [0.4, 1.0]]);
        for t in [0.1, 0.7, 3.0] {
            let a = mixture_density(t, &x, &one, &[1.0]).unwrap();
            let b = mixture_density(t, &x, &two, &[0.3, 0.7]).unwrap();
            assert!((a - b).abs() <= 1e-15 * a.max(1.0), "{a} {b}");
        }
    }

    #[test]
    fn event_probability_examples() {
        let x = [0.0, 0.0];
        let single = comps(&[1.0], &[[0.0, 0.0]]);
        assert_eq!(mixture_event_probability(&x, &single, &[1.0], 3.0).unwrap(), 0.25);
        let pair = comps(&[1.0, 1.0], &[[0.0, 0.0], [0.0, 0.0]]);
        assert_eq!(mixture_event_probability(&x, &pair, &[0.5, 0.5], 1.0).unwrap(), 0.5);
    }

    #[test]
    fn two_components_integrate_to_one() {
        let x = [0.5, 1.0];
        let c = comps(&[0.7, 3.0], &[[1.0, -0.5], [-0.3, 0.2]]);
        let pi = [0.35, 0.65];
        let r = integrate_semi_infinite(
            |u| if u > 0.0 { mixture_density(u, &x, &c, &pi).unwrap() } else { 0.0 },
            1.0,
            &QuadratureConfig {
                abs_tolerance: 1e-12,
                rel_tolerance: 1e-12,
                max_subdivisions: 500,
            },
        )
        .unwrap();
        assert!((r.value - 1.0).abs() < 1e-8, "{r:?}");
    }

    #[test]
    fn prior_is_deterministic_and_validated() {
        let cfg = DpPriorConfig::default();
        assert_eq!(sample_prior(&cfg, 5).unwrap(), sample_prior(&cfg, 5).unwrap());
        assert_ne!(sample_prior(&cfg, 5).unwrap(), sample_prior(&cfg, 6).unwrap());
        let (s, c) = sample_prior(&cfg, 5).unwrap();
        assert_eq!(s.v.len(), 20);
        assert_eq!(c.len(), 20);
        assert!(s.v.iter().all(|v| *v > 0.0 && *v <= 1.0));
        let bad = DpPriorConfig {
            alpha_dp: 0.0,
            ..cfg
        };
        assert!(sample_prior(&bad, 1).is_err());
        assert!((DpPriorConfig::default().tail_mass_bound() - 0.5f64.powi(20)).abs() < 1e-20);
    }

    #[test]
    fn small_concentration_puts_mass_on_first_stick() {
        let cfg = DpPriorConfig {
            alpha_dp: 0.01,
            ..Default::default()
        };
        let n = 1000;
        let first: Vec<f64> = (0..n as u64)
            .map(|seed| stick_weights(&sample_prior(&cfg, seed).unwrap().0).unwrap()[0])
            .collect();
        let mean = first.iter().sum::<f64>() / n as f64;
        // E[V] = 1/(1+α), Var[V] = α/((1+α)²(2+α))
        let a = cfg.alpha_dp;
        let expected = 1.0 / (1.0 + a);
        let se = (a / ((1.0 + a).powi(2) * (2.0 + a)) / n as f64).sqrt();
        assert!((mean - expected).abs() < 3.0 * se, "{mean} vs {expected} ± {se}");
        assert!(mean > 0.98, "{mean}");
    }

    #[test]
    fn expected_head_mass() {
        let cfg = DpPriorConfig {
            alpha_dp: 1.0,
            truncation: 50,
            ..Default::default()
        };
        let n = 10_000u64;
        let draws: Vec<f64> = (0..n)
            .map(|seed| stick_weights(&sample_prior(&cfg, seed).unwrap().0).unwrap()[..25].iter().sum())
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let target = 1.0 - 0.5f64.powi(25);
        // the head mass is nearly always 1, so allow a floor on the error
        assert!((mean - target).abs() <= (3.0 * (var / n as f64).sqrt()).max(1e-9), "{mean} {target}");
    }
}
