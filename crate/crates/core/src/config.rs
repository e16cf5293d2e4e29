//! Flat `key = value` configuration files.
//!
//! ```text
//! # paper design
//! theta_t_true = 2, 1
//! theta_c_true = 1, 0.5
//! x_mean = 0.7, 0.4
//! x_cov = 0.3, -0.1; -0.1, 0.2
//! n_raw = 10000, 3000
//! replicates = 1000
//! seed = 20240501
//! ```
//!
//! Vectors are comma separated, matrix rows are separated by `;`, and `#`
//! starts a comment. Unknown and repeated keys are errors.

use std::collections::BTreeSet;
use std::path::Path;
use std::str::FromStr;

use crate::dp_mixture::DpPriorConfig;
use crate::error::{Error, Result};
use crate::estimator::ConfidenceLevel;
use crate::experiments::ExperimentConfig;
use crate::model::{ModelVariant, ParamVector};
use crate::simulation::RNG_ALGORITHM;

/// Everything a config file can set.
#[derive(Debug, Clone, PartialEq)]
#[derive(Default)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub dp: DpPriorConfig,
}


pub const KEYS: &[&str] = &[
    "theta_t_true",
    "theta_c_true",
    "x_mean",
    "x_cov",
    "n_raw",
    "label_fraction_d1",
    "keep_fraction_d2",
    "split_fraction",
    "c_observed_for_labeled",
    "seed",
    "rng",
    "replicates",
    "variants",
    "levels",
    "workers",
    "outer_tolerance",
    "max_outer_iters",
    "inner_gradient_tolerance",
    "inner_max_iterations",
    "dp_alpha",
    "dp_truncation",
    "dp_theta_mean",
    "dp_theta_sd",
    "dp_shape_log_mean",
    "dp_shape_log_sd",
];

fn parse_scalar<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Config {
        line,
        message: format!("{key}: cannot parse {value:?}"),
    })
}

fn parse_list<T: FromStr>(line: usize, key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| parse_scalar(line, key, v)).collect()
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config {
            line,
            message: format!("{key}: expected true or false, got {other:?}"),
        }),
    }
}

fn wrap<T>(line: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Config {
        line,
        message: e.to_string(),
    })
}

/// Parses config text on top of the defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut seen = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::Config {
                line,
                message: format!("expected key = value, got {content:?}"),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(Error::Config {
                line,
                message: format!("unknown key {key:?}"),
            });
        }
        if !seen.insert(key.to_string()) {
            return Err(Error::Config {
                line,
                message: format!("{key} given twice"),
            });
        }
        let e = &mut cfg.experiment;
        match key {
            "theta_t_true" => e.dgp.theta_t_true = wrap(line, ParamVector::new(parse_list(line, key, value)?))?,
            "theta_c_true" => e.dgp.theta_c_true = wrap(line, ParamVector::new(parse_list(line, key, value)?))?,
            "x_mean" => e.dgp.x_mean = parse_list(line, key, value)?,
            "x_cov" => {
                e.dgp.x_cov = value
                    .split(';')
                    .map(|row| parse_list(line, key, row))
                    .collect::<Result<_>>()?
            }
            "n_raw" => {
                e.n_raw = parse_list(line, key, value)?;
                e.dgp.n_raw = e.n_raw[0];
            }
            "label_fraction_d1" => e.dgp.label_fraction_d1 = parse_scalar(line, key, value)?,
            "keep_fraction_d2" => e.dgp.keep_fraction_d2 = parse_scalar(line, key, value)?,
            "split_fraction" => e.dgp.split_fraction = parse_scalar(line, key, value)?,
            "c_observed_for_labeled" => e.dgp.c_observed_for_labeled = parse_bool(line, key, value)?,
            "seed" => e.dgp.seed = parse_scalar(line, key, value)?,
            "rng" => {
                if value != RNG_ALGORITHM {
                    return Err(Error::Config {
                        line,
                        message: format!("rng {value:?} unsupported (only {RNG_ALGORITHM})"),
                    });
                }
            }
            "replicates" => e.replicates = parse_scalar(line, key, value)?,
            "variants" => {
                e.variants = if value == "all" {
                    ModelVariant::ALL.to_vec()
                } else {
                    value
                        .split(',')
                        .map(|v| wrap(line, v.trim().parse::<ModelVariant>()))
                        .collect::<Result<_>>()?
                }
            }
            "levels" => {
                e.levels = parse_list::<f64>(line, key, value)?
                    .into_iter()
                    .map(|l| wrap(line, ConfidenceLevel::from_level(l)))
                    .collect::<Result<_>>()?
            }
            "workers" => e.workers = parse_scalar(line, key, value)?,
            "outer_tolerance" => e.fit.outer_tolerance = parse_scalar(line, key, value)?,
            "max_outer_iters" => e.fit.max_outer_iters = parse_scalar(line, key, value)?,
            "inner_gradient_tolerance" => e.fit.inner.gradient_tolerance = parse_scalar(line, key, value)?,
            "inner_max_iterations" => e.fit.inner.max_iterations = parse_scalar(line, key, value)?,
            "dp_alpha" => cfg.dp.alpha_dp = parse_scalar(line, key, value)?,
            "dp_truncation" => cfg.dp.truncation = parse_scalar(line, key, value)?,
            "dp_theta_mean" => cfg.dp.theta_mean = parse_scalar(line, key, value)?,
            "dp_theta_sd" => cfg.dp.theta_sd = parse_scalar(line, key, value)?,
            "dp_shape_log_mean" => cfg.dp.shape_log_mean = parse_scalar(line, key, value)?,
            "dp_shape_log_sd" => cfg.dp.shape_log_sd = parse_scalar(line, key, value)?,
            _ => unreachable!("key list and match arms agree"),
        }
    }
    cfg.dp.dimension = cfg.experiment.dgp.dimension();
    cfg.experiment.validate()?;
    cfg.dp.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}
