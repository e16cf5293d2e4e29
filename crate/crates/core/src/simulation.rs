//! Synthetic PU survival data with known ground truth.
//!
//! 1. draw `x ~ MVN(mean, cov)`;
//! 2. `λ_t = exp(x'θ_t)`, `λ_c = exp(x'θ_c)`;
//! 3. draw `t ~ Exp(λ_t)`, `c ~ Exp(λ_c)` and set `y = 1(t < c)`;
//! 4. split the subjects at random into `D1` and `D2`;
//! 5. label a random fraction of the `y = 1` subjects in `D1` with `s = 1`;
//! 6. keep a random fraction of `D2` (any `y`) with `s = 0`;
//! 7. concatenate and hide the fields the censoring mode does not record.

use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dot, Dataset, ParamVector, SubjectRecord};
use crate::numeric::logistic;
use crate::random::{exponential, open_unit, Normals};

/// Name of the generator behind every seeded stream.
pub const RNG_ALGORITHM: &str = "chacha20";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub theta_t_true: ParamVector,
    pub theta_c_true: ParamVector,
    pub x_mean: Vec<f64>,
    pub x_cov: Vec<Vec<f64>>,
    pub n_raw: usize,
    pub label_fraction_d1: f64,
    pub keep_fraction_d2: f64,
    pub split_fraction: f64,
    pub c_observed_for_labeled: bool,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            theta_t_true: ParamVector::new(vec![2.0, 1.0]).expect("finite"),
            theta_c_true: ParamVector::new(vec![1.0, 0.5]).expect("finite"),
            x_mean: vec![0.7, 0.4],
            x_cov: vec![vec![0.3, -0.1], vec![-0.1, 0.2]],
            n_raw: 10_000,
            label_fraction_d1: 0.5,
            keep_fraction_d2: 0.5,
            split_fraction: 0.5,
            c_observed_for_labeled: true,
            seed: 1,
        }
    }
}

impl DgpConfig {
    pub fn dimension(&self) -> usize {
        self.x_mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.dimension();
        if p == 0 {
            return Err(Error::InvalidArgument("x_mean must not be empty".into()));
        }
        for len in [self.theta_t_true.len(), self.theta_c_true.len(), self.x_cov.len()] {
            if len != p {
                return Err(Error::DimensionMismatch { expected: p, actual: len });
            }
        }
        if let Some(row) = self.x_cov.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch { expected: p, actual: row.len() });
        }
        for i in 0..p {
            for j in 0..i {
                if self.x_cov[i][j] != self.x_cov[j][i] {
                    return Err(Error::InvalidArgument("x_cov must be symmetric".into()));
                }
            }
        }
        for (name, v) in [
            ("label_fraction_d1", self.label_fraction_d1),
            ("keep_fraction_d2", self.keep_fraction_d2),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidArgument(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "split_fraction must lie in (0, 1), got {}",
                self.split_fraction
            )));
        }
        if self.n_raw == 0 {
            return Err(Error::InvalidArgument("n_raw must be at least 1".into()));
        }
        Ok(())
    }
}

/// One raw subject before labeling, with everything the generator knows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub id: usize,
    /// Full `(t, c, x)` with `true_event` set; `label` is the assigned `s`
    /// (false for subjects not kept).
    pub record: SubjectRecord,
    pub y_true: bool,
    pub lambda_t: f64,
    pub lambda_c: f64,
    pub in_d1: bool,
    /// Whether the subject appears in the released dataset.
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub dataset: Dataset,
    pub truth: Vec<GroundTruthRecord>,
    /// Set when step 5 labeled nobody; θ_t is then unidentifiable.
    pub no_labeled_events: bool,
}

fn cholesky(cov: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let p = cov.len();
    let m = DMatrix::from_fn(p, p, |i, j| cov[i][j]);
    m.cholesky().map(|c| c.unpack()).ok_or(Error::NotPositiveDefinite)
}

struct RawSubject {
    x: Vec<f64>,
    t: f64,
    c: f64,
    lambda_t: f64,
    lambda_c: f64,
}

fn draw_covariates(rng: &mut ChaCha20Rng, normals: &mut Normals, mean: &[f64], l: &DMatrix<f64>) -> Vec<f64> {
    let p = mean.len();
    let z: Vec<f64> = (0..p).map(|_| normals.next(rng)).collect();
    (0..p)
        .map(|i| mean[i] + (0..=i).map(|j| l[(i, j)] * z[j]).sum::<f64>())
        .collect()
}

/// Steps 4–7, shared by the continuous and discrete generators.
fn label(config: &DgpConfig, raw: Vec<RawSubject>, rng: &mut ChaCha20Rng) -> Simulation {
    let n = raw.len();
    let mut order: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), rng);
    let n_d1 = (config.split_fraction * n as f64).round() as usize;
    let (d1, d2) = order.split_at(n_d1);

    let events: Vec<usize> = d1.iter().copied().filter(|&i| raw[i].t < raw[i].c).collect();
    let n_label = (config.label_fraction_d1 * events.len() as f64).round() as usize;
    let mut labeled: Vec<usize> = index::sample(rng, events.len(), n_label)
        .into_iter()
        .map(|k| events[k])
        .collect();
    labeled.sort_unstable();

    let n_keep = (config.keep_fraction_d2 * d2.len() as f64).round() as usize;
    let mut kept: Vec<usize> = index::sample(rng, d2.len(), n_keep)
        .into_iter()
        .map(|k| d2[k])
        .collect();
    kept.sort_unstable();

    let mut in_d1 = vec![false; n];
    d1.iter().for_each(|&i| in_d1[i] = true);
    let mut assigned: Vec<Option<bool>> = vec![None; n];
    labeled.iter().for_each(|&i| assigned[i] = Some(true));
    kept.iter().for_each(|&i| assigned[i] = Some(false));

    let records: Vec<SubjectRecord> = labeled
        .iter()
        .map(|&i| {
            let r = &raw[i];
            let c = config.c_observed_for_labeled.then_some(r.c);
            SubjectRecord::labeled(r.t, c, r.x.clone())
        })
        .chain(kept.iter().map(|&i| SubjectRecord::unlabeled(raw[i].c, raw[i].x.clone())))
        .collect();

    let truth = raw
        .into_iter()
        .enumerate()
        .map(|(id, r)| {
            let y = r.t < r.c;
            GroundTruthRecord {
                id,
                record: SubjectRecord {
                    survival_time: Some(r.t),
                    censoring_time: Some(r.c),
                    label: assigned[id] == Some(true),
                    covariates: r.x,
                    true_event: Some(y),
                },
                y_true: y,
                lambda_t: r.lambda_t,
                lambda_c: r.lambda_c,
                in_d1: in_d1[id],
                selected: assigned[id].is_some(),
            }
        })
        .collect();
    Simulation {
        no_labeled_events: labeled.is_empty(),
        dataset: Dataset::new(records, config.dimension(), config.c_observed_for_labeled),
        truth,
    }
}

/// Runs the exponential data-generating process.
pub fn generate(config: &DgpConfig) -> Result<Simulation> {
    config.validate()?;
    let l = cholesky(&config.x_cov)?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut normals = Normals::new();
    let raw: Vec<RawSubject> = (0..config.n_raw)
        .map(|_| {
            let x = draw_covariates(&mut rng, &mut normals, &config.x_mean, &l);
            let lambda_t = dot(&x, config.theta_t_true.as_slice()).exp();
            let lambda_c = dot(&x, config.theta_c_true.as_slice()).exp();
            let t = exponential(&mut rng, lambda_t);
            let c = exponential(&mut rng, lambda_c);
            RawSubject { x, t, c, lambda_t, lambda_c }
        })
        .collect();
    Ok(label(config, raw, &mut rng))
}

/// Discrete-time variant: `T` is geometric on `{1, 2, …}` with per-period
/// hazard `logistic(intercept + x'θ_t)`, and `C = ⌈Exp(λ_c)⌉`, so that
/// `P(C ≤ k) = 1 − exp(−λ_c k)`. `lambda_t` in the ground truth holds the
/// hazard.
pub fn generate_discrete(config: &DgpConfig, intercept: f64) -> Result<Simulation> {
    config.validate()?;
    if !intercept.is_finite() {
        return Err(Error::InvalidArgument("intercept must be finite".into()));
    }
    let l = cholesky(&config.x_cov)?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut normals = Normals::new();
    let raw: Vec<RawSubject> = (0..config.n_raw)
        .map(|_| {
            let x = draw_covariates(&mut rng, &mut normals, &config.x_mean, &l);
            let hazard = logistic(intercept + dot(&x, config.theta_t_true.as_slice()));
            let lambda_c = dot(&x, config.theta_c_true.as_slice()).exp();
            // geometric by inversion: smallest k with 1 − (1 − h)^k ≥ 1 − U
            let t = if hazard >= 1.0 {
                1.0
            } else {
                (open_unit(&mut rng).ln() / (-hazard).ln_1p()).ceil().max(1.0)
            };
            let c = exponential(&mut rng, lambda_c).ceil().max(1.0);
            RawSubject { x, t, c, lambda_t: hazard, lambda_c }
        })
        .collect();
    Ok(label(config, raw, &mut rng))
}

/// Fraction of raw subjects whose event precedes censoring.
pub fn empirical_event_rate(truth: &[GroundTruthRecord]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::InvalidArgument("ground truth is empty".into()));
    }
    Ok(truth.iter().filter(|g| g.y_true).count() as f64 / truth.len() as f64)
}

/// Ground truth as CSV: `id,t,c,x1..xp,lambda_t,lambda_c,y,s,part`, where
/// `s` is blank for subjects left out of the dataset.
pub fn write_truth_csv<W: Write>(truth: &[GroundTruthRecord], writer: W) -> Result<()> {
    let p = truth.first().map_or(0, |g| g.record.covariates.len());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string(), "t".into(), "c".into()];
    header.extend((1..=p).map(|k| format!("x{k}")));
    header.extend(["lambda_t", "lambda_c", "y", "s", "part"].map(String::from));
    w.write_record(&header)?;
    for g in truth {
        let r = &g.record;
        let mut row = vec![
            g.id.to_string(),
            r.survival_time.map(|v| v.to_string()).unwrap_or_default(),
            r.censoring_time.map(|v| v.to_string()).unwrap_or_default(),
        ];
        row.extend(r.covariates.iter().map(|v| v.to_string()));
        row.push(g.lambda_t.to_string());
        row.push(g.lambda_c.to_string());
        row.push(u8::from(g.y_true).to_string());
        row.push(if g.selected { u8::from(r.label).to_string() } else { String::new() });
        row.push(if g.in_d1 { "D1" } else { "D2" }.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one replicate, a function of the master seed, the sample size
/// and the replicate index only.
pub fn replicate_seed(master: u64, n_raw: usize, replicate: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ n_raw as u64) ^ replicate as u64)
}
